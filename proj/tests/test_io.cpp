#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "slrvb/fit_document.hpp"
#include "slrvb/online.hpp"
#include "slrvb/models/sv.hpp"
#include "slrvb/zoo.hpp"
#include "test_util.hpp"

using namespace slrvb;
using slrvb::test::vec;

TEST(FormatDouble, RoundTrips) {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double v = std::ldexp(rng.normal(), static_cast<int>(rng.uniform_open() * 200) - 100);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(SeriesCsv, ParsesWithAndWithoutHeader) {
  std::istringstream a("y\n1\n2.5\n\n-3e-2\r\n");
  EXPECT_EQ(parse_series_csv(a), (std::vector<double>{1.0, 2.5, -0.03}));
  std::istringstream b("4\n5\n");
  EXPECT_EQ(parse_series_csv(b), (std::vector<double>{4.0, 5.0}));
  std::istringstream bad("y\n1\nabc\n");
  EXPECT_THROW(parse_series_csv(bad), SchemaError);
  std::ostringstream out;
  write_series_csv(out, {0.1, -2.0});
  std::istringstream back(out.str());
  EXPECT_EQ(parse_series_csv(back), (std::vector<double>{0.1, -2.0}));
}

TEST(TableCsv, ParsesHeaderAndRows) {
  std::istringstream in("mu,phi\n1,2\n3, 4\n");
  const Table t = parse_table_csv(in);
  EXPECT_EQ(t.header, (std::vector<std::string>{"mu", "phi"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], 4.0);
  std::istringstream ragged("a,b\n1\n");
  EXPECT_THROW(parse_table_csv(ragged), SchemaError);
  std::istringstream empty("");
  EXPECT_THROW(parse_table_csv(empty), SchemaError);
}

namespace {

struct Fitted {
  ZooChoice choice;
  Model model;
  ApproximationGraph graph;
  FitResult fit;
};

Fitted fit_small_sv() {
  Rng rng(3);
  SvParams p;
  p.T = 30;
  Fitted f{{"sv-c", {}}, {}, {}, {}};
  f.model = make_zoo_model(f.choice, simulate_sv(p, rng).y);
  f.graph = build_approximation(f.model.spec);
  OnlineConfig cfg;
  cfg.max_iters = 300;
  f.fit = fit_online(f.model, f.graph, cfg);
  return f;
}

}  // namespace

TEST(FitDocumentTest, RoundTripIsExact) {
  const Fitted f = fit_small_sv();
  const FitDocument d = make_fit_document(f.choice, f.model, f.graph, f.fit);
  const std::string text = dump_fit_document(d);
  const FitDocument back = parse_fit_document(text);
  EXPECT_EQ(dump_fit_document(back), text);
  EXPECT_EQ(back.state(f.graph), f.fit.state);
  EXPECT_EQ(back.data, f.model.data);
  EXPECT_EQ(back.model.name, "sv-c");
  EXPECT_EQ(back.trace_length, f.fit.trace.size());
  EXPECT_LE(back.trace.size(), kTraceKeep + 1);
  EXPECT_EQ(std::get<0>(back.trace.back()), static_cast<int>(f.fit.trace.size()));
}

TEST(FitDocumentTest, RejectsWrongSchema) {
  const Fitted f = fit_small_sv();
  auto j = to_json(make_fit_document(f.choice, f.model, f.graph, f.fit));
  j["schema_version"] = 2;
  EXPECT_THROW(parse_fit_document(j.dump()), SchemaError);
  j.erase("schema_version");
  EXPECT_THROW(parse_fit_document(j.dump()), SchemaError);
  EXPECT_THROW(parse_fit_document("{not json"), SchemaError);
  j = to_json(make_fit_document(f.choice, f.model, f.graph, f.fit));
  j.erase("blocks");
  EXPECT_THROW(parse_fit_document(j.dump()), SchemaError);
}

TEST(FitDocumentTest, StateChecksBlocksAgainstGraph) {
  const Fitted f = fit_small_sv();
  FitDocument d = make_fit_document(f.choice, f.model, f.graph, f.fit);
  const Model other = make_zoo_model({"sv-a", {}}, f.model.data);
  EXPECT_THROW(d.state(build_approximation(other.spec)), SchemaError);
  d.blocks[1].coeffs.pop_back();
  EXPECT_THROW(d.state(f.graph), SchemaError);
}

TEST(FitDocumentTest, ConjugateSettingsSurvive) {
  const ZooChoice c{"conjugate", {0.5, 2.0, 0.25}};
  const Model m = make_zoo_model(c, {1.0, 2.0});
  const ApproximationGraph g = build_approximation(m.spec);
  FitResult r;
  r.method = "online";
  r.state = init_state(g);
  const FitDocument back = parse_fit_document(dump_fit_document(make_fit_document(c, m, g, r)));
  EXPECT_EQ(back.model.conjugate.prior_mean, 0.5);
  EXPECT_EQ(back.model.conjugate.prior_var, 2.0);
  EXPECT_EQ(back.model.conjugate.obs_var, 0.25);
}
