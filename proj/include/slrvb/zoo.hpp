#ifndef SLRVB_ZOO_HPP
#define SLRVB_ZOO_HPP

// Built-in models by name.

#include <optional>
#include <string>
#include <vector>

#include "slrvb/errors.hpp"
#include "slrvb/model.hpp"
#include "slrvb/models/conjugate.hpp"
#include "slrvb/models/sv.hpp"

namespace slrvb {

struct ZooChoice {
  std::string name;
  /// conjugate only
  ConjugateInfo conjugate;
};

inline const std::vector<std::string>& zoo_names() {
  static const std::vector<std::string> names{"conjugate", "sv-a", "sv-b", "sv-c"};
  return names;
}

inline std::optional<SvVariant> sv_variant_of(const std::string& name) {
  if (name == "sv-a") return SvVariant::A;
  if (name == "sv-b") return SvVariant::B;
  if (name == "sv-c") return SvVariant::C;
  return std::nullopt;
}

inline Model make_zoo_model(const ZooChoice& choice, std::vector<double> data) {
  if (choice.name == "conjugate")
    return make_conjugate_normal(choice.conjugate.prior_mean, choice.conjugate.prior_var, choice.conjugate.obs_var,
                                 std::move(data));
  if (auto v = sv_variant_of(choice.name)) return make_sv_model(*v, std::move(data));
  throw std::invalid_argument("unknown model '" + choice.name + "'");
}

}  // namespace slrvb

#endif  // SLRVB_ZOO_HPP
