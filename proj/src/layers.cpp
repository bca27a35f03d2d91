#include "fit/layers.hpp"

#include <cmath>

namespace fit {

Tensor fan_in_uniform(const Shape& dims, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(dims);
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

void init_conv(ParamStore& store, const std::string& name, std::size_t cout, std::size_t cin,
               std::size_t k, Rng& rng) {
  store.set(name + ".w", fan_in_uniform({cout, cin, k, k}, cin * k * k, rng));
  store.set(name + ".b", Tensor({cout}));
}

void init_linear(ParamStore& store, const std::string& name, std::size_t cout, std::size_t cin,
                 Rng& rng, bool with_bias) {
  store.set(name + ".w", fan_in_uniform({cout, cin}, cin, rng));
  if (with_bias) store.set(name + ".b", Tensor({cout}));
}

void copy_prefixed(const ParamStore& src, const std::string& prefix, ParamStore& dst,
                   const std::string& new_prefix) {
  for (const auto& [name, t] : src) {
    if (name.rfind(prefix, 0) == 0) dst.set(new_prefix + name.substr(prefix.size()), t);
  }
}

}  // namespace fit
