#pragma once

#include <string>

#include "fit/autodiff.hpp"
#include "fit/rng.hpp"

namespace fit {

// Resolves parameter names under a dotted prefix to leaves on a tape.
struct Scope {
  ad::Tape* tape = nullptr;
  const ParamStore* store = nullptr;
  std::string prefix;

  ad::Var operator()(const std::string& name) const {
    const std::string full = prefix + name;
    return tape->param(full, store->at(full));
  }
  Scope sub(const std::string& name) const { return {tape, store, prefix + name + "."}; }
  ad::Var none() const { return tape->constant(Tensor()); }
};

// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor fan_in_uniform(const Shape& dims, std::size_t fan_in, Rng& rng);

// "<name>.w" (cout, cin, k, k) and zero "<name>.b" (cout).
void init_conv(ParamStore& store, const std::string& name, std::size_t cout, std::size_t cin,
               std::size_t k, Rng& rng);
// "<name>.w" (cout, cin) and, when with_bias, zero "<name>.b" (cout).
void init_linear(ParamStore& store, const std::string& name, std::size_t cout, std::size_t cin,
                 Rng& rng, bool with_bias = true);

// Copies every entry under `prefix` into `dst` with the prefix replaced.
void copy_prefixed(const ParamStore& src, const std::string& prefix, ParamStore& dst,
                   const std::string& new_prefix);

}  // namespace fit
