#include "cslab/envs/environment.hpp"

#include "cslab/common/errors.hpp"

namespace cslab::envs {

std::vector<double> encode(const Observation& obs, const ObservationSpec& spec) {
  if (spec.categorical()) {
    const int s = symbol_of(obs);
    if (s < 0 || s >= spec.size) {
      throw ValidationError("symbol " + std::to_string(s) + " outside alphabet of size " +
                            std::to_string(spec.size));
    }
    std::vector<double> v(std::size_t(spec.size), 0.0);
    v[std::size_t(s)] = 1.0;
    return v;
  }
  const auto* values = std::get_if<std::vector<double>>(&obs);
  if (!values || int(values->size()) != spec.size) {
    throw ValidationError("real observation does not match spec dimension " +
                          std::to_string(spec.size));
  }
  return *values;
}

int symbol_of(const Observation& obs) {
  const int* s = std::get_if<int>(&obs);
  if (!s) throw ValidationError("expected a discrete observation");
  return *s;
}

}  // namespace cslab::envs
