#include "rlcf/core/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace rlcf {

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw std::runtime_error("malformed RNG state");
}

}  // namespace rlcf
