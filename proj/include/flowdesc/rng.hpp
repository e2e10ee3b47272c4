#ifndef FLOWDESC_RNG_HPP_
#define FLOWDESC_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <sstream>
#include <string>

namespace flowdesc
{

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for a (base, key...) tuple. Every stream in the pipeline is derived this way
/// so that results do not depend on evaluation order.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys)
{
  std::uint64_t h = splitmix64(base);
  for (auto k : keys) {
    h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  }
  return h;
}

inline std::string rng_state(const Rng & rng)
{
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng rng_from_state(const std::string & state)
{
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  return rng;
}

}  // namespace flowdesc

#endif  // FLOWDESC_RNG_HPP_
