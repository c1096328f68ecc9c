#include "xsrank/rng.hpp"

#include <cmath>
#include <numbers>

namespace xsrank::nk {

double Rng::normal() noexcept {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

Rng Rng::split(std::uint64_t stream_id) const noexcept {
  return Rng(FromKey{}, mix(key_ ^ mix(stream_id + kGamma)));
}

Rng Rng::split(std::string_view name) const noexcept {
  // FNV-1a over the name, then the integer split.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return split(h);
}

}  // namespace xsrank::nk
