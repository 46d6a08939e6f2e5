#include "smallbench/rng.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace smallbench {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ rotl(b, 17) ^ 0x5851f42d4c957f2dULL;
  splitmix64(x);
  return splitmix64(x);
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& word : state_) word = splitmix64(x);
}

Rng Rng::from_state(const State& state) {
  if (state == State{}) throw std::invalid_argument("rng state must not be all zero");
  Rng r;
  r.state_ = state;
  return r;
}

std::uint64_t Rng::next_u64() {
  auto& s = state_;
  const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
  const std::uint64_t t = s[1] << 17;
  s[2] ^= s[0];
  s[3] ^= s[1];
  s[1] ^= s[2];
  s[0] ^= s[3];
  s[2] ^= t;
  s[3] = rotl(s[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double Rng::normal() {
  // 1 - uniform() is in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double stddev) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= 2.0) return z * stddev;
  }
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(mix_seed(state_[0] ^ state_[2], mix_seed(state_[1] ^ state_[3], stream)));
}

std::string Rng::to_string() const {
  char buf[4 * 17];
  std::snprintf(buf, sizeof buf, "%016llx:%016llx:%016llx:%016llx",
                static_cast<unsigned long long>(state_[0]), static_cast<unsigned long long>(state_[1]),
                static_cast<unsigned long long>(state_[2]), static_cast<unsigned long long>(state_[3]));
  return buf;
}

Rng Rng::parse(const std::string& text) {
  State s{};
  unsigned long long w[4];
  if (text.size() != 67 || std::sscanf(text.c_str(), "%16llx:%16llx:%16llx:%16llx", &w[0], &w[1], &w[2], &w[3]) != 4)
    throw std::invalid_argument("malformed rng state '" + text + "'");
  for (int i = 0; i < 4; ++i) s[i] = w[i];
  return from_state(s);
}

}  // namespace smallbench
