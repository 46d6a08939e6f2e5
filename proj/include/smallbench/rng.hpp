#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace smallbench {

/// Seeded pseudo-random generator: xoshiro256** with its state expanded from
/// a 64-bit seed by splitmix64.
///
/// Integer draws are bit-identical on every platform. Floating draws use the
/// top 53 bits of a 64-bit word, so `uniform()` is platform-independent too;
/// `normal()` goes through libm (`log`, `cos`) and is only guaranteed
/// reproducible on a given libm.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0);

  static Rng from_state(const State& state);

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();

  /// Uniform in [0, n). Rejection sampling, no modulo bias. n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();

  /// Normal with the given standard deviation, redrawn until within
  /// +/- 2 standard deviations.
  double truncated_normal(double stddev);

  /// Independent generator for a named sub-stream; does not advance *this.
  [[nodiscard]] Rng fork(std::uint64_t stream) const;

  const State& state() const { return state_; }

  /// Hex text form used in checkpoint records.
  std::string to_string() const;
  static Rng parse(const std::string& text);

  friend bool operator==(const Rng& a, const Rng& b) { return a.state_ == b.state_; }

 private:
  State state_{};
};

/// splitmix64 finalizer; combines two words into a well-mixed seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace smallbench
