#pragma once

#include <cstdint>

namespace panoscan {

/// Counter-based random stream keyed by (seed, stream index). Output depends
/// only on the key and the number of draws, so independent streams can be
/// consumed in any order or on any thread.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();
  /// Standard Gumbel, -log(-log(U)) with U clamped to [1e-12, 1 - 1e-12].
  double gumbel();

  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace panoscan
