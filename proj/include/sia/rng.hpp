#pragma once

// Deterministic random streams and content hashing.
//
// Streams are built on std::mt19937_64, whose output sequence is fixed by the
// standard. The <random> distributions are not, so the uniform, normal and
// categorical draws below are implemented directly to keep event logs
// byte-identical across standard libraries.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>

#include <Eigen/Core>

namespace sia {

std::uint64_t splitmix64(std::uint64_t x);

/// Derives a stream id from a seed and a list of coordinates
/// (generation, instance index, ...).
std::uint64_t derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> coords);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
    return Rng(derive_stream(seed, coords));
  }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller (one output per call).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);
  /// Inverse-CDF draw from a probability vector.
  std::size_t categorical(std::span<const double> probs);

  /// Total number of draws made by every Rng in the process. Used by tests
  /// to prove that replay does not sample.
  static std::uint64_t total_draws();

 private:
  std::mt19937_64 engine_;
};

/// 64-bit FNV-1a.
class Fnv1a {
 public:
  Fnv1a& bytes(const void* data, std::size_t size);
  Fnv1a& text(std::string_view s) { return bytes(s.data(), s.size()); }
  template <typename T>
  Fnv1a& value(const T& v) {
    return bytes(&v, sizeof(T));
  }
  template <typename Derived>
  Fnv1a& matrix(const Eigen::DenseBase<Derived>& m) {
    const auto rows = static_cast<std::int64_t>(m.rows());
    const auto cols = static_cast<std::int64_t>(m.cols());
    value(rows).value(cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) value(m(i, j));
    }
    return *this;
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
};

std::string hex64(std::uint64_t v);

}  // namespace sia
