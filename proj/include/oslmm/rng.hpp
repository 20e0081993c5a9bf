#ifndef OSLMM_RNG_HPP
#define OSLMM_RNG_HPP

#include <cstdint>
#include <random>

#include "oslmm/types.hpp"

namespace oslmm {

/// Single seedable source of randomness. Every sampler draws through one of
/// these, so a (seed, config) pair fixes a chain exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  void seed(std::uint64_t s) { engine_.seed(s); }

  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  double normal() { return normal_(engine_); }

  /// Gamma(shape, rate) draw, density proportional to x^{shape-1} e^{-rate x}.
  double gamma(double shape, double rate) {
    std::gamma_distribution<double> g(shape, 1.0 / rate);
    return g(engine_);
  }

  /// InverseGamma(shape, rate) draw, density proportional to
  /// x^{-shape-1} e^{-rate/x}; mean rate / (shape - 1) for shape > 1.
  double inverse_gamma(double shape, double rate) {
    double g = gamma(shape, rate);
    while (g <= 0.0) g = gamma(shape, rate);
    return 1.0 / g;
  }

  Vector normal_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

  /// Stable sub-stream for independent work units (e.g. per-trial noise).
  Rng fork(std::uint64_t salt) {
    std::uint64_t base = engine_();
    return Rng(base ^ (salt * 0x9e3779b97f4a7c15ULL));
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace oslmm

#endif
