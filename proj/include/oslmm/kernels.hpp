#ifndef OSLMM_KERNELS_HPP
#define OSLMM_KERNELS_HPP

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <array>
#include <cmath>

#include "oslmm/types.hpp"

namespace oslmm {

/// Squared-exponential covariance parameters. The latent-process family is
/// pinned to variance = 1 for identifiability; other families float.
struct KernelParams {
  double variance = 1.0;
  double length_scale = 1.0;

  void validate() const {
    if (!(variance >= 0.0) || !std::isfinite(variance))
      throw config_error("kernel variance must be a nonnegative real");
    if (!(length_scale > 0.0) || !std::isfinite(length_scale))
      throw config_error("kernel length scale must be a positive real");
  }
};

namespace detail {
template <typename Scalar>
Scalar se_eval(Scalar distance, const KernelParams& params) {
  const Scalar ls = static_cast<Scalar>(params.length_scale);
  return static_cast<Scalar>(params.variance) *
         std::exp(-distance * distance / (2 * ls * ls));
}
}  // namespace detail

/// k(t1, t2) = variance * exp(-(t1 - t2)^2 / (2 * length_scale^2))
template <typename Scalar>
Scalar se_kernel(Scalar t1, Scalar t2, const KernelParams& params) {
  if (!std::isfinite(t1) || !std::isfinite(t2))
    throw config_error("se_kernel inputs must be finite");
  params.validate();
  return detail::se_eval<Scalar>(t1 - t2, params);
}

/// True when the grid spacing is uniform to within rtol of the span.
template <typename Derived>
bool is_evenly_spaced(const Eigen::MatrixBase<Derived>& times, double rtol = 1e-12) {
  const Eigen::Index n = times.size();
  if (n < 3) return n >= 1;
  const double step = (times[n - 1] - times[0]) / static_cast<double>(n - 1);
  for (Eigen::Index i = 1; i < n; ++i)
    if (std::abs((times[i] - times[i - 1]) - step) > rtol * std::abs(times[n - 1] - times[0]))
      return false;
  return true;
}

/// First row (g_0 .. g_{T-1}) of the SE Gram matrix on an even grid of the
/// given step, g_d = k(d * step, 0).
template <typename Scalar = double>
Eigen::Vector<Scalar, Eigen::Dynamic> se_gram_first_row(Eigen::Index n, Scalar step,
                                                        const KernelParams& params) {
  params.validate();
  Eigen::Vector<Scalar, Eigen::Dynamic> row(n);
  for (Eigen::Index d = 0; d < n; ++d)
    row[d] = detail::se_eval<Scalar>(static_cast<Scalar>(d) * step, params);
  return row;
}

/// SE Gram matrix over the input grid. Construction is mirrored so the
/// result is bitwise symmetric; on an evenly spaced grid entries are filled
/// from the first row so the Toeplitz identity G(i,j) == G(i+1,j+1) holds
/// exactly.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> gram(
    const Eigen::MatrixBase<Derived>& inputs, const KernelParams& params) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = inputs.size();
  if (n < 1) throw config_error("gram requires at least one input");
  if (!inputs.allFinite()) throw config_error("gram inputs must be finite");
  params.validate();

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> g(n, n);
  if (is_evenly_spaced(inputs)) {
    const Scalar step = n > 1 ? (inputs[n - 1] - inputs[0]) / static_cast<Scalar>(n - 1)
                              : Scalar(0);
    const auto row = se_gram_first_row<Scalar>(n, step, params);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) g(i, j) = row[std::abs(i - j)];
    return g;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, i) = detail::se_eval<Scalar>(Scalar(0), params);
    for (Eigen::Index j = 0; j < i; ++j) {
      const Scalar v = detail::se_eval<Scalar>(inputs[i] - inputs[j], params);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

/// Lower Cholesky factor of G + jitter * I together with the jitter that
/// made the factorization succeed.
struct CholeskyFactor {
  Matrix lower;
  double jitter_used = 0.0;

  Eigen::Index dim() const { return lower.rows(); }

  /// L^{-1} b
  Matrix forward_solve(const Matrix& b) const {
    return lower.triangularView<Eigen::Lower>().solve(b);
  }
  /// (L L')^{-1} b
  Matrix solve(const Matrix& b) const {
    Matrix y = lower.triangularView<Eigen::Lower>().solve(b);
    lower.transpose().triangularView<Eigen::Upper>().solveInPlace(y);
    return y;
  }
  double log_det() const {  // of L L'
    return 2.0 * lower.diagonal().array().log().sum();
  }
};

/// Cholesky factorization with an escalating jitter ladder. Throws
/// numerical_error when even the largest jitter cannot rescue the matrix,
/// which in this codebase means the kernel parameters are ill-conditioned.
inline CholeskyFactor chol_jitter(const Matrix& g) {
  if (g.rows() != g.cols()) throw config_error("chol_jitter requires a square matrix");
  static constexpr std::array<double, 4> ladder = {0.0, 1e-10, 1e-8, 1e-6};
  Eigen::LLT<Matrix> llt;
  for (double jitter : ladder) {
    if (jitter == 0.0) {
      llt.compute(g);
    } else {
      Matrix shifted = g;
      shifted.diagonal().array() += jitter;
      llt.compute(shifted);
    }
    if (llt.info() == Eigen::Success &&
        llt.matrixLLT().diagonal().minCoeff() > 0.0)
      return CholeskyFactor{llt.matrixL(), jitter};
  }
  throw numerical_error(
      "Cholesky failed after maximum jitter; kernel parameters are ill-conditioned");
}

/// Solves A X = B for a symmetric positive-definite Toeplitz A given its
/// first row, by the Levinson recursion in O(T^2) per right-hand side.
/// Throws numerical_error on a non-positive reflection pivot (matrix
/// numerically singular or indefinite); callers fall back to a dense solve.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> toeplitz_solve(
    const Eigen::Vector<Scalar, Eigen::Dynamic>& first_row,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& rhs) {
  using Vec = Eigen::Vector<Scalar, Eigen::Dynamic>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = first_row.size();
  if (n < 1) throw config_error("toeplitz_solve requires a nonempty first row");
  if (rhs.rows() != n) throw config_error("toeplitz_solve rhs row count mismatch");
  if (!(first_row[0] > Scalar(0)))
    throw numerical_error("toeplitz_solve: diagonal entry must be positive");

  // Work on the unit-diagonal system; r holds the normalized off-diagonals.
  const Vec r = first_row.tail(n - 1) / first_row[0];
  const Mat b = rhs / first_row[0];
  Mat x(n, rhs.cols());
  x.row(0) = b.row(0);
  if (n == 1) return x;

  Vec y(n - 1);  // Yule-Walker solution, shared across right-hand sides
  Scalar beta = Scalar(1);
  Scalar alpha = -r[0];
  y[0] = alpha;

  Vec v(n - 1), z(n - 1);
  for (Eigen::Index k = 1; k < n; ++k) {
    beta *= (Scalar(1) - alpha * alpha);
    if (!(beta > Scalar(0)))
      throw numerical_error("toeplitz_solve: non-positive reflection pivot");
    for (Eigen::Index col = 0; col < x.cols(); ++col) {
      Scalar dot = Scalar(0);
      for (Eigen::Index j = 0; j < k; ++j) dot += r[j] * x(k - 1 - j, col);
      const Scalar mu = (b(k, col) - dot) / beta;
      for (Eigen::Index j = 0; j < k; ++j) v[j] = x(j, col) + mu * y[k - 1 - j];
      for (Eigen::Index j = 0; j < k; ++j) x(j, col) = v[j];
      x(k, col) = mu;
    }
    if (k < n - 1) {
      Scalar dot = Scalar(0);
      for (Eigen::Index j = 0; j < k; ++j) dot += r[j] * y[k - 1 - j];
      alpha = -(r[k] + dot) / beta;
      for (Eigen::Index j = 0; j < k; ++j) z[j] = y[j] + alpha * y[k - 1 - j];
      for (Eigen::Index j = 0; j < k; ++j) y[j] = z[j];
      y[k] = alpha;
    }
  }
  return x;
}

}  // namespace oslmm

#endif
