#ifndef OSLMM_MODEL_HPP
#define OSLMM_MODEL_HPP

#include <vector>

#include "oslmm/types.hpp"

namespace oslmm {

// Shared deterministic model mathematics. Shape conventions throughout:
//   Y (observations)        P x T, column t = y_t
//   F (latent processes)    Q x T, row q = f_q evaluated on the grid
//   H (log scales)          Q x T, entry (q,t) = h_q(t), S^{1/2}(t) = diag(exp(h_.(t)))
//   U (orthonormal basis)   P x Q
//   V (ambient matrix)      P x Q, mapped to the Stiefel manifold by the polar factor
//   W (mixing series)       (P*Q) x T, row i + P*j = w_ij series; column t reshapes to W_t

/// Polar factor U = V (V'V)^{-1/2}, the Frobenius-nearest matrix with
/// orthonormal columns. Computed through the SVD, which is the same map in
/// exact arithmetic but stabler near rank deficiency. Throws numerical_error
/// when the smallest singular value drops below 1e-12 of the largest.
Matrix polar_orthonormalize(const Matrix& v);

/// max |U'U - I|
double stiefel_defect(const Matrix& u);

/// Flips column signs in place so each column's largest-magnitude entry is
/// positive, making SVD-derived bases comparable across runs.
void canonicalize_column_signs(Matrix& m);

/// Pseudo-observations T_t y_t with T_t = S_t^{-1/2} U' and their diagonal
/// noise variances [Sigma_{T_t}]_qq = sigma_y^2 exp(-2 h_q(t)). Homogeneous
/// noise only.
ProjectedData project_observations(const Dataset& data, const Matrix& u,
                                   const Matrix& h, const NoiseModel& noise);

/// g_t = U diag(exp(h_.(t))) f_t, columnwise.
Matrix latent_signal(const Matrix& u, const Matrix& h, const Matrix& f);

/// c_t = S^{1/2}(t) f_t, i.e. entrywise exp(H) .* F.
Matrix orthonormalized_latents(const Matrix& h, const Matrix& f);

/// g_t = W_t f_t with W stored as (P*Q) x T mixing series.
Matrix slmm_mean(const Matrix& w_series, const Matrix& f, Eigen::Index channels);

/// View of column t of the mixing series as the P x Q matrix W_t.
inline Eigen::Map<const Matrix> mixing_at(const Matrix& w_series, Eigen::Index channels,
                                          Eigen::Index t) {
  return Eigen::Map<const Matrix>(w_series.col(t).data(), channels,
                                  w_series.rows() / channels);
}

/// sum_t log N(y_t | g_t, Sigma) under homogeneous or per-channel diagonal noise.
double log_likelihood(const Dataset& data, const Matrix& g, const NoiseModel& noise);

}  // namespace oslmm

#endif
