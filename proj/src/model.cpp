#include "oslmm/model.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <numbers>

namespace oslmm {

Matrix polar_orthonormalize(const Matrix& v) {
  if (v.rows() < v.cols())
    throw config_error("polar_orthonormalize requires a tall or square matrix");
  Eigen::JacobiSVD<Matrix> svd(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (!(sv[sv.size() - 1] >= 1e-12 * sv[0]))
    throw numerical_error("polar_orthonormalize: rank-deficient input");
  return svd.matrixU() * svd.matrixV().transpose();
}

double stiefel_defect(const Matrix& u) {
  Matrix gram = u.transpose() * u;
  gram.diagonal().array() -= 1.0;
  return gram.cwiseAbs().maxCoeff();
}

void canonicalize_column_signs(Matrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    Eigen::Index imax;
    m.col(j).cwiseAbs().maxCoeff(&imax);
    if (m(imax, j) < 0.0) m.col(j) = -m.col(j);
  }
}

ProjectedData project_observations(const Dataset& data, const Matrix& u,
                                   const Matrix& h, const NoiseModel& noise) {
  data.validate();
  noise.validate(data.channels());
  if (noise.per_channel)
    throw config_error("project_observations supports homogeneous noise only");
  if (u.rows() != data.channels() || u.cols() != h.rows() || h.cols() != data.samples())
    throw config_error("project_observations shape mismatch");

  ProjectedData out;
  out.projected =
      ((-h.array()).exp() * (u.transpose() * data.observations).array()).matrix();
  out.noise_diag = (noise.sigma_y2 * (-2.0 * h.array()).exp()).matrix();
  return out;
}

Matrix latent_signal(const Matrix& u, const Matrix& h, const Matrix& f) {
  if (u.cols() != f.rows() || h.rows() != f.rows() || h.cols() != f.cols())
    throw config_error("latent_signal shape mismatch");
  return u * (h.array().exp() * f.array()).matrix();
}

Matrix orthonormalized_latents(const Matrix& h, const Matrix& f) {
  if (h.rows() != f.rows() || h.cols() != f.cols())
    throw config_error("orthonormalized_latents shape mismatch");
  return (h.array().exp() * f.array()).matrix();
}

Matrix slmm_mean(const Matrix& w_series, const Matrix& f, Eigen::Index channels) {
  const Eigen::Index q = f.rows();
  const Eigen::Index t_count = f.cols();
  if (w_series.rows() != channels * q || w_series.cols() != t_count)
    throw config_error("slmm_mean shape mismatch");
  Matrix g(channels, t_count);
  for (Eigen::Index t = 0; t < t_count; ++t)
    g.col(t) = mixing_at(w_series, channels, t) * f.col(t);
  return g;
}

double log_likelihood(const Dataset& data, const Matrix& g, const NoiseModel& noise) {
  if (g.rows() != data.channels() || g.cols() != data.samples())
    throw config_error("log_likelihood shape mismatch");
  noise.validate(data.channels());
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const Matrix resid = data.observations - g;
  const auto t_count = static_cast<double>(data.samples());

  if (noise.per_channel) {
    double ll = 0.0;
    for (Eigen::Index p = 0; p < data.channels(); ++p) {
      const double s2 = (*noise.per_channel)[p];
      ll += -0.5 * t_count * (log2pi + std::log(s2)) -
            resid.row(p).squaredNorm() / (2.0 * s2);
    }
    return ll;
  }
  const auto n = static_cast<double>(data.channels() * data.samples());
  return -0.5 * n * (log2pi + std::log(noise.sigma_y2)) -
         resid.squaredNorm() / (2.0 * noise.sigma_y2);
}

}  // namespace oslmm
