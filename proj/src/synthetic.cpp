#include "oslmm/synthetic.hpp"

#include <Eigen/QR>

#include <cmath>

#include "oslmm/kernels.hpp"
#include "oslmm/model.hpp"

namespace oslmm {

namespace {

Eigen::Vector3d lorenz_flow(const Eigen::Vector3d& s, const LorenzConfig& c) {
  return {c.sigma * (s[1] - s[0]), s[0] * (c.rho - s[2]) - s[1],
          s[0] * s[1] - c.beta * s[2]};
}

}  // namespace

double scale_kernel_length(ScaleKernel kind) {
  switch (kind) {
    case ScaleKernel::kShort:
      return 1.0;
    case ScaleKernel::kMedian:
      return std::exp(1.0);
    case ScaleKernel::kLong:
      return std::exp(2.0);
  }
  throw config_error("unknown scale kernel");
}

Matrix lorenz_integrate(const LorenzConfig& config) {
  config.validate();
  Eigen::Vector3d s = config.initial_state;
  Matrix out(3, config.n_steps);
  const double h = config.dt;
  const int total = config.transient_discard + config.n_steps;
  for (int step = 0; step < total; ++step) {
    const Eigen::Vector3d k1 = lorenz_flow(s, config);
    const Eigen::Vector3d k2 = lorenz_flow(s + 0.5 * h * k1, config);
    const Eigen::Vector3d k3 = lorenz_flow(s + 0.5 * h * k2, config);
    const Eigen::Vector3d k4 = lorenz_flow(s + h * k3, config);
    s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!s.allFinite() || s.cwiseAbs().maxCoeff() > 1e6)
      throw numerical_error("lorenz integration blew up; reduce dt");
    if (step >= config.transient_discard) out.col(step - config.transient_discard) = s;
  }
  return out;
}

void standardize_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mean = m.row(r).mean();
    m.row(r).array() -= mean;
    const double var = m.row(r).squaredNorm() / static_cast<double>(m.cols());
    if (var > 0.0) m.row(r) /= std::sqrt(var);
  }
}

Matrix lorenz_trajectory(const LorenzConfig& config) {
  Matrix traj = lorenz_integrate(config);
  standardize_rows(traj);
  return traj;
}

Matrix sample_log_scales(ScaleKernel kind, const Vector& times, Eigen::Index n_rows,
                         Rng& rng) {
  const KernelParams params{1.0, scale_kernel_length(kind)};
  const CholeskyFactor factor = chol_jitter(gram(times, params));
  Matrix h(n_rows, times.size());
  for (Eigen::Index r = 0; r < n_rows; ++r)
    h.row(r) =
        (factor.lower.triangularView<Eigen::Lower>() * rng.normal_vector(times.size()))
            .transpose();
  return h;
}

Matrix random_semiorthogonal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  if (rows < cols) throw config_error("random_semiorthogonal requires P >= Q");
  const Matrix g = rng.normal_matrix(rows, cols);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  const Matrix r = qr.matrixQR().topLeftCorner(cols, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

SyntheticBundle generate_dgp(const DgpConfig& config, Rng& rng) {
  config.validate();
  const Eigen::Index t_dim = config.n_times;
  const Eigen::Index p_dim = config.n_channels;
  const Eigen::Index q_dim = config.latent_dim;

  LorenzConfig lorenz;
  // stride the fine integration so the kept samples cover the full horizon
  const int stride = std::max(
      1, static_cast<int>(std::lround(config.lorenz_horizon /
                                      (lorenz.dt * static_cast<double>(t_dim)))));
  lorenz.n_steps = stride * static_cast<int>(t_dim);
  // decorrelate trials generated from one stream via the chaotic sensitivity
  lorenz.initial_state += 1e-3 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());

  const Matrix fine = lorenz_integrate(lorenz);
  Matrix latents(q_dim, t_dim);
  for (Eigen::Index t = 0; t < t_dim; ++t) latents.col(t) = fine.col(t * stride);
  standardize_rows(latents);

  SyntheticBundle bundle;
  bundle.data.times = Vector::LinSpaced(t_dim, 0.0, config.time_span);
  bundle.latents = latents;
  bundle.log_scales = sample_log_scales(config.scale_kernel, bundle.data.times, q_dim, rng);
  bundle.basis = random_semiorthogonal(p_dim, q_dim, rng);
  bundle.noise = config.noise_std * rng.normal_matrix(p_dim, t_dim);
  bundle.data.observations =
      latent_signal(bundle.basis, bundle.log_scales, bundle.latents) + bundle.noise;
  return bundle;
}

std::vector<SyntheticBundle> generate_mdgp(const MdgpConfig& config, Rng& rng) {
  config.validate();
  const Eigen::Index p_dim = config.base.n_channels;
  const Eigen::Index q_dim = config.base.latent_dim;
  const Matrix base_basis = random_semiorthogonal(p_dim, q_dim, rng);

  std::vector<SyntheticBundle> trials;
  trials.reserve(static_cast<std::size_t>(config.n_trials));
  for (int i = 0; i < config.n_trials; ++i) {
    Matrix ambient =
        base_basis + config.perturb_sigma * rng.normal_matrix(p_dim, q_dim);
    Matrix basis = config.perturb_sigma == 0.0 ? base_basis
                                               : polar_orthonormalize(ambient);
    SyntheticBundle bundle = generate_dgp(config.base, rng);
    // regenerate the observations on the trial's own subspace
    bundle.basis = std::move(basis);
    bundle.ambient = std::move(ambient);
    bundle.data.observations =
        latent_signal(bundle.basis, bundle.log_scales, bundle.latents) + bundle.noise;
    trials.push_back(std::move(bundle));
  }
  return trials;
}

}  // namespace oslmm
