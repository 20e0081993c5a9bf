#ifndef OSLMM_SYNTHETIC_HPP
#define OSLMM_SYNTHETIC_HPP

#include <vector>

#include "oslmm/rng.hpp"
#include "oslmm/types.hpp"

namespace oslmm {

/// Lorenz flow parameters and integration controls. Defaults give the
/// classic chaotic regime.
struct LorenzConfig {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
  double dt = 0.01;
  int n_steps = 2000;
  int transient_discard = 1000;
  Eigen::Vector3d initial_state{1.0, 1.0, 1.0};

  void validate() const {
    if (!(dt > 0.0)) throw config_error("lorenz dt must be positive");
    if (n_steps < 1 || transient_discard < 0)
      throw config_error("lorenz step counts invalid");
  }
};

enum class ScaleKernel { kShort, kMedian, kLong };

/// Length scales 1, e, e^2 for the short / median / long log-scale kernels.
double scale_kernel_length(ScaleKernel kind);

struct DgpConfig {
  int n_times = 200;
  int n_channels = 50;
  int latent_dim = 3;  // the Lorenz system is three-dimensional
  ScaleKernel scale_kernel = ScaleKernel::kMedian;
  double noise_std = 0.1;
  double time_span = 10.0;     // observation grid covers [0, time_span]
  double lorenz_horizon = 20.0;  // flow time covered by the stored latents
  std::uint64_t seed = 0;

  void validate() const {
    if (n_times < 2 || n_channels < 1) throw config_error("dgp sizes invalid");
    if (latent_dim != 3) throw config_error("the Lorenz generator is three-dimensional");
    if (n_channels < latent_dim) throw config_error("dgp requires P >= Q");
    if (!(noise_std >= 0.0)) throw config_error("dgp noise_std must be nonnegative");
    if (!(time_span > 0.0) || !(lorenz_horizon > 0.0))
      throw config_error("dgp spans must be positive");
  }
};

struct MdgpConfig {
  DgpConfig base;
  int n_trials = 20;
  double perturb_sigma = 0.01;

  void validate() const {
    base.validate();
    if (n_trials < 1) throw config_error("mdgp requires at least one trial");
    if (!(perturb_sigma >= 0.0)) throw config_error("mdgp perturb_sigma must be nonnegative");
  }
};

/// One generated trial together with its ground truth and the exact noise
/// that was added, so observations reproduce bitwise from the stored pieces.
struct SyntheticBundle {
  Dataset data;
  Matrix latents;     // Q x T, standardized Lorenz trajectory
  Matrix log_scales;  // Q x T
  Matrix basis;       // P x Q, semi-orthogonal
  Matrix noise;       // P x T
  Matrix ambient;     // P x Q perturbed matrix the basis was projected from (MDGP)
};

/// Raw RK4 integration of the Lorenz flow; returns 3 x n_steps states after
/// the transient prefix, unstandardized. Aborts on numerical blow-up.
Matrix lorenz_integrate(const LorenzConfig& config);

/// Integrated trajectory with each dimension standardized to zero mean and
/// unit (population) variance.
Matrix lorenz_trajectory(const LorenzConfig& config);

/// In place, per row: subtract the mean, divide by the population standard
/// deviation.
void standardize_rows(Matrix& m);

/// Draws n_rows independent GP paths from N(0, K) with the chosen log-scale
/// kernel over the given grid.
Matrix sample_log_scales(ScaleKernel kind, const Vector& times, Eigen::Index n_rows,
                         Rng& rng);

/// Uniform (Haar) draw on the Stiefel manifold via QR of a Gaussian matrix
/// with the sign correction that makes the factorization unique.
Matrix random_semiorthogonal(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// y_t = U (exp(h_t) .* f_t) + eta_t with the Lorenz latents, GP log scales
/// and a Haar basis.
SyntheticBundle generate_dgp(const DgpConfig& config, Rng& rng);

/// Multi-trial variant: a common basis U is perturbed per trial as
/// V_i = U + sigma E_i and snapped back to the manifold by the polar factor,
/// the Frobenius-nearest semi-orthogonal matrix. Each trial gets its own
/// latents (perturbed Lorenz start), log scales and noise.
std::vector<SyntheticBundle> generate_mdgp(const MdgpConfig& config, Rng& rng);

}  // namespace oslmm

#endif
