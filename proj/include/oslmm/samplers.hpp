#ifndef OSLMM_SAMPLERS_HPP
#define OSLMM_SAMPLERS_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "oslmm/kernels.hpp"
#include "oslmm/rng.hpp"
#include "oslmm/types.hpp"

namespace oslmm {

enum class ModelKind { slmm, oslmm };

enum class Family { latent_f, scale_h, mixing_w };

/// Inverse-Gamma priors: (a, b) on the noise variance, (c, d) on the
/// mixing-scale variance (sigma^2_W for SLMM, sigma^2_h for OSLMM).
struct HyperPriors {
  double a = 0.01;
  double b = 0.01;
  double c = 0.01;
  double d = 0.01;

  void validate() const {
    if (!(a > 0 && b > 0 && c > 0 && d > 0))
      throw config_error("hyper-prior parameters must be strictly positive");
  }
};

struct InverseGammaParams {
  double shape = 0.0;
  double rate = 0.0;
};

/// Robbins-Monro style batch adaptation of a Metropolis step size toward a
/// target acceptance rate. Adapts only while `frozen` is false; the chain
/// runner freezes it at the end of burn-in.
struct MhAdaptation {
  double log_step = std::log(0.1);
  double target_acceptance = 0.44;
  int batch_size = 50;
  int batch_draws = 0;
  int batch_accepts = 0;
  int batches_done = 0;
  bool frozen = false;

  double step() const { return std::exp(log_step); }

  void record(bool accepted) {
    if (frozen) return;
    ++batch_draws;
    if (accepted) ++batch_accepts;
    if (batch_draws == batch_size) {
      ++batches_done;
      const double rate = static_cast<double>(batch_accepts) / batch_size;
      const double delta = std::min(0.1, 1.0 / std::sqrt(static_cast<double>(batches_done)));
      log_step += (rate > target_acceptance ? delta : -delta);
      batch_draws = 0;
      batch_accepts = 0;
    }
  }
};

/// Per-block switches; disabling every block makes a sweep the identity.
struct UpdateFlags {
  bool latents = true;        // f rows (OSLMM) / joint (W, f) ESS block (SLMM)
  bool log_scales = true;     // h rows (OSLMM only)
  bool basis = true;          // V and derived U (OSLMM only)
  bool noise_variance = true;
  bool scale_variance = true;  // sigma^2_h or sigma^2_W
  bool length_scales = true;

  bool any() const {
    return latents || log_scales || basis || noise_variance || scale_variance ||
           length_scales;
  }
};

/// One full assignment of latent variables and parameters for either model.
/// Latent trajectories are held per trial; U, H (or W) and all parameters
/// are shared across trials.
struct GibbsState {
  ModelKind kind = ModelKind::oslmm;
  std::vector<Matrix> f;  // per trial, Q x T
  Matrix h;               // Q x T        (OSLMM)
  Matrix v;               // P x Q        (OSLMM, ambient)
  Matrix u;               // P x Q        (OSLMM, derived polar factor of v)
  Matrix w_series;        // (P*Q) x T    (SLMM; row i + P*j is the w_ij series)
  NoiseModel noise;       // homogeneous for OSLMM, per-channel for SLMM
  KernelParams kp_f{1.0, 1.0};  // variance fixed at 1
  KernelParams kp_h{1.0, 1.0};  // variance = sigma^2_h (OSLMM)
  KernelParams kp_w{1.0, 1.0};  // variance = sigma^2_W (SLMM)
  MhAdaptation adapt_f;
  MhAdaptation adapt_mix;  // h family (OSLMM) or w family (SLMM)

  Eigen::Index latent_dim() const { return f.empty() ? 0 : f.front().rows(); }
};

struct ChainConfig {
  int iterations = 500;
  int burnin = 200;
  int thinning = 1;
  std::uint64_t seed = 0;
  UpdateFlags updates;

  void validate() const {
    if (iterations <= 0 || burnin < 0 || thinning < 1)
      throw config_error("chain config requires iterations > 0, burnin >= 0, thinning >= 1");
    if (burnin >= iterations)
      throw config_error("chain config requires burnin < iterations");
  }
};

/// Post burn-in, thinned states plus the full per-iteration log-density trace.
struct PosteriorSamples {
  std::vector<GibbsState> states;
  std::vector<double> log_density_trace;
};

struct EssResult {
  Vector state;
  double log_likelihood = 0.0;
  int proposals = 0;
};

/// One elliptical slice sampling transition for a zero-mean Gaussian prior
/// given by its Cholesky factor. Always returns a state; the angle bracket
/// shrinks to the current point in the limit, so termination is guaranteed
/// for any finite log-likelihood.
EssResult ess_step(const Vector& current, const CholeskyFactor& prior_factor,
                   const std::function<double(const Vector&)>& loglik, Rng& rng,
                   std::optional<double> loglik_current = std::nullopt);

/// ess_step against a caller-supplied prior draw; used for identity and
/// block-structured priors where forming a dense factor would be wasteful.
EssResult ess_step_with_prior_draw(const Vector& current, const Vector& prior_draw,
                                   const std::function<double(const Vector&)>& loglik,
                                   Rng& rng,
                                   std::optional<double> loglik_current = std::nullopt);

/// Mean and covariance of one latent row's conditional posterior
///   N((K^{-1} + D^{-1})^{-1} D^{-1} ytilde, (K^{-1} + D^{-1})^{-1})
/// computed through factor solves of (K + D); no precision matrix is formed.
struct RowPosterior {
  Vector mean;
  Matrix covariance;
};
RowPosterior latent_row_posterior(const Matrix& k_f, const Vector& ytilde,
                                  const Vector& noise_diag);

/// Draws each latent row from its conditional posterior given the projected
/// data implied by the state's U, H and noise.
Matrix gibbs_update_f(const GibbsState& state, const Dataset& data, Rng& rng);

/// Per-row elliptical slice updates of the log-scale matrix H, each against
/// the full-data likelihood with the candidate row spliced in.
Matrix gibbs_update_h(const GibbsState& state, const std::vector<Dataset>& trials,
                      Rng& rng);

/// One elliptical slice update of the ambient matrix V under its standard
/// matrix-normal prior, with the likelihood evaluated through the polar
/// factor U. Rank failures of the polar map retry with fresh auxiliary
/// draws a bounded number of times.
Matrix gibbs_update_V(const GibbsState& state, const std::vector<Dataset>& trials,
                      Rng& rng);

/// Conjugate posterior parameters for the observation-noise variance.
/// OSLMM: IG(a + nPT/2, b + SSE/2). SLMM: per channel IG(a + nT/2, b + SSE_p/2).
InverseGammaParams noise_variance_posterior(const GibbsState& state,
                                            const std::vector<Dataset>& trials,
                                            const HyperPriors& priors);
std::vector<InverseGammaParams> noise_variance_posterior_per_channel(
    const GibbsState& state, const std::vector<Dataset>& trials,
    const HyperPriors& priors);
double sample_noise_variance(const GibbsState& state, const std::vector<Dataset>& trials,
                             const HyperPriors& priors, Rng& rng);
Vector sample_noise_variance_per_channel(const GibbsState& state,
                                         const std::vector<Dataset>& trials,
                                         const HyperPriors& priors, Rng& rng);

/// Conjugate posterior parameters for the mixing-scale variance.
/// OSLMM: IG(c + QT/2, d + sum_q h_q' Ktilde^{-1} h_q / 2).
/// SLMM:  IG(c + PQT/2, d + sum_{p,q} w_pq' Ktilde^{-1} w_pq / 2).
InverseGammaParams scale_variance_posterior(const GibbsState& state, const Vector& times,
                                            const HyperPriors& priors);
double sample_scale_variance(const GibbsState& state, const Vector& times,
                             const HyperPriors& priors, Rng& rng);

/// One adaptive Metropolis step on log(length_scale) for the given process
/// family, accepted against the marginal GP prior density of that family's
/// latent block. The non-informative prior p(l^2) proportional to 1/l^2 is
/// flat in log(l), so the symmetric proposal cancels and the acceptance
/// ratio is the density ratio alone. Returns the (possibly unchanged)
/// length scale; mutates the relevant adaptation state unless frozen.
double mh_update_lengthscale(GibbsState& state, Family family,
                             const std::vector<Dataset>& trials, Rng& rng);

/// Joint log density of data, latents and parameters for the state's model;
/// the quantity traced by run_chain. Length-scale priors are flat in log(l)
/// and contribute no varying term.
double joint_log_density(const GibbsState& state, const std::vector<Dataset>& trials,
                         const HyperPriors& priors);

/// One OSLMM Gibbs sweep: f (per trial), h, V, noise variance, scale
/// variance, length scales of the f and h families. Returns the new state;
/// `log_density` is filled with the joint log density of the result.
GibbsState oslmm_gibbs_sweep(const GibbsState& state, const std::vector<Dataset>& trials,
                             const HyperPriors& priors, const UpdateFlags& flags,
                             Rng& rng, double* log_density = nullptr);

/// One SLMM sweep: a joint elliptical slice step over all mixing series and
/// latent rows under the product GP prior, then conjugate noise / scale
/// updates and length-scale Metropolis steps.
GibbsState slmm_ess_sweep(const GibbsState& state, const std::vector<Dataset>& trials,
                          const HyperPriors& priors, const UpdateFlags& flags, Rng& rng,
                          double* log_density = nullptr);

/// Deterministic self-contained initialization: U (and V, W) from the top-Q
/// left singular vectors of the centered data, H = 0, F = projected data,
/// noise = 0.1 * data variance, length scales = a tenth of the time span.
GibbsState init_state(ModelKind kind, const std::vector<Dataset>& trials,
                      Eigen::Index latent_dim);

/// Runs the sweep for the configured model, freezing Metropolis adaptation
/// at the end of burn-in, discarding burn-in and storing every thinning-th
/// state. Sweep errors are rethrown annotated with the iteration index.
/// When given, `iteration_seconds` receives the wall time of every sweep.
PosteriorSamples run_chain(ModelKind kind, const std::vector<Dataset>& trials,
                           const ChainConfig& config, const HyperPriors& priors,
                           const GibbsState& init,
                           std::vector<double>* iteration_seconds = nullptr);

}  // namespace oslmm

#endif
