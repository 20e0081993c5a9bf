#include "oslmm/samplers.hpp"

#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <numbers>
#include <string>

#include "oslmm/model.hpp"

namespace oslmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_inverse_gamma_density(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) -
         rate / x;
}

/// sum over rows of log N(row | 0, L L')
double gp_rows_log_density(const CholeskyFactor& factor, const Matrix& rows) {
  const auto r = static_cast<double>(rows.rows());
  const auto t = static_cast<double>(rows.cols());
  const Matrix z = factor.forward_solve(rows.transpose());
  return -0.5 * (r * t * kLog2Pi + r * factor.log_det() + z.squaredNorm());
}

const Vector& shared_times(const std::vector<Dataset>& trials) {
  if (trials.empty()) throw config_error("at least one trial is required");
  return trials.front().times;
}

void check_trials(const std::vector<Dataset>& trials) {
  if (trials.empty()) throw config_error("at least one trial is required");
  trials.front().validate();
  for (std::size_t i = 1; i < trials.size(); ++i) {
    trials[i].validate();
    if (trials[i].channels() != trials.front().channels() ||
        trials[i].samples() != trials.front().samples() ||
        trials[i].times != trials.front().times)
      throw data_error("all trials must share the channel count and time grid");
  }
}

Eigen::Index total_observations(const std::vector<Dataset>& trials) {
  Eigen::Index n = 0;
  for (const auto& d : trials) n += d.channels() * d.samples();
  return n;
}

}  // namespace

EssResult ess_step_with_prior_draw(const Vector& current, const Vector& prior_draw,
                                   const std::function<double(const Vector&)>& loglik,
                                   Rng& rng, std::optional<double> loglik_current) {
  const double ll0 = loglik_current ? *loglik_current : loglik(current);
  if (!std::isfinite(ll0))
    throw numerical_error("ess_step requires a finite log-likelihood at the current state");

  constexpr double tau = 2.0 * std::numbers::pi;
  const double log_y = ll0 + std::log(rng.uniform());
  double theta = rng.uniform(0.0, tau);
  double theta_min = theta - tau;
  double theta_max = theta;

  EssResult result;
  for (int i = 0; i < 1000; ++i) {
    result.state = std::cos(theta) * current + std::sin(theta) * prior_draw;
    result.log_likelihood = loglik(result.state);
    ++result.proposals;
    if (result.log_likelihood > log_y) return result;
    if (theta < 0.0)
      theta_min = theta;
    else
      theta_max = theta;
    theta = rng.uniform(theta_min, theta_max);
  }
  throw numerical_error("ess_step failed to terminate; log-likelihood is misbehaved");
}

EssResult ess_step(const Vector& current, const CholeskyFactor& prior_factor,
                   const std::function<double(const Vector&)>& loglik, Rng& rng,
                   std::optional<double> loglik_current) {
  if (prior_factor.dim() != current.size())
    throw config_error("ess_step prior factor dimension mismatch");
  const Vector nu =
      prior_factor.lower.triangularView<Eigen::Lower>() * rng.normal_vector(current.size());
  return ess_step_with_prior_draw(current, nu, loglik, rng, loglik_current);
}

RowPosterior latent_row_posterior(const Matrix& k_f, const Vector& ytilde,
                                  const Vector& noise_diag) {
  const Eigen::Index t = k_f.rows();
  if (ytilde.size() != t || noise_diag.size() != t)
    throw config_error("latent_row_posterior shape mismatch");
  if ((noise_diag.array() <= 0.0).any())
    throw config_error("latent_row_posterior noise variances must be positive");

  Matrix shifted = k_f;
  shifted.diagonal() += noise_diag;
  const CholeskyFactor factor = chol_jitter(shifted);
  const Matrix x = factor.solve(k_f);  // (K + D)^{-1} K

  RowPosterior post;
  post.mean = x.transpose() * ytilde;  // K (K + D)^{-1} ytilde
  post.covariance = k_f - k_f * x;
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose()).eval();
  return post;
}

Matrix gibbs_update_f(const GibbsState& state, const Dataset& data, Rng& rng) {
  const ProjectedData pd = project_observations(data, state.u, state.h, state.noise);
  const Matrix k_f = gram(data.times, state.kp_f);
  const Eigen::Index q_dim = state.h.rows();
  const Eigen::Index t_dim = data.samples();

  Matrix f_new(q_dim, t_dim);
  for (Eigen::Index q = 0; q < q_dim; ++q) {
    const RowPosterior post =
        latent_row_posterior(k_f, pd.projected.row(q).transpose(),
                             pd.noise_diag.row(q).transpose());
    const CholeskyFactor factor = chol_jitter(post.covariance);
    f_new.row(q) =
        (post.mean + factor.lower.triangularView<Eigen::Lower>() * rng.normal_vector(t_dim))
            .transpose();
  }
  return f_new;
}

Matrix gibbs_update_h(const GibbsState& state, const std::vector<Dataset>& trials,
                      Rng& rng) {
  check_trials(trials);
  const Vector& times = shared_times(trials);
  const Eigen::Index q_dim = state.h.rows();
  const std::size_t n_trials = trials.size();
  if (state.f.size() != n_trials) throw config_error("state trial count mismatch");

  const CholeskyFactor prior = chol_jitter(gram(times, state.kp_h));
  const double sigma2 = state.noise.sigma_y2;
  const double norm_const =
      -0.5 * static_cast<double>(total_observations(trials)) *
      (kLog2Pi + std::log(sigma2));

  Matrix h = state.h;
  // residuals for the current full mean, maintained incrementally across rows
  std::vector<Matrix> resid(n_trials);
  for (std::size_t i = 0; i < n_trials; ++i)
    resid[i] = trials[i].observations - latent_signal(state.u, h, state.f[i]);

  for (Eigen::Index q = 0; q < q_dim; ++q) {
    const Vector u_q = state.u.col(q);
    // per-trial statistics of the residual with row q's contribution removed
    std::vector<Eigen::RowVectorXd> b(n_trials), c(n_trials), f_q(n_trials);
    for (std::size_t i = 0; i < n_trials; ++i) {
      f_q[i] = state.f[i].row(q);
      const Eigen::RowVectorXd scaled =
          (h.row(q).array().exp() * f_q[i].array()).matrix();
      const Matrix r_q = resid[i] + u_q * scaled;
      b[i] = u_q.transpose() * r_q;
      c[i] = r_q.colwise().squaredNorm();
      resid[i] = r_q;  // temporarily holds the row-q-free residual
    }

    auto loglik = [&](const Vector& cand) {
      double sse = 0.0;
      for (std::size_t i = 0; i < n_trials; ++i) {
        const Eigen::RowVectorXd a =
            (cand.transpose().array().exp() * f_q[i].array()).matrix();
        sse += c[i].sum() - 2.0 * a.dot(b[i]) + a.squaredNorm();
      }
      return norm_const - sse / (2.0 * sigma2);
    };

    const EssResult step =
        ess_step(h.row(q).transpose(), prior, loglik, rng, loglik(h.row(q).transpose()));
    h.row(q) = step.state.transpose();

    for (std::size_t i = 0; i < n_trials; ++i) {
      const Eigen::RowVectorXd scaled =
          (h.row(q).array().exp() * f_q[i].array()).matrix();
      resid[i] -= u_q * scaled;
    }
  }
  return h;
}

Matrix gibbs_update_V(const GibbsState& state, const std::vector<Dataset>& trials,
                      Rng& rng) {
  check_trials(trials);
  const Eigen::Index p_dim = state.v.rows();
  const Eigen::Index q_dim = state.v.cols();
  if (state.f.size() != trials.size()) throw config_error("state trial count mismatch");

  Matrix cross = Matrix::Zero(p_dim, q_dim);  // sum of Y_i C_i'
  double scaled_norm2 = 0.0;
  double data_norm2 = 0.0;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const Matrix c_i = orthonormalized_latents(state.h, state.f[i]);
    cross += trials[i].observations * c_i.transpose();
    scaled_norm2 += c_i.squaredNorm();
    data_norm2 += trials[i].observations.squaredNorm();
  }

  const double sigma2 = state.noise.sigma_y2;
  const double norm_const =
      -0.5 * static_cast<double>(total_observations(trials)) *
      (kLog2Pi + std::log(sigma2));

  auto loglik = [&](const Vector& flat) {
    const Eigen::Map<const Matrix> v(flat.data(), p_dim, q_dim);
    const Matrix u = polar_orthonormalize(v);
    const double sse =
        data_norm2 - 2.0 * (u.array() * cross.array()).sum() + scaled_norm2;
    return norm_const - sse / (2.0 * sigma2);
  };

  const double sse_current =
      data_norm2 - 2.0 * (state.u.array() * cross.array()).sum() + scaled_norm2;
  const double ll_current = norm_const - sse_current / (2.0 * sigma2);
  const Vector current = Eigen::Map<const Vector>(state.v.data(), p_dim * q_dim);

  for (int attempt = 0;; ++attempt) {
    try {
      const EssResult step = ess_step_with_prior_draw(
          current, rng.normal_vector(p_dim * q_dim), loglik, rng, ll_current);
      return Eigen::Map<const Matrix>(step.state.data(), p_dim, q_dim);
    } catch (const numerical_error&) {
      if (attempt >= 2) throw;
    }
  }
}

InverseGammaParams noise_variance_posterior(const GibbsState& state,
                                            const std::vector<Dataset>& trials,
                                            const HyperPriors& priors) {
  check_trials(trials);
  priors.validate();
  double sse = 0.0;
  for (std::size_t i = 0; i < trials.size(); ++i)
    sse += (trials[i].observations - latent_signal(state.u, state.h, state.f[i]))
               .squaredNorm();
  return {priors.a + 0.5 * static_cast<double>(total_observations(trials)),
          priors.b + 0.5 * sse};
}

std::vector<InverseGammaParams> noise_variance_posterior_per_channel(
    const GibbsState& state, const std::vector<Dataset>& trials,
    const HyperPriors& priors) {
  check_trials(trials);
  priors.validate();
  const Eigen::Index p_dim = trials.front().channels();
  Vector sse = Vector::Zero(p_dim);
  double t_total = 0.0;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const Matrix g = slmm_mean(state.w_series, state.f[i], p_dim);
    sse += (trials[i].observations - g).rowwise().squaredNorm();
    t_total += static_cast<double>(trials[i].samples());
  }
  std::vector<InverseGammaParams> out(p_dim);
  for (Eigen::Index p = 0; p < p_dim; ++p)
    out[p] = {priors.a + 0.5 * t_total, priors.b + 0.5 * sse[p]};
  return out;
}

double sample_noise_variance(const GibbsState& state, const std::vector<Dataset>& trials,
                             const HyperPriors& priors, Rng& rng) {
  const InverseGammaParams p = noise_variance_posterior(state, trials, priors);
  return rng.inverse_gamma(p.shape, p.rate);
}

Vector sample_noise_variance_per_channel(const GibbsState& state,
                                         const std::vector<Dataset>& trials,
                                         const HyperPriors& priors, Rng& rng) {
  const auto params = noise_variance_posterior_per_channel(state, trials, priors);
  Vector out(static_cast<Eigen::Index>(params.size()));
  for (std::size_t p = 0; p < params.size(); ++p)
    out[static_cast<Eigen::Index>(p)] = rng.inverse_gamma(params[p].shape, params[p].rate);
  return out;
}

namespace {

/// sum over rows of row' Ktilde^{-1} row, taking the Levinson fast path on
/// even grids and falling back to a dense factor solve on breakdown.
double correlation_quadratic_form(const Vector& times, double length_scale,
                                  const Matrix& rows) {
  const KernelParams corr{1.0, length_scale};
  const Eigen::Index t = times.size();
  if (is_evenly_spaced(times) && t > 1) {
    const double step = (times[t - 1] - times[0]) / static_cast<double>(t - 1);
    try {
      const Vector first_row = se_gram_first_row<double>(t, step, corr);
      const Matrix solved = toeplitz_solve<double>(first_row, rows.transpose());
      return (rows.transpose().array() * solved.array()).sum();
    } catch (const numerical_error&) {
      // near-singular correlation; fall through to the jittered dense path
    }
  }
  const CholeskyFactor factor = chol_jitter(gram(times, corr));
  const Matrix z = factor.forward_solve(rows.transpose());
  return z.squaredNorm();
}

}  // namespace

InverseGammaParams scale_variance_posterior(const GibbsState& state, const Vector& times,
                                            const HyperPriors& priors) {
  priors.validate();
  if (state.kind == ModelKind::oslmm) {
    const double quad =
        correlation_quadratic_form(times, state.kp_h.length_scale, state.h);
    return {priors.c + 0.5 * static_cast<double>(state.h.size()), priors.d + 0.5 * quad};
  }
  const double quad =
      correlation_quadratic_form(times, state.kp_w.length_scale, state.w_series);
  return {priors.c + 0.5 * static_cast<double>(state.w_series.size()),
          priors.d + 0.5 * quad};
}

double sample_scale_variance(const GibbsState& state, const Vector& times,
                             const HyperPriors& priors, Rng& rng) {
  const InverseGammaParams p = scale_variance_posterior(state, times, priors);
  return rng.inverse_gamma(p.shape, p.rate);
}

double mh_update_lengthscale(GibbsState& state, Family family,
                             const std::vector<Dataset>& trials, Rng& rng) {
  check_trials(trials);
  const Vector& times = shared_times(trials);

  KernelParams* kp = nullptr;
  MhAdaptation* adapt = nullptr;
  Matrix block;
  switch (family) {
    case Family::latent_f: {
      kp = &state.kp_f;
      adapt = &state.adapt_f;
      const Eigen::Index q_dim = state.latent_dim();
      block.resize(static_cast<Eigen::Index>(state.f.size()) * q_dim, times.size());
      for (std::size_t i = 0; i < state.f.size(); ++i)
        block.middleRows(static_cast<Eigen::Index>(i) * q_dim, q_dim) = state.f[i];
      break;
    }
    case Family::scale_h:
      kp = &state.kp_h;
      adapt = &state.adapt_mix;
      block = state.h;
      break;
    case Family::mixing_w:
      kp = &state.kp_w;
      adapt = &state.adapt_mix;
      block = state.w_series;
      break;
  }

  auto block_density = [&](double length_scale) {
    const KernelParams params{kp->variance, length_scale};
    const CholeskyFactor factor = chol_jitter(gram(times, params));
    return gp_rows_log_density(factor, block);
  };

  const double current_density = block_density(kp->length_scale);
  const double proposal =
      std::exp(std::log(kp->length_scale) + adapt->step() * rng.normal());

  bool accepted = false;
  try {
    // symmetric proposal on log(l) and a flat prior in log(l): the
    // acceptance ratio reduces to the block density ratio
    const double proposal_density = block_density(proposal);
    accepted = std::log(rng.uniform()) < proposal_density - current_density;
  } catch (const numerical_error&) {
    accepted = false;  // jitter ladder exhausted; treat as a rejection
  }
  if (accepted) kp->length_scale = proposal;
  adapt->record(accepted);
  return kp->length_scale;
}

double joint_log_density(const GibbsState& state, const std::vector<Dataset>& trials,
                         const HyperPriors& priors) {
  check_trials(trials);
  priors.validate();
  const Vector& times = shared_times(trials);
  const CholeskyFactor chol_f = chol_jitter(gram(times, state.kp_f));

  double density = 0.0;
  if (state.kind == ModelKind::oslmm) {
    for (std::size_t i = 0; i < trials.size(); ++i) {
      density += log_likelihood(trials[i],
                                latent_signal(state.u, state.h, state.f[i]), state.noise);
      density += gp_rows_log_density(chol_f, state.f[i]);
    }
    const CholeskyFactor chol_h = chol_jitter(gram(times, state.kp_h));
    density += gp_rows_log_density(chol_h, state.h);
    density += -0.5 * (static_cast<double>(state.v.size()) * kLog2Pi +
                       state.v.squaredNorm());
    density += log_inverse_gamma_density(state.noise.sigma_y2, priors.a, priors.b);
    density += log_inverse_gamma_density(state.kp_h.variance, priors.c, priors.d);
    return density;
  }

  const Eigen::Index p_dim = trials.front().channels();
  for (std::size_t i = 0; i < trials.size(); ++i) {
    density += log_likelihood(trials[i], slmm_mean(state.w_series, state.f[i], p_dim),
                              state.noise);
    density += gp_rows_log_density(chol_f, state.f[i]);
  }
  const CholeskyFactor chol_w = chol_jitter(gram(times, state.kp_w));
  density += gp_rows_log_density(chol_w, state.w_series);
  for (Eigen::Index p = 0; p < p_dim; ++p)
    density +=
        log_inverse_gamma_density((*state.noise.per_channel)[p], priors.a, priors.b);
  density += log_inverse_gamma_density(state.kp_w.variance, priors.c, priors.d);
  return density;
}

GibbsState oslmm_gibbs_sweep(const GibbsState& state, const std::vector<Dataset>& trials,
                             const HyperPriors& priors, const UpdateFlags& flags,
                             Rng& rng, double* log_density) {
  check_trials(trials);
  const Vector& times = shared_times(trials);
  GibbsState next = state;

  // The h and V slice moves shrink as the likelihood sharpens, so each block
  // runs a few passes per sweep. The passes cost O(PQT) against the
  // O(Q T^3) latent draw and leave the stationary distribution unchanged.
  constexpr int kLogScalePasses = 4;
  constexpr int kBasisPasses = 2;

  if (flags.latents)
    for (std::size_t i = 0; i < trials.size(); ++i)
      next.f[i] = gibbs_update_f(next, trials[i], rng);
  if (flags.log_scales)
    for (int pass = 0; pass < kLogScalePasses; ++pass)
      next.h = gibbs_update_h(next, trials, rng);
  if (flags.basis) {
    for (int pass = 0; pass < kBasisPasses; ++pass) {
      next.v = gibbs_update_V(next, trials, rng);
      next.u = polar_orthonormalize(next.v);
    }
  }
  if (flags.noise_variance)
    next.noise.sigma_y2 = sample_noise_variance(next, trials, priors, rng);
  if (flags.scale_variance)
    next.kp_h.variance = sample_scale_variance(next, times, priors, rng);
  if (flags.length_scales) {
    mh_update_lengthscale(next, Family::latent_f, trials, rng);
    mh_update_lengthscale(next, Family::scale_h, trials, rng);
  }
  if (log_density) *log_density = joint_log_density(next, trials, priors);
  return next;
}

GibbsState slmm_ess_sweep(const GibbsState& state, const std::vector<Dataset>& trials,
                          const HyperPriors& priors, const UpdateFlags& flags, Rng& rng,
                          double* log_density) {
  check_trials(trials);
  const Vector& times = shared_times(trials);
  const Eigen::Index p_dim = trials.front().channels();
  const Eigen::Index q_dim = state.latent_dim();
  const Eigen::Index t_dim = times.size();
  const auto n_trials = static_cast<Eigen::Index>(trials.size());
  GibbsState next = state;

  if (flags.latents) {
    const CholeskyFactor chol_w = chol_jitter(gram(times, state.kp_w));
    const CholeskyFactor chol_f = chol_jitter(gram(times, state.kp_f));
    const Eigen::Index w_size = p_dim * q_dim * t_dim;
    const Eigen::Index dim = w_size + n_trials * q_dim * t_dim;

    Vector current(dim);
    current.head(w_size) = Eigen::Map<const Vector>(next.w_series.data(), w_size);
    for (Eigen::Index i = 0; i < n_trials; ++i)
      current.segment(w_size + i * q_dim * t_dim, q_dim * t_dim) =
          Eigen::Map<const Vector>(next.f[i].data(), q_dim * t_dim);

    // rows-as-series draws: (Z L')' has independent N(0, L L') rows
    Vector nu(dim);
    {
      const Matrix z_w = rng.normal_matrix(p_dim * q_dim, t_dim);
      const Matrix nu_w = z_w * chol_w.lower.transpose();
      nu.head(w_size) = Eigen::Map<const Vector>(nu_w.data(), w_size);
      for (Eigen::Index i = 0; i < n_trials; ++i) {
        const Matrix z_f = rng.normal_matrix(q_dim, t_dim);
        const Matrix nu_f = z_f * chol_f.lower.transpose();
        nu.segment(w_size + i * q_dim * t_dim, q_dim * t_dim) =
            Eigen::Map<const Vector>(nu_f.data(), q_dim * t_dim);
      }
    }

    auto loglik = [&](const Vector& flat) {
      const Eigen::Map<const Matrix> w(flat.data(), p_dim * q_dim, t_dim);
      double ll = 0.0;
      for (Eigen::Index i = 0; i < n_trials; ++i) {
        const Eigen::Map<const Matrix> f(flat.data() + w_size + i * q_dim * t_dim, q_dim,
                                         t_dim);
        ll += log_likelihood(trials[static_cast<std::size_t>(i)],
                             slmm_mean(w, f, p_dim), next.noise);
      }
      return ll;
    };

    const EssResult step =
        ess_step_with_prior_draw(current, nu, loglik, rng, loglik(current));
    next.w_series = Eigen::Map<const Matrix>(step.state.data(), p_dim * q_dim, t_dim);
    for (Eigen::Index i = 0; i < n_trials; ++i)
      next.f[static_cast<std::size_t>(i)] = Eigen::Map<const Matrix>(
          step.state.data() + w_size + i * q_dim * t_dim, q_dim, t_dim);
  }

  if (flags.noise_variance)
    next.noise.per_channel = sample_noise_variance_per_channel(next, trials, priors, rng);
  if (flags.scale_variance)
    next.kp_w.variance = sample_scale_variance(next, times, priors, rng);
  if (flags.length_scales) {
    mh_update_lengthscale(next, Family::latent_f, trials, rng);
    mh_update_lengthscale(next, Family::mixing_w, trials, rng);
  }
  if (log_density) *log_density = joint_log_density(next, trials, priors);
  return next;
}

GibbsState init_state(ModelKind kind, const std::vector<Dataset>& trials,
                      Eigen::Index latent_dim) {
  check_trials(trials);
  const Eigen::Index p_dim = trials.front().channels();
  const Eigen::Index t_dim = trials.front().samples();
  const auto n_trials = static_cast<Eigen::Index>(trials.size());
  if (latent_dim < 1 || latent_dim > p_dim)
    throw config_error("latent dimension must satisfy 1 <= Q <= P");

  Matrix stacked(p_dim, t_dim * n_trials);
  for (Eigen::Index i = 0; i < n_trials; ++i)
    stacked.middleCols(i * t_dim, t_dim) =
        trials[static_cast<std::size_t>(i)].observations;
  const Vector channel_means = stacked.rowwise().mean();
  stacked.colwise() -= channel_means;

  Eigen::BDCSVD<Matrix> svd(stacked, Eigen::ComputeThinU);
  Matrix u0 = svd.matrixU().leftCols(latent_dim);
  canonicalize_column_signs(u0);

  GibbsState state;
  state.kind = kind;
  state.u = u0;
  state.v = u0;
  state.h = Matrix::Zero(latent_dim, t_dim);
  state.f.resize(static_cast<std::size_t>(n_trials));
  for (Eigen::Index i = 0; i < n_trials; ++i)
    state.f[static_cast<std::size_t>(i)] =
        u0.transpose() * trials[static_cast<std::size_t>(i)].observations;

  const double span =
      trials.front().times[t_dim - 1] - trials.front().times[0];
  const double default_scale = span > 0.0 ? span / 10.0 : 1.0;
  state.kp_f = {1.0, default_scale};
  state.kp_h = {1.0, default_scale};
  state.kp_w = {1.0, default_scale};

  const double pooled_var =
      std::max(stacked.squaredNorm() / static_cast<double>(stacked.size()), 1e-8);
  if (kind == ModelKind::oslmm) {
    state.noise.sigma_y2 = 0.1 * pooled_var;
  } else {
    state.noise.sigma_y2 = 0.1 * pooled_var;
    Vector per_channel(p_dim);
    for (Eigen::Index p = 0; p < p_dim; ++p)
      per_channel[p] = std::max(
          0.1 * stacked.row(p).squaredNorm() / static_cast<double>(stacked.cols()), 1e-8);
    state.noise.per_channel = per_channel;
    state.w_series.resize(p_dim * latent_dim, t_dim);
    const Eigen::Map<const Vector> u_flat(u0.data(), p_dim * latent_dim);
    state.w_series.colwise() = u_flat;
  }
  return state;
}

PosteriorSamples run_chain(ModelKind kind, const std::vector<Dataset>& trials,
                           const ChainConfig& config, const HyperPriors& priors,
                           const GibbsState& init,
                           std::vector<double>* iteration_seconds) {
  config.validate();
  priors.validate();
  check_trials(trials);
  if (init.kind != kind) throw config_error("init state model kind mismatch");
  if (init.f.size() != trials.size())
    throw config_error("init state trial count mismatch");

  Rng rng(config.seed);
  GibbsState current = init;
  PosteriorSamples out;
  out.log_density_trace.reserve(static_cast<std::size_t>(config.iterations));

  for (int iter = 0; iter < config.iterations; ++iter) {
    const bool adapting = iter < config.burnin;
    current.adapt_f.frozen = !adapting;
    current.adapt_mix.frozen = !adapting;

    const auto start = std::chrono::steady_clock::now();
    double log_density = 0.0;
    try {
      current = kind == ModelKind::oslmm
                    ? oslmm_gibbs_sweep(current, trials, priors, config.updates, rng,
                                        &log_density)
                    : slmm_ess_sweep(current, trials, priors, config.updates, rng,
                                     &log_density);
    } catch (const std::exception& e) {
      throw numerical_error("chain aborted at iteration " + std::to_string(iter) + ": " +
                            e.what());
    }
    if (iteration_seconds)
      iteration_seconds->push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
              .count());
    out.log_density_trace.push_back(log_density);
    if (iter >= config.burnin && (iter - config.burnin + 1) % config.thinning == 0)
      out.states.push_back(current);
  }
  return out;
}

}  // namespace oslmm
