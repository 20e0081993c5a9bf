#include "oslmm/evaluation.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "oslmm/kernels.hpp"
#include "oslmm/model.hpp"
#include "oslmm/synthetic.hpp"

namespace oslmm {

AlignmentResult procrustes_align(const Matrix& estimate, const Matrix& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw config_error("procrustes_align shape mismatch");
  if (estimate.norm() == 0.0)
    throw config_error("procrustes_align rejects an all-zero estimate");

  const Matrix cross = truth * estimate.transpose();
  Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  AlignmentResult result;
  result.rotation = svd.matrixU() * svd.matrixV().transpose();
  result.aligned = result.rotation * estimate;
  result.residual_rmse = rmse(result.aligned, truth);
  return result;
}

double rmse(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw config_error("rmse shape mismatch");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

RecoveryResult evaluate_recovery(const Matrix& estimate, const Matrix& truth) {
  Matrix standardized = estimate;
  standardize_rows(standardized);
  const AlignmentResult alignment = procrustes_align(standardized, truth);

  RecoveryResult result;
  result.aligned_rmse = alignment.residual_rmse;
  result.aligned = alignment.aligned;
  result.per_dimension_correlation.resize(truth.rows());
  for (Eigen::Index q = 0; q < truth.rows(); ++q) {
    const Eigen::RowVectorXd x =
        alignment.aligned.row(q).array() - alignment.aligned.row(q).mean();
    const Eigen::RowVectorXd y = truth.row(q).array() - truth.row(q).mean();
    const double denom = x.norm() * y.norm();
    result.per_dimension_correlation[q] = denom > 0.0 ? x.dot(y) / denom : 0.0;
  }
  return result;
}

Vector loco_predict(const PosteriorSamples& posterior, const Dataset& trial,
                    Eigen::Index channel, const LocoOptions& options) {
  trial.validate();
  if (posterior.states.empty()) throw config_error("loco_predict needs posterior samples");
  if (options.sample_stride < 1) throw config_error("loco sample stride must be >= 1");
  const Eigen::Index p_dim = trial.channels();
  const Eigen::Index t_dim = trial.samples();
  if (channel < 0 || channel >= p_dim) throw config_error("loco channel out of range");

  Vector prediction = Vector::Zero(t_dim);
  int used = 0;
  for (std::size_t s = 0; s < posterior.states.size();
       s += static_cast<std::size_t>(options.sample_stride)) {
    const GibbsState& state = posterior.states[s];
    if (state.kind != ModelKind::oslmm || state.u.size() == 0)
      throw config_error("loco_predict requires oslmm posterior samples");
    const Eigen::Index q_dim = state.u.cols();
    if (state.u.rows() != p_dim || state.h.cols() != t_dim)
      throw data_error("posterior and trial shapes disagree");

    const CholeskyFactor chol_k = chol_jitter(gram(trial.times, state.kp_f));
    const Matrix k_inverse = chol_k.solve(Matrix::Identity(t_dim, t_dim));
    const Matrix scale = state.h.array().exp().matrix();  // exp(h_q(t))
    const double sigma2 = state.noise.sigma_y2;

    // Gram of the retained mixing columns: U'U - u_p u_p' when a channel is
    // held out (U has orthonormal columns), the identity otherwise.
    const Vector target_row = state.u.row(channel).transpose();
    Matrix column_gram = Matrix::Identity(q_dim, q_dim);
    if (options.exclude_target) column_gram -= target_row * target_row.transpose();

    const Matrix projected = state.u.transpose() * trial.observations;  // Q x T

    // posterior precision of vec(f) in (q, t) = q * T + t ordering
    Matrix precision = Matrix::Zero(q_dim * t_dim, q_dim * t_dim);
    for (Eigen::Index q = 0; q < q_dim; ++q)
      precision.block(q * t_dim, q * t_dim, t_dim, t_dim) = k_inverse;
    Vector rhs(q_dim * t_dim);
    for (Eigen::Index t = 0; t < t_dim; ++t) {
      for (Eigen::Index q = 0; q < q_dim; ++q) {
        double ip = projected(q, t);
        if (options.exclude_target)
          ip -= target_row[q] * trial.observations(channel, t);
        rhs[q * t_dim + t] = scale(q, t) * ip / sigma2;
        for (Eigen::Index q2 = 0; q2 < q_dim; ++q2)
          precision(q * t_dim + t, q2 * t_dim + t) +=
              column_gram(q, q2) * scale(q, t) * scale(q2, t) / sigma2;
      }
    }

    const Vector f_hat = chol_jitter(precision).solve(rhs);
    for (Eigen::Index t = 0; t < t_dim; ++t) {
      double value = 0.0;
      for (Eigen::Index q = 0; q < q_dim; ++q)
        value += target_row[q] * scale(q, t) * f_hat[q * t_dim + t];
      prediction[t] += value;
    }
    ++used;
  }
  return prediction / static_cast<double>(used);
}

std::vector<ChannelScore> loco_report(const Matrix& predictions, const Matrix& truths) {
  if (predictions.rows() != truths.rows() || predictions.cols() != truths.cols())
    throw config_error("loco_report shape mismatch");
  std::vector<ChannelScore> scores(static_cast<std::size_t>(truths.rows()));
  for (Eigen::Index p = 0; p < truths.rows(); ++p) {
    ChannelScore& score = scores[static_cast<std::size_t>(p)];
    score.sse = (predictions.row(p) - truths.row(p)).squaredNorm();
    const double mean = truths.row(p).mean();
    const double tss = (truths.row(p).array() - mean).matrix().squaredNorm();
    if (tss > 0.0) score.r2 = 1.0 - score.sse / tss;
  }
  return scores;
}

PowerRotation rotate_latents_power(const std::vector<Matrix>& latents) {
  if (latents.empty()) throw config_error("rotate_latents_power needs at least one trial");
  const Eigen::Index q_dim = latents.front().rows();
  Eigen::Index total_cols = 0;
  for (const auto& m : latents) {
    if (m.rows() != q_dim) throw config_error("latent trials must share the row count");
    total_cols += m.cols();
  }
  Matrix stacked(q_dim, total_cols);
  Eigen::Index offset = 0;
  for (const auto& m : latents) {
    stacked.middleCols(offset, m.cols()) = m;
    offset += m.cols();
  }

  Eigen::JacobiSVD<Matrix> svd(stacked, Eigen::ComputeThinU);
  Matrix basis = svd.matrixU();
  canonicalize_column_signs(basis);

  PowerRotation result;
  result.rotation = basis.transpose();
  result.rotated.reserve(latents.size());
  for (const auto& m : latents) result.rotated.push_back(result.rotation * m);
  return result;
}

RidgeResult ridge_decode(const Matrix& features, const Matrix& targets,
                         const std::vector<double>& lambda_grid, int folds) {
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  if (targets.rows() != n) throw config_error("ridge_decode row count mismatch");
  if (folds < 2 || folds > n) throw config_error("ridge_decode requires 2 <= folds <= n");
  if (lambda_grid.empty()) throw config_error("ridge_decode requires a lambda grid");
  for (double l : lambda_grid)
    if (!(l >= 0.0)) throw config_error("ridge_decode lambdas must be nonnegative");

  RidgeResult result;
  // lambda = 0 only stays on the grid when the full design has full rank
  bool keep_zero = true;
  if (std::any_of(lambda_grid.begin(), lambda_grid.end(), [](double l) { return l == 0.0; })) {
    Matrix centered = features.rowwise() - features.colwise().mean();
    Eigen::ColPivHouseholderQR<Matrix> qr(centered);
    keep_zero = qr.rank() == d;
    result.lambda_zero_excluded = !keep_zero;
  }
  for (double l : lambda_grid)
    if (l > 0.0 || keep_zero) result.grid.push_back(l);
  if (result.grid.empty())
    throw config_error("ridge_decode grid is empty after excluding lambda = 0");

  auto fold_range = [&](int k) {
    const Eigen::Index lo = k * n / folds;
    const Eigen::Index hi = (k + 1) * n / folds;
    return std::pair<Eigen::Index, Eigen::Index>(lo, hi);
  };

  auto fit = [&](const Matrix& x, const Matrix& y, double lambda) {
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const Eigen::RowVectorXd y_mean = y.colwise().mean();
    const Matrix xc = x.rowwise() - x_mean;
    const Matrix yc = y.rowwise() - y_mean;
    Matrix normal = xc.transpose() * xc;
    normal.diagonal().array() += lambda;
    const Matrix beta = normal.ldlt().solve(xc.transpose() * yc);
    return std::tuple<Matrix, Eigen::RowVectorXd, Eigen::RowVectorXd>(beta, x_mean, y_mean);
  };

  result.grid_errors.assign(result.grid.size(), 0.0);
  for (std::size_t gi = 0; gi < result.grid.size(); ++gi) {
    double total_mse = 0.0;
    for (int k = 0; k < folds; ++k) {
      const auto [lo, hi] = fold_range(k);
      const Eigen::Index held = hi - lo;
      Matrix x_train(n - held, d), y_train(n - held, targets.cols());
      x_train << features.topRows(lo), features.bottomRows(n - hi);
      y_train << targets.topRows(lo), targets.bottomRows(n - hi);
      const auto [beta, x_mean, y_mean] = fit(x_train, y_train, result.grid[gi]);
      const Matrix pred = ((features.middleRows(lo, held).rowwise() - x_mean) * beta)
                              .rowwise() + y_mean;
      total_mse += (pred - targets.middleRows(lo, held)).squaredNorm() /
                   static_cast<double>(held * targets.cols());
    }
    result.grid_errors[gi] = total_mse / folds;
  }

  const auto best = std::min_element(result.grid_errors.begin(), result.grid_errors.end());
  result.lambda = result.grid[static_cast<std::size_t>(best - result.grid_errors.begin())];

  // pooled held-out R^2 at the chosen lambda
  double sse = 0.0, tss = 0.0;
  const Eigen::RowVectorXd global_mean = targets.colwise().mean();
  for (int k = 0; k < folds; ++k) {
    const auto [lo, hi] = fold_range(k);
    const Eigen::Index held = hi - lo;
    Matrix x_train(n - held, d), y_train(n - held, targets.cols());
    x_train << features.topRows(lo), features.bottomRows(n - hi);
    y_train << targets.topRows(lo), targets.bottomRows(n - hi);
    const auto [beta, x_mean, y_mean] = fit(x_train, y_train, result.lambda);
    const Matrix pred = ((features.middleRows(lo, held).rowwise() - x_mean) * beta)
                            .rowwise() + y_mean;
    sse += (pred - targets.middleRows(lo, held)).squaredNorm();
    tss += (targets.middleRows(lo, held).rowwise() - global_mean).squaredNorm();
  }
  result.r2 = tss > 0.0 ? 1.0 - sse / tss : 0.0;

  const auto [beta, x_mean, y_mean] = fit(features, targets, result.lambda);
  result.coefficients = beta;
  result.intercept = (y_mean - x_mean * beta).transpose();
  return result;
}

namespace {

Vector average_ranks(const Vector& values) {
  const Eigen::Index n = values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index i, Eigen::Index j) { return values[i] < values[j]; });
  Vector ranks(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

std::optional<double> spearman_correlation(const Vector& a, const Vector& b) {
  const Vector ra = average_ranks(a);
  const Vector rb = average_ranks(b);
  const Eigen::RowVectorXd xa = (ra.array() - ra.mean()).transpose();
  const Eigen::RowVectorXd xb = (rb.array() - rb.mean()).transpose();
  const double denom = xa.norm() * xb.norm();
  if (denom == 0.0) return std::nullopt;
  return xa.dot(xb) / denom;
}

double student_t_cdf(double t, double dof) {
  if (!(dof > 0.0)) throw config_error("student_t_cdf requires dof > 0");
  // regularized incomplete beta via the Lentz continued fraction
  auto incomplete_beta = [](double a, double b, double x, const auto& self) -> double {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - self(b, a, 1.0 - x, self);
    const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double front =
        std::exp(a * std::log(x) + b * std::log(1.0 - x) - log_beta) / a;
    double f = 1.0, c = 1.0, d = 0.0;
    for (int i = 0; i <= 400; ++i) {
      const int m = i / 2;
      double numerator;
      if (i == 0)
        numerator = 1.0;
      else if (i % 2 == 0)
        numerator = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
      else
        numerator = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
      d = 1.0 + numerator * d;
      if (std::abs(d) < 1e-30) d = 1e-30;
      d = 1.0 / d;
      c = 1.0 + numerator / c;
      if (std::abs(c) < 1e-30) c = 1e-30;
      f *= c * d;
      if (std::abs(1.0 - c * d) < 1e-14) break;
    }
    return front * (f - 1.0);
  };
  const double x = dof / (dof + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, x, incomplete_beta);
  return t > 0.0 ? 1.0 - tail : tail;
}

std::optional<double> wilcoxon_signed_rank_p(const Vector& differences) {
  std::vector<double> abs_nonzero;
  std::vector<bool> positive;
  for (Eigen::Index i = 0; i < differences.size(); ++i) {
    if (differences[i] == 0.0) continue;  // zeros dropped by convention
    abs_nonzero.push_back(std::abs(differences[i]));
    positive.push_back(differences[i] > 0.0);
  }
  const auto n = static_cast<Eigen::Index>(abs_nonzero.size());
  if (n == 0) return std::nullopt;

  const Vector ranks =
      average_ranks(Eigen::Map<const Vector>(abs_nonzero.data(), n));
  double w_plus = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (positive[static_cast<std::size_t>(i)]) w_plus += ranks[i];

  if (n <= 25) {
    // exact null distribution over doubled ranks (average ranks are
    // half-integers, so doubling keeps everything integral)
    std::vector<long> doubled(static_cast<std::size_t>(n));
    long total = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      doubled[static_cast<std::size_t>(i)] = std::lround(2.0 * ranks[i]);
      total += doubled[static_cast<std::size_t>(i)];
    }
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    for (long r : doubled)
      for (long s = total - r; s >= 0; --s)
        if (counts[static_cast<std::size_t>(s)] > 0.0)
          counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
    const double denom = std::pow(2.0, static_cast<double>(n));
    const long w2 = std::lround(2.0 * w_plus);
    double lower = 0.0, upper = 0.0;
    for (long s = 0; s <= total; ++s) {
      if (s <= w2) lower += counts[static_cast<std::size_t>(s)];
      if (s >= w2) upper += counts[static_cast<std::size_t>(s)];
    }
    return std::min(1.0, 2.0 * std::min(lower, upper) / denom);
  }

  // normal approximation with tie correction
  const auto dn = static_cast<double>(n);
  double tie_term = 0.0;
  {
    std::vector<double> sorted = abs_nonzero;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const auto t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double mean = dn * (dn + 1.0) / 4.0;
  const double variance = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
  if (variance <= 0.0) return std::nullopt;
  const double z = (w_plus - mean) / std::sqrt(variance);
  return std::min(1.0, 2.0 * (1.0 - normal_cdf(std::abs(z))));
}

SummaryStats summary_stats(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw config_error("summary_stats length mismatch");
  if (a.size() < 3) throw config_error("summary_stats requires at least 3 pairs");

  SummaryStats stats;
  stats.spearman_rho = spearman_correlation(a, b);

  const Vector diff = a - b;
  const double mean = diff.mean();
  const auto n = static_cast<double>(diff.size());
  const double sd =
      std::sqrt((diff.array() - mean).matrix().squaredNorm() / (n - 1.0));
  if (sd > 0.0) {
    const double t = mean / (sd / std::sqrt(n));
    stats.t_p_value = 2.0 * (1.0 - student_t_cdf(std::abs(t), n - 1.0));
  }
  stats.wilcoxon_p_value = wilcoxon_signed_rank_p(diff);
  return stats;
}

}  // namespace oslmm
