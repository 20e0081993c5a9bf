#ifndef OSLMM_EVALUATION_HPP
#define OSLMM_EVALUATION_HPP

#include <optional>
#include <vector>

#include "oslmm/samplers.hpp"
#include "oslmm/types.hpp"

namespace oslmm {

/// Orthogonal Procrustes fit of an estimated latent block onto a reference.
struct AlignmentResult {
  Matrix rotation;  // Q x Q orthogonal, applied from the left
  Matrix aligned;   // rotation * estimate
  double residual_rmse = 0.0;
};

/// Finds the orthogonal R minimizing ||R * estimate - truth||_F (closed form
/// through the SVD of truth * estimate'). Rejects an all-zero estimate.
AlignmentResult procrustes_align(const Matrix& estimate, const Matrix& truth);

/// Root mean square over all entries.
double rmse(const Matrix& a, const Matrix& b);

/// rmse_a - rmse_b; positive means method b is the better one.
inline double delta_rmse(double rmse_a, double rmse_b) { return rmse_a - rmse_b; }

/// Latent-recovery summary: rows of the estimate are standardized (the truth
/// convention), Procrustes-aligned, then scored.
struct RecoveryResult {
  double aligned_rmse = 0.0;
  Vector per_dimension_correlation;  // Pearson r of aligned row q vs truth row q
  Matrix aligned;
};
RecoveryResult evaluate_recovery(const Matrix& estimate, const Matrix& truth);

struct LocoOptions {
  int sample_stride = 1;        // evaluate every k-th stored posterior sample
  bool exclude_target = true;   // false conditions on all channels
};

/// Posterior predictive mean of one channel of a test trial from the
/// remaining channels, conditioning the GP prior of f exactly on the
/// T*(P-1) retained observations for each stored posterior sample and
/// averaging the per-sample predictive means.
Vector loco_predict(const PosteriorSamples& posterior, const Dataset& trial,
                    Eigen::Index channel, const LocoOptions& options = {});

struct ChannelScore {
  double sse = 0.0;
  std::optional<double> r2;  // missing for zero-variance channels
};

/// Per-channel SSE and R^2 = 1 - SSE/TSS with TSS about the channel mean.
std::vector<ChannelScore> loco_report(const Matrix& predictions, const Matrix& truths);

/// Rotation (from the SVD of the stacked trials) ordering latent rows by
/// non-increasing power, applied to every trial.
struct PowerRotation {
  Matrix rotation;  // Q x Q orthogonal
  std::vector<Matrix> rotated;
};
PowerRotation rotate_latents_power(const std::vector<Matrix>& latents);

struct RidgeResult {
  double lambda = 0.0;
  double r2 = 0.0;                  // pooled held-out coefficient of determination
  Matrix coefficients;              // d x m, fit on all data at the chosen lambda
  Vector intercept;                 // m
  bool lambda_zero_excluded = false;
  std::vector<double> grid_errors;  // mean fold MSE per retained grid entry
  std::vector<double> grid;         // the retained grid entries
};

/// Cross-validated ridge regression of targets on features. Folds are
/// contiguous row blocks so the procedure is deterministic.
RidgeResult ridge_decode(const Matrix& features, const Matrix& targets,
                         const std::vector<double>& lambda_grid, int folds);

struct SummaryStats {
  std::optional<double> spearman_rho;
  std::optional<double> t_p_value;         // two-sided paired t-test on a - b
  std::optional<double> wilcoxon_p_value;  // two-sided signed-rank test
};

/// Rank and paired statistics of two equal-length series. Degenerate cases
/// (zero-variance ranks, all-zero differences) are reported missing.
SummaryStats summary_stats(const Vector& a, const Vector& b);

/// CDF of Student's t with `dof` degrees of freedom, exact through the
/// regularized incomplete beta function.
double student_t_cdf(double t, double dof);

/// Spearman rank correlation with average ranks for ties; missing when a
/// rank vector has no variance.
std::optional<double> spearman_correlation(const Vector& a, const Vector& b);

/// Two-sided signed-rank p-value on the differences; zeros dropped, exact
/// null distribution for n <= 25, normal approximation with tie correction
/// above. Missing once all differences are zero.
std::optional<double> wilcoxon_signed_rank_p(const Vector& differences);

/// Aggregate report emitted by the evaluation harness.
struct EvalReport {
  std::optional<double> rmse;
  std::optional<double> delta_rmse;
  std::vector<double> per_channel_sse;
  std::vector<std::optional<double>> per_channel_r2;
  std::optional<double> spearman_rho;
  std::optional<double> t_p_value;
  std::optional<double> wilcoxon_p_value;
};

}  // namespace oslmm

#endif
