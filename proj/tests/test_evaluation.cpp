#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "oslmm/evaluation.hpp"
#include "oslmm/kernels.hpp"
#include "oslmm/model.hpp"
#include "oslmm/synthetic.hpp"

using namespace oslmm;

namespace {

Matrix rotation_2d(double angle) {
  Matrix r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

}  // namespace

TEST_CASE("procrustes_align") {
  Rng rng(201);
  const Matrix truth = rng.normal_matrix(2, 30);

  SUBCASE("identity when the estimate equals the truth") {
    const AlignmentResult r = procrustes_align(truth, truth);
    CHECK((r.rotation - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.residual_rmse < 1e-12);
  }

  SUBCASE("recovers a constructed rotation") {
    const Matrix rot = rotation_2d(0.83);
    const AlignmentResult r = procrustes_align(rot.transpose() * truth, truth);
    CHECK((r.rotation - rot).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(r.residual_rmse < 1e-10);
  }

  SUBCASE("permutations with sign flips realign perfectly") {
    Matrix permuted(2, 30);
    permuted.row(0) = -truth.row(1);
    permuted.row(1) = truth.row(0);
    const AlignmentResult r = procrustes_align(permuted, truth);
    CHECK(r.residual_rmse < 1e-10);
  }

  SUBCASE("residual invariant to any pre-rotation of the estimate") {
    const Matrix estimate = rng.normal_matrix(2, 30);
    const double base = procrustes_align(estimate, truth).residual_rmse;
    for (double angle : {0.3, 1.2, 2.9}) {
      const double rotated =
          procrustes_align(rotation_2d(angle) * estimate, truth).residual_rmse;
      CHECK(std::abs(rotated - base) < 1e-10);
    }
  }

  SUBCASE("all-zero estimate rejected") {
    CHECK_THROWS_AS(procrustes_align(Matrix::Zero(2, 30), truth), config_error);
  }
}

TEST_CASE("rmse and delta_rmse") {
  Matrix a(1, 2), b(1, 2);
  a << 0.0, 0.0;
  b << 3.0, 4.0;
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(a, b) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-14));
  CHECK(delta_rmse(0.7, 0.7) == 0.0);
  CHECK(delta_rmse(0.9, 0.7) == doctest::Approx(0.2));
}

TEST_CASE("evaluate_recovery scores a scaled rotation as near-perfect") {
  Rng rng(202);
  LorenzConfig lc;
  lc.n_steps = 60;
  Matrix truth = lorenz_trajectory(lc);
  Matrix estimate = truth;
  estimate.row(0) *= 3.0;  // per-row scale is removed by standardization
  estimate.row(2) *= 0.5;
  const RecoveryResult r = evaluate_recovery(estimate, truth);
  for (Eigen::Index q = 0; q < 3; ++q) CHECK(r.per_dimension_correlation[q] > 0.999);
  CHECK(r.aligned_rmse < 0.05);
}

TEST_CASE("loco_predict") {
  Rng rng(203);
  const Eigen::Index p_dim = 8, q_dim = 2, t_dim = 30;
  const Vector times = Vector::LinSpaced(t_dim, 0.0, 6.0);

  GibbsState state;
  state.kind = ModelKind::oslmm;
  state.u = random_semiorthogonal(p_dim, q_dim, rng);
  state.v = state.u;
  state.kp_f = {1.0, 1.0};
  state.kp_h = {1.0, std::exp(1.0)};
  state.noise.sigma_y2 = 1e-8;

  // latents drawn from the prior, scales from the median kernel
  const CholeskyFactor chol_f = chol_jitter(gram(times, state.kp_f));
  Matrix f_true(q_dim, t_dim);
  for (Eigen::Index q = 0; q < q_dim; ++q)
    f_true.row(q) =
        (chol_f.lower.triangularView<Eigen::Lower>() * rng.normal_vector(t_dim))
            .transpose();
  state.h = 0.5 * sample_log_scales(ScaleKernel::kMedian, times, q_dim, rng);
  state.f = {f_true};

  Dataset trial;
  trial.times = times;
  trial.observations = latent_signal(state.u, state.h, f_true);

  PosteriorSamples posterior;
  posterior.states = {state};

  SUBCASE("prediction has length T and recovers a held-out channel") {
    for (Eigen::Index channel : {Eigen::Index(0), Eigen::Index(5)}) {
      const Vector pred = loco_predict(posterior, trial, channel);
      REQUIRE(pred.size() == t_dim);
      const double err = std::sqrt(
          (pred - trial.observations.row(channel).transpose()).squaredNorm() / t_dim);
      CHECK(err < 1e-2);
    }
  }

  SUBCASE("conditioning on all channels reproduces the model-mean fit") {
    NoiseModel noise;
    noise.sigma_y2 = state.noise.sigma_y2;
    const ProjectedData pd = project_observations(trial, state.u, state.h, noise);
    const Matrix k = gram(times, state.kp_f);
    Matrix f_hat(q_dim, t_dim);
    for (Eigen::Index q = 0; q < q_dim; ++q)
      f_hat.row(q) = latent_row_posterior(k, pd.projected.row(q).transpose(),
                                          pd.noise_diag.row(q).transpose())
                         .mean.transpose();
    const Matrix fit = latent_signal(state.u, state.h, f_hat);

    LocoOptions options;
    options.exclude_target = false;
    for (Eigen::Index channel : {Eigen::Index(1), Eigen::Index(6)}) {
      const Vector pred = loco_predict(posterior, trial, channel, options);
      CHECK((pred - fit.row(channel).transpose()).cwiseAbs().maxCoeff() < 1e-6);
    }
  }

  SUBCASE("channel bounds checked") {
    CHECK_THROWS_AS(loco_predict(posterior, trial, p_dim), config_error);
  }
}

TEST_CASE("loco_report") {
  SUBCASE("perfect predictions") {
    Matrix truth(2, 3);
    truth << 1.0, 2.0, 3.0, -1.0, 0.0, 1.0;
    const auto scores = loco_report(truth, truth);
    for (const auto& s : scores) {
      CHECK(s.sse == 0.0);
      REQUIRE(s.r2.has_value());
      CHECK(*s.r2 == 1.0);
    }
  }

  SUBCASE("predicting the channel mean gives R^2 = 0") {
    Matrix truth(1, 4);
    truth << 1.0, 2.0, 3.0, 4.0;
    const Matrix pred = Matrix::Constant(1, 4, 2.5);
    const auto scores = loco_report(pred, truth);
    CHECK(*scores[0].r2 == doctest::Approx(0.0));
  }

  SUBCASE("hand-computed R^2 = -1 case") {
    Matrix truth(1, 3), pred(1, 3);
    truth << 1.0, 2.0, 3.0;
    pred << 1.0, 2.0, 5.0;
    const auto scores = loco_report(pred, truth);
    CHECK(scores[0].sse == doctest::Approx(4.0));
    CHECK(*scores[0].r2 == doctest::Approx(-1.0));
  }

  SUBCASE("zero-variance channel reported missing") {
    const Matrix truth = Matrix::Constant(1, 3, 2.0);
    const Matrix pred = Matrix::Constant(1, 3, 1.0);
    const auto scores = loco_report(pred, truth);
    CHECK_FALSE(scores[0].r2.has_value());
  }

  SUBCASE("R^2 invariant to adding a constant to both sides") {
    Rng rng(204);
    const Matrix truth = rng.normal_matrix(1, 10);
    const Matrix pred = truth + 0.3 * rng.normal_matrix(1, 10);
    const auto base = loco_report(pred, truth);
    const auto shifted = loco_report(pred.array() + 5.0, truth.array() + 5.0);
    CHECK(*base[0].r2 == doctest::Approx(*shifted[0].r2).epsilon(1e-12));
  }
}

TEST_CASE("rotate_latents_power") {
  Rng rng(205);
  std::vector<Matrix> trials = {rng.normal_matrix(3, 40), rng.normal_matrix(3, 40)};
  trials[0].row(0) *= 0.2;  // make the power ordering nontrivial
  trials[1].row(2) *= 2.5;

  const PowerRotation result = rotate_latents_power(trials);

  SUBCASE("rotation is orthogonal and power is preserved") {
    CHECK(stiefel_defect(result.rotation) < 1e-10);
    double before = 0.0, after = 0.0;
    for (std::size_t i = 0; i < trials.size(); ++i) {
      before += trials[i].squaredNorm();
      after += result.rotated[i].squaredNorm();
    }
    CHECK(before == doctest::Approx(after).epsilon(1e-12));
  }

  SUBCASE("row powers are non-increasing and rows orthogonal") {
    Matrix stacked(3, 80);
    stacked << result.rotated[0], result.rotated[1];
    Vector powers = stacked.rowwise().squaredNorm();
    CHECK(powers[0] >= powers[1]);
    CHECK(powers[1] >= powers[2]);
    const Matrix cross = stacked * stacked.transpose();
    CHECK(std::abs(cross(0, 1)) < 1e-8);
    CHECK(std::abs(cross(0, 2)) < 1e-8);
    CHECK(std::abs(cross(1, 2)) < 1e-8);

    // powers match the squared singular values of the stacked input
    Matrix input_stacked(3, 80);
    input_stacked << trials[0], trials[1];
    Eigen::JacobiSVD<Matrix> svd(input_stacked);
    for (Eigen::Index q = 0; q < 3; ++q)
      CHECK(powers[q] ==
            doctest::Approx(std::pow(svd.singularValues()[q], 2)).epsilon(1e-8));
  }

  SUBCASE("idempotent up to column signs") {
    const PowerRotation twice = rotate_latents_power(result.rotated);
    for (Eigen::Index q = 0; q < 3; ++q) {
      const double same = (twice.rotated[0].row(q) - result.rotated[0].row(q)).norm();
      const double flipped =
          (twice.rotated[0].row(q) + result.rotated[0].row(q)).norm();
      CHECK(std::min(same, flipped) < 1e-8);
    }
  }
}

TEST_CASE("ridge_decode") {
  Rng rng(206);
  const Eigen::Index n = 60, d = 4;
  const Matrix x = rng.normal_matrix(n, d);
  const Matrix beta_true = rng.normal_matrix(d, 2);

  SUBCASE("realizable targets are fit nearly exactly at small lambda") {
    const Matrix y = x * beta_true;
    const RidgeResult r = ridge_decode(x, y, {1e-10, 1e-6, 1.0}, 4);
    CHECK(r.lambda <= 1e-6);
    CHECK(r.r2 >= 0.999);
  }

  SUBCASE("infinite shrinkage collapses to the training mean") {
    const Matrix y = x * beta_true;
    const RidgeResult r = ridge_decode(x, y, {1e12}, 4);
    CHECK(r.coefficients.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(std::abs(r.r2) < 0.1);
  }

  SUBCASE("chosen lambda minimizes the grid errors") {
    const Matrix y = x * beta_true + 0.5 * rng.normal_matrix(n, 2);
    const std::vector<double> grid = {1e-6, 1e-3, 0.1, 1.0, 10.0, 100.0};
    const RidgeResult r = ridge_decode(x, y, grid, 5);
    const auto best =
        std::min_element(r.grid_errors.begin(), r.grid_errors.end());
    CHECK(r.lambda ==
          r.grid[static_cast<std::size_t>(best - r.grid_errors.begin())]);
    CHECK(r.grid.size() == grid.size());
  }

  SUBCASE("lambda = 0 excluded on a rank-deficient design") {
    Matrix deficient = x;
    deficient.col(3) = 2.0 * deficient.col(0);  // exact collinearity
    const Matrix y = deficient * beta_true;
    const RidgeResult r = ridge_decode(deficient, y, {0.0, 1e-4, 1e-2}, 4);
    CHECK(r.lambda_zero_excluded);
    CHECK(r.grid.size() == 2);
    CHECK(r.lambda > 0.0);
  }

  SUBCASE("heldout R^2 invariant to orthogonal feature rotations at fixed lambda") {
    const Matrix y = x * beta_true + 0.3 * rng.normal_matrix(n, 2);
    const Matrix rot = random_semiorthogonal(d, d, rng);
    const RidgeResult plain = ridge_decode(x, y, {0.5}, 5);
    const RidgeResult rotated = ridge_decode(x * rot, y, {0.5}, 5);
    CHECK(plain.r2 == doctest::Approx(rotated.r2).epsilon(1e-10));
  }
}

TEST_CASE("student_t_cdf against closed forms") {
  // dof = 1 is Cauchy, dof = 2 has an elementary closed form
  for (double x : {-3.0, -1.0, -0.2, 0.0, 0.4, 1.0, 2.5}) {
    CHECK(student_t_cdf(x, 1.0) ==
          doctest::Approx(0.5 + std::atan(x) / M_PI).epsilon(1e-12));
    CHECK(student_t_cdf(x, 2.0) ==
          doctest::Approx(0.5 + x / (2.0 * std::sqrt(2.0 + x * x))).epsilon(1e-12));
  }
  CHECK(student_t_cdf(0.0, 30.0) == doctest::Approx(0.5));
}

TEST_CASE("summary_stats") {
  SUBCASE("monotone pairs give spearman rho = 1") {
    Vector a(5), b(5);
    a << 1.0, 2.0, 3.0, 4.0, 5.0;
    b << 10.0, 20.0, 25.0, 40.0, 80.0;
    const SummaryStats s = summary_stats(a, b);
    REQUIRE(s.spearman_rho.has_value());
    CHECK(*s.spearman_rho == doctest::Approx(1.0));
  }

  SUBCASE("identical series: wilcoxon and t missing, spearman 1") {
    Vector a(4);
    a << 3.0, 1.0, 4.0, 1.5;
    const SummaryStats s = summary_stats(a, a);
    CHECK_FALSE(s.wilcoxon_p_value.has_value());
    CHECK_FALSE(s.t_p_value.has_value());
    REQUIRE(s.spearman_rho.has_value());
    CHECK(*s.spearman_rho == doctest::Approx(1.0));
  }

  SUBCASE("wilcoxon exact p at n=8 matches full sign enumeration") {
    Vector d(8);
    d << 1.3, -0.4, 2.2, 0.7, -1.9, 0.7, 3.1, -0.2;  // includes a tie

    // oracle: enumerate all 2^8 sign assignments over the same average ranks
    std::vector<double> abs_d(8);
    for (int i = 0; i < 8; ++i) abs_d[static_cast<std::size_t>(i)] = std::abs(d[i]);
    std::vector<std::size_t> order(8);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return abs_d[i] < abs_d[j]; });
    std::vector<double> ranks(8);
    std::size_t i = 0;
    while (i < 8) {
      std::size_t j = i;
      while (j + 1 < 8 && abs_d[order[j + 1]] == abs_d[order[i]]) ++j;
      const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
      i = j + 1;
    }
    double w_obs = 0.0;
    for (int k = 0; k < 8; ++k)
      if (d[k] > 0.0) w_obs += ranks[static_cast<std::size_t>(k)];
    int count_le = 0, count_ge = 0;
    for (int mask = 0; mask < 256; ++mask) {
      double w = 0.0;
      for (int k = 0; k < 8; ++k)
        if (mask & (1 << k)) w += ranks[static_cast<std::size_t>(k)];
      if (w <= w_obs) ++count_le;
      if (w >= w_obs) ++count_ge;
    }
    const double oracle =
        std::min(1.0, 2.0 * std::min(count_le, count_ge) / 256.0);

    const auto p = wilcoxon_signed_rank_p(d);
    REQUIRE(p.has_value());
    CHECK(std::abs(*p - oracle) < 1e-6);
  }

  SUBCASE("large-sample wilcoxon uses the normal approximation sanely") {
    Rng rng(207);
    Vector d(40);
    for (Eigen::Index k = 0; k < 40; ++k) d[k] = rng.normal() + 0.1;
    const auto p = wilcoxon_signed_rank_p(d);
    REQUIRE(p.has_value());
    CHECK(*p > 0.0);
    CHECK(*p <= 1.0);
  }

  SUBCASE("length and size guards") {
    Vector a(2), b(3);
    CHECK_THROWS_AS(summary_stats(a, b), config_error);
    Vector c(2), e(2);
    CHECK_THROWS_AS(summary_stats(c, e), config_error);
  }
}
