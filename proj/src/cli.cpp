#include "oslmm/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <vector>

#include "oslmm/evaluation.hpp"
#include "oslmm/io.hpp"
#include "oslmm/model.hpp"
#include "oslmm/samplers.hpp"
#include "oslmm/synthetic.hpp"

namespace oslmm::cli {

namespace fs = std::filesystem;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw config_error(path.string() + ": " + e.what());
  }
}

std::string matrix_checksum(const Matrix& m) {
  return fnv1a_hex(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

std::vector<Matrix> posterior_mean_latents(const PosteriorArchive& archive) {
  const std::size_t n_trials = archive.states.front().f.size();
  std::vector<Matrix> means(n_trials);
  for (std::size_t i = 0; i < n_trials; ++i) {
    Matrix sum = Matrix::Zero(archive.states.front().f[i].rows(),
                              archive.states.front().f[i].cols());
    for (const GibbsState& s : archive.states) sum += s.f[i];
    means[i] = sum / static_cast<double>(archive.states.size());
  }
  return means;
}

std::vector<Matrix> posterior_mean_scaled_latents(const PosteriorArchive& archive) {
  const std::size_t n_trials = archive.states.front().f.size();
  std::vector<Matrix> means(n_trials);
  for (std::size_t i = 0; i < n_trials; ++i) {
    Matrix sum = Matrix::Zero(archive.states.front().f[i].rows(),
                              archive.states.front().f[i].cols());
    for (const GibbsState& s : archive.states)
      sum += orthonormalized_latents(s.h, s.f[i]);
    means[i] = sum / static_cast<double>(archive.states.size());
  }
  return means;
}

void check_archive_data(const PosteriorArchive& archive,
                        const std::vector<Dataset>& trials) {
  const GibbsState& first = archive.states.front();
  const Eigen::Index p_dim = archive.model == ModelKind::oslmm
                                 ? first.u.rows()
                                 : first.w_series.rows() / first.latent_dim();
  for (const Dataset& d : trials) {
    if (d.channels() != p_dim)
      throw data_error("dataset channel count differs from the fitted model");
    if (d.samples() != archive.times.size() || d.times != archive.times)
      throw data_error("dataset time grid differs from the fitted model");
  }
}

}  // namespace

int cmd_generate(const fs::path& config_path) {
  const json raw = read_json_file(config_path);
  const GenerateConfig config = parse_generate_config(raw, env_seed_override());
  fs::create_directories(config.out_dir);

  Rng rng(config.dgp.seed);
  std::vector<SyntheticBundle> bundles;
  if (config.mdgp) {
    bundles = generate_mdgp({config.dgp, config.n_trials, config.perturb_sigma}, rng);
  } else {
    bundles.push_back(generate_dgp(config.dgp, rng));
  }

  std::vector<Dataset> trials;
  std::vector<Matrix> latents, log_scales, bases;
  for (const SyntheticBundle& b : bundles) {
    trials.push_back(b.data);
    latents.push_back(b.latents);
    log_scales.push_back(b.log_scales);
    bases.push_back(b.basis);
  }

  const fs::path data_path = config.out_dir / "data.csv";
  const fs::path latents_path = config.out_dir / "truth_latents.csv";
  const fs::path scales_path = config.out_dir / "truth_logscales.csv";
  const fs::path basis_path = config.out_dir / "truth_basis.csv";
  write_dataset_csv(data_path, trials);
  write_latents_csv(latents_path, trials.front().times, latents, "latent");
  write_latents_csv(scales_path, trials.front().times, log_scales, "logscale");
  write_basis_csv(basis_path, bases);

  json manifest;
  manifest["kind"] = config.mdgp ? "mdgp" : "dgp";
  manifest["seed"] = config.dgp.seed;
  manifest["config"] = raw;
  manifest["files"] = {{"data", "data.csv"},
                       {"truth_latents", "truth_latents.csv"},
                       {"truth_logscales", "truth_logscales.csv"},
                       {"truth_basis", "truth_basis.csv"}};
  manifest["checksums"] = {{"data.csv", file_checksum(data_path)},
                           {"truth_latents.csv", file_checksum(latents_path)},
                           {"truth_logscales.csv", file_checksum(scales_path)},
                           {"truth_basis.csv", file_checksum(basis_path)}};
  json basis_checksums = json::array();
  for (const Matrix& u : bases) basis_checksums.push_back(matrix_checksum(u));
  manifest["basis_checksums"] = basis_checksums;
  atomic_write(config.out_dir / "manifest.json", manifest.dump(2) + "\n");

  std::printf("generated %zu trial(s): P=%td T=%td -> %s\n", bundles.size(),
              trials.front().channels(), trials.front().samples(),
              data_path.string().c_str());
  return 0;
}

int cmd_fit(const fs::path& config_path, const fs::path& data_path) {
  const json raw = read_json_file(config_path);
  const RunConfig config = parse_run_config(raw, env_seed_override());
  const std::vector<Dataset> trials = read_dataset_csv(data_path);

  GibbsState init = init_state(config.model, trials, config.latent_dim);
  if (config.init_lengthscale_f) init.kp_f.length_scale = *config.init_lengthscale_f;
  if (config.init_lengthscale_scales)
    init.kp_h.length_scale = *config.init_lengthscale_scales;
  if (config.init_lengthscale_mixing)
    init.kp_w.length_scale = *config.init_lengthscale_mixing;
  if (config.init_noise_variance) {
    init.noise.sigma_y2 = *config.init_noise_variance;
    if (init.noise.per_channel)
      init.noise.per_channel->setConstant(*config.init_noise_variance);
  }

  std::vector<double> iteration_seconds;
  const PosteriorSamples posterior = run_chain(config.model, trials, config.chain,
                                               config.priors, init, &iteration_seconds);

  PosteriorArchive archive;
  archive.model = config.model;
  archive.seed = config.chain.seed;
  archive.config = raw;
  archive.times = trials.front().times;
  archive.states = posterior.states;
  archive.log_density_trace = posterior.log_density_trace;
  save_archive(config.output, archive);

  std::vector<double> ms(iteration_seconds.size());
  std::transform(iteration_seconds.begin(), iteration_seconds.end(), ms.begin(),
                 [](double s) { return 1e3 * s; });
  const double mean =
      std::accumulate(ms.begin(), ms.end(), 0.0) / std::max<std::size_t>(1, ms.size());
  std::printf("fit %s: %zu samples stored -> %s\n",
              config.model == ModelKind::oslmm ? "oslmm" : "slmm",
              posterior.states.size(), config.output.string().c_str());
  std::printf("per-iteration time: mean %.3f ms, p50 %.3f ms, p95 %.3f ms\n", mean,
              percentile(ms, 0.50), percentile(ms, 0.95));
  return 0;
}

namespace {

int eval_recovery(const PosteriorArchive& archive, const fs::path& data_dir,
                  const std::vector<Dataset>& trials, const fs::path& out_dir) {
  const fs::path truth_path = data_dir / "truth_latents.csv";
  if (!fs::exists(truth_path))
    throw data_error("recovery task needs ground truth: " + truth_path.string());
  const std::vector<Matrix> truth = read_latents_csv(truth_path);
  if (truth.size() != archive.states.front().f.size())
    throw data_error("ground truth trial count differs from the archive");

  const std::vector<Matrix> means = posterior_mean_latents(archive);
  json per_trial_rmse = json::array();
  json per_trial_corr = json::array();
  double total = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    const RecoveryResult r = evaluate_recovery(means[i], truth[i]);
    per_trial_rmse.push_back(r.aligned_rmse);
    json corr = json::array();
    for (Eigen::Index q = 0; q < r.per_dimension_correlation.size(); ++q)
      corr.push_back(r.per_dimension_correlation[q]);
    per_trial_corr.push_back(corr);
    total += r.aligned_rmse;
  }

  write_latents_csv(out_dir / "latents_mean.csv", trials.front().times, means, "latent");
  json report;
  report["task"] = "recovery";
  report["per_trial_rmse"] = per_trial_rmse;
  report["mean_rmse"] = total / static_cast<double>(means.size());
  report["per_dimension_correlation"] = per_trial_corr;
  report["latents_mean_csv"] = "latents_mean.csv";

  // the scale-absorbed trajectories exp(h) .* f, the model's input-dependent
  // dynamics, compared against the equally scaled ground truth
  const fs::path scales_path = data_dir / "truth_logscales.csv";
  if (archive.model == ModelKind::oslmm && fs::exists(scales_path)) {
    const std::vector<Matrix> truth_scales = read_latents_csv(scales_path);
    const std::vector<Matrix> scaled_means = posterior_mean_scaled_latents(archive);
    json scaled_rmse = json::array();
    json scaled_corr = json::array();
    double scaled_total = 0.0;
    for (std::size_t i = 0; i < scaled_means.size(); ++i) {
      const Matrix truth_c = orthonormalized_latents(truth_scales[i], truth[i]);
      const RecoveryResult r = evaluate_recovery(scaled_means[i], truth_c);
      scaled_rmse.push_back(r.aligned_rmse);
      json corr = json::array();
      for (Eigen::Index q = 0; q < r.per_dimension_correlation.size(); ++q)
        corr.push_back(r.per_dimension_correlation[q]);
      scaled_corr.push_back(corr);
      scaled_total += r.aligned_rmse;
    }
    report["per_trial_scaled_rmse"] = scaled_rmse;
    report["mean_scaled_rmse"] = scaled_total / static_cast<double>(scaled_means.size());
    report["scaled_per_dimension_correlation"] = scaled_corr;
  }

  atomic_write(out_dir / "recovery.json", report.dump(2) + "\n");
  std::printf("recovery: mean aligned rmse %.6g over %zu trial(s)\n",
              total / static_cast<double>(means.size()), means.size());
  return 0;
}

int eval_loco(const PosteriorArchive& archive, const std::vector<Dataset>& trials,
              const fs::path& out_dir, int sample_stride) {
  if (archive.model != ModelKind::oslmm)
    throw config_error("loco evaluation requires an oslmm archive");
  PosteriorSamples posterior;
  posterior.states = archive.states;
  LocoOptions options;
  options.sample_stride = sample_stride;

  std::string csv = "trial,channel,sse,r2\n";
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const Dataset& trial = trials[i];
    Matrix predictions(trial.channels(), trial.samples());
    for (Eigen::Index p = 0; p < trial.channels(); ++p)
      predictions.row(p) = loco_predict(posterior, trial, p, options).transpose();
    const std::vector<ChannelScore> scores =
        loco_report(predictions, trial.observations);
    for (Eigen::Index p = 0; p < trial.channels(); ++p) {
      const ChannelScore& s = scores[static_cast<std::size_t>(p)];
      csv += std::to_string(i) + "," + std::to_string(p) + "," + format_double(s.sse) +
             "," + (s.r2 ? format_double(*s.r2) : "nan") + "\n";
    }
  }
  atomic_write(out_dir / "loco.csv", csv);
  std::printf("loco: wrote per-channel scores for %zu trial(s)\n", trials.size());
  return 0;
}

int eval_compare(const PosteriorArchive& archive, const fs::path& data_dir,
                 const fs::path& baseline_path, const fs::path& out_dir) {
  const fs::path truth_path = data_dir / "truth_latents.csv";
  if (!fs::exists(truth_path))
    throw data_error("compare task needs ground truth: " + truth_path.string());
  if (baseline_path.empty())
    throw config_error("compare task needs --baseline <latents csv>");
  const std::vector<Matrix> truth = read_latents_csv(truth_path);
  const std::vector<Matrix> baseline = read_latents_csv(baseline_path);
  if (baseline.size() != truth.size())
    throw data_error("baseline trial count differs from the ground truth");

  const std::vector<Matrix> means = posterior_mean_latents(archive);
  if (means.size() != truth.size())
    throw data_error("archive trial count differs from the ground truth");

  const auto n = static_cast<Eigen::Index>(truth.size());
  Vector rmse_ours(n), rmse_baseline(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (baseline[idx].rows() != truth[idx].rows() ||
        baseline[idx].cols() != truth[idx].cols())
      throw data_error("baseline latent shapes differ from the ground truth");
    rmse_ours[i] = evaluate_recovery(means[idx], truth[idx]).aligned_rmse;
    rmse_baseline[i] = evaluate_recovery(baseline[idx], truth[idx]).aligned_rmse;
  }

  EvalReport summary;
  summary.rmse = rmse_ours.mean();
  summary.delta_rmse = delta_rmse(rmse_baseline.mean(), rmse_ours.mean());
  if (n >= 3) {
    const SummaryStats stats = summary_stats(rmse_baseline, rmse_ours);
    summary.spearman_rho = stats.spearman_rho;
    summary.t_p_value = stats.t_p_value;
    summary.wilcoxon_p_value = stats.wilcoxon_p_value;
  }

  json report = eval_report_to_json(summary);
  report["task"] = "compare";
  report["rmse_baseline"] = rmse_baseline.mean();
  json ours = json::array(), base = json::array();
  for (Eigen::Index i = 0; i < n; ++i) {
    ours.push_back(rmse_ours[i]);
    base.push_back(rmse_baseline[i]);
  }
  report["per_trial_rmse_ours"] = ours;
  report["per_trial_rmse_baseline"] = base;
  atomic_write(out_dir / "compare.json", report.dump(2) + "\n");
  std::printf("compare: delta rmse %.6g (baseline %.6g, ours %.6g)\n",
              report["delta_rmse"].get<double>(), rmse_baseline.mean(),
              rmse_ours.mean());
  return 0;
}

}  // namespace

int cmd_eval(const fs::path& archive_path, const fs::path& data_path,
             const std::string& task, const fs::path& baseline_path,
             const fs::path& out_dir, int sample_stride) {
  if (task != "recovery" && task != "loco" && task != "compare")
    throw config_error("task must be one of recovery, loco, compare");
  if (sample_stride < 1) throw config_error("sample stride must be >= 1");

  const PosteriorArchive archive = load_archive(archive_path);
  const std::vector<Dataset> trials = read_dataset_csv(data_path);
  check_archive_data(archive, trials);
  fs::create_directories(out_dir);
  const fs::path data_dir = data_path.parent_path();

  if (task == "recovery") return eval_recovery(archive, data_dir, trials, out_dir);
  if (task == "loco") return eval_loco(archive, trials, out_dir, sample_stride);
  return eval_compare(archive, data_dir, baseline_path, out_dir);
}

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const data_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const numerical_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace oslmm::cli
