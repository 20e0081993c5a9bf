#ifndef OSLMM_CLI_HPP
#define OSLMM_CLI_HPP

#include <filesystem>
#include <string>

namespace oslmm::cli {

/// Writes the dataset CSV, the ground-truth files and a manifest JSON into
/// the config's out_dir.
int cmd_generate(const std::filesystem::path& config_path);

/// Fits the configured model to the dataset, writes the posterior archive
/// and prints a per-iteration timing summary.
int cmd_fit(const std::filesystem::path& config_path,
            const std::filesystem::path& data_path);

/// Evaluates a fitted archive against a dataset. Tasks: "recovery"
/// (Procrustes-aligned latent recovery against the bundled ground truth),
/// "loco" (per-channel leave-one-channel-out SSE / R^2), "compare"
/// (delta RMSE and paired statistics against an external latent file).
int cmd_eval(const std::filesystem::path& archive_path,
             const std::filesystem::path& data_path, const std::string& task,
             const std::filesystem::path& baseline_path,
             const std::filesystem::path& out_dir, int sample_stride);

/// Maps an exception in flight to the documented exit codes:
/// 2 config error, 3 data error, 4 numerical failure.
int exit_code_for_current_exception();

}  // namespace oslmm::cli

#endif
