#ifndef OSLMM_IO_HPP
#define OSLMM_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "oslmm/evaluation.hpp"
#include "oslmm/samplers.hpp"
#include "oslmm/synthetic.hpp"
#include "oslmm/types.hpp"

namespace oslmm {

using json = nlohmann::json;

/// EvalReport as JSON; missing statistics become null, per-channel vectors
/// are emitted only when populated.
json eval_report_to_json(const EvalReport& report);

/// Shortest exact decimal form of a double (17 significant digits), so CSV
/// fields round-trip bit-for-bit.
std::string format_double(double value);

/// FNV-1a 64-bit checksum, reported as 16 hex digits.
std::string fnv1a_hex(const void* data, std::size_t size);
std::string file_checksum(const std::filesystem::path& path);

/// Writes content to `path + ".tmp"` and renames, so readers never observe
/// partial files.
void atomic_write(const std::filesystem::path& path, const std::string& content);

// ---- dataset CSV: header "trial,time,channel_1..channel_P" -----------------

void write_dataset_csv(const std::filesystem::path& path,
                       const std::vector<Dataset>& trials);
std::vector<Dataset> read_dataset_csv(const std::filesystem::path& path);

// ---- per-trial latent-style CSV: "trial,time,<prefix>_1..<prefix>_Q" -------

void write_latents_csv(const std::filesystem::path& path, const Vector& times,
                       const std::vector<Matrix>& per_trial, const std::string& prefix);
std::vector<Matrix> read_latents_csv(const std::filesystem::path& path);

// ---- per-trial basis CSV: "trial,channel,basis_1..basis_Q" ------------------

void write_basis_csv(const std::filesystem::path& path,
                     const std::vector<Matrix>& per_trial);
std::vector<Matrix> read_basis_csv(const std::filesystem::path& path);

// ---- configs ----------------------------------------------------------------

struct GenerateConfig {
  bool mdgp = false;
  DgpConfig dgp;
  int n_trials = 20;          // mdgp only
  double perturb_sigma = 0.01;  // mdgp only
  std::filesystem::path out_dir;
};

/// Parses and validates; unknown keys are rejected. `env_seed`, when set,
/// replaces a missing "seed" entry.
GenerateConfig parse_generate_config(const json& j,
                                     std::optional<std::uint64_t> env_seed);

struct RunConfig {
  ModelKind model = ModelKind::oslmm;
  Eigen::Index latent_dim = 3;
  ChainConfig chain;
  HyperPriors priors;
  std::optional<double> init_lengthscale_f;
  std::optional<double> init_lengthscale_scales;  // h family
  std::optional<double> init_lengthscale_mixing;  // w family
  std::optional<double> init_noise_variance;
  std::filesystem::path output = "posterior.bin";
  json raw;  // the config as given, embedded in the archive
};

RunConfig parse_run_config(const json& j, std::optional<std::uint64_t> env_seed);

/// Default-seed override from the environment (OSLMM_SEED), if set.
std::optional<std::uint64_t> env_seed_override();

// ---- posterior archive -------------------------------------------------------

/// Versioned single-file container: a magic line, a JSON index header and an
/// uncompressed little-endian double payload guarded by a checksum.
struct PosteriorArchive {
  int version = 1;
  ModelKind model = ModelKind::oslmm;
  std::uint64_t seed = 0;
  json config;
  Vector times;
  std::vector<GibbsState> states;
  std::vector<double> log_density_trace;
};

void save_archive(const std::filesystem::path& path, const PosteriorArchive& archive);

/// Verifies the magic, the version and the payload checksum; any mismatch is
/// rejected rather than migrated.
PosteriorArchive load_archive(const std::filesystem::path& path);

}  // namespace oslmm

#endif
