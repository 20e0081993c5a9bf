#include "oslmm/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace oslmm {

namespace fs = std::filesystem;

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::string fnv1a_hex(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016" PRIx64, hash);
  return buffer;
}

std::string file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open file for checksum: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();
  return fnv1a_hex(content.data(), content.size());
}

void atomic_write(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot write file: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw data_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

json eval_report_to_json(const EvalReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["rmse"] = opt(report.rmse);
  j["delta_rmse"] = opt(report.delta_rmse);
  j["spearman_rho"] = opt(report.spearman_rho);
  j["t_p_value"] = opt(report.t_p_value);
  j["wilcoxon_p_value"] = opt(report.wilcoxon_p_value);
  if (!report.per_channel_sse.empty()) j["per_channel_sse"] = report.per_channel_sse;
  if (!report.per_channel_r2.empty()) {
    json r2 = json::array();
    for (const auto& v : report.per_channel_r2) r2.push_back(opt(v));
    j["per_channel_r2"] = r2;
  }
  return j;
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open CSV: " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty CSV: " + path.string());
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) table.header.push_back(field);
  }
  std::size_t row_index = 1;
  while (std::getline(in, line)) {
    ++row_index;
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(table.header.size());
    std::size_t start = 0, column = 0;
    while (start <= line.size()) {
      const std::size_t end = line.find(',', start);
      const std::string field =
          line.substr(start, end == std::string::npos ? std::string::npos : end - start);
      ++column;
      char* parse_end = nullptr;
      const double value = std::strtod(field.c_str(), &parse_end);
      if (parse_end == field.c_str() || *parse_end != '\0')
        throw data_error(path.string() + ": cannot parse number at row " +
                         std::to_string(row_index) + ", column " + std::to_string(column));
      row.push_back(value);
      if (end == std::string::npos) break;
      start = end + 1;
    }
    if (row.size() != table.header.size())
      throw data_error(path.string() + ": row " + std::to_string(row_index) + " has " +
                       std::to_string(row.size()) + " fields, expected " +
                       std::to_string(table.header.size()));
    table.rows.push_back(std::move(row));
  }
  return table;
}

/// Shared reader for trial-major tables with (trial, key, values...) rows.
std::vector<Matrix> read_trial_table(const CsvTable& table, const fs::path& path,
                                     std::size_t value_offset, bool values_as_columns) {
  std::vector<Matrix> out;
  std::size_t i = 0;
  const std::size_t n_values = table.header.size() - value_offset;
  while (i < table.rows.size()) {
    const double trial = table.rows[i][0];
    if (trial != static_cast<double>(out.size()))
      throw data_error(path.string() + ": trials must be contiguous starting at 0");
    std::size_t j = i;
    while (j < table.rows.size() && table.rows[j][0] == trial) ++j;
    const auto count = static_cast<Eigen::Index>(j - i);
    Matrix m(static_cast<Eigen::Index>(n_values), count);
    for (std::size_t r = i; r < j; ++r)
      for (std::size_t v = 0; v < n_values; ++v)
        m(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(r - i)) =
            table.rows[r][value_offset + v];
    if (!values_as_columns) m.transposeInPlace();
    out.push_back(std::move(m));
    i = j;
  }
  if (out.empty()) throw data_error(path.string() + ": no data rows");
  return out;
}

}  // namespace

void write_dataset_csv(const fs::path& path, const std::vector<Dataset>& trials) {
  if (trials.empty()) throw config_error("write_dataset_csv needs at least one trial");
  std::string out = "trial,time";
  for (Eigen::Index p = 0; p < trials.front().channels(); ++p)
    out += ",channel_" + std::to_string(p + 1);
  out += "\n";
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const Dataset& d = trials[i];
    for (Eigen::Index t = 0; t < d.samples(); ++t) {
      out += std::to_string(i);
      out += ',';
      out += format_double(d.times[t]);
      for (Eigen::Index p = 0; p < d.channels(); ++p) {
        out += ',';
        out += format_double(d.observations(p, t));
      }
      out += '\n';
    }
  }
  atomic_write(path, out);
}

std::vector<Dataset> read_dataset_csv(const fs::path& path) {
  const CsvTable table = read_csv(path);
  if (table.header.size() < 3 || table.header[0] != "trial" || table.header[1] != "time")
    throw data_error(path.string() + ": expected header trial,time,channel_1,...");

  std::vector<Dataset> trials;
  std::size_t i = 0;
  while (i < table.rows.size()) {
    const double trial = table.rows[i][0];
    if (trial != static_cast<double>(trials.size()))
      throw data_error(path.string() + ": trials must be contiguous starting at 0");
    std::size_t j = i;
    while (j < table.rows.size() && table.rows[j][0] == trial) ++j;
    Dataset d;
    const auto t_count = static_cast<Eigen::Index>(j - i);
    const auto p_count = static_cast<Eigen::Index>(table.header.size() - 2);
    d.times.resize(t_count);
    d.observations.resize(p_count, t_count);
    for (std::size_t r = i; r < j; ++r) {
      const auto t = static_cast<Eigen::Index>(r - i);
      d.times[t] = table.rows[r][1];
      for (Eigen::Index p = 0; p < p_count; ++p)
        d.observations(p, t) = table.rows[r][2 + static_cast<std::size_t>(p)];
    }
    d.validate();
    trials.push_back(std::move(d));
    i = j;
  }
  if (trials.empty()) throw data_error(path.string() + ": no data rows");
  return trials;
}

void write_latents_csv(const fs::path& path, const Vector& times,
                       const std::vector<Matrix>& per_trial, const std::string& prefix) {
  if (per_trial.empty()) throw config_error("write_latents_csv needs at least one trial");
  std::string out = "trial,time";
  for (Eigen::Index q = 0; q < per_trial.front().rows(); ++q)
    out += "," + prefix + "_" + std::to_string(q + 1);
  out += "\n";
  for (std::size_t i = 0; i < per_trial.size(); ++i) {
    const Matrix& m = per_trial[i];
    if (m.cols() != times.size())
      throw config_error("write_latents_csv time grid mismatch");
    for (Eigen::Index t = 0; t < m.cols(); ++t) {
      out += std::to_string(i);
      out += ',';
      out += format_double(times[t]);
      for (Eigen::Index q = 0; q < m.rows(); ++q) {
        out += ',';
        out += format_double(m(q, t));
      }
      out += '\n';
    }
  }
  atomic_write(path, out);
}

std::vector<Matrix> read_latents_csv(const fs::path& path) {
  const CsvTable table = read_csv(path);
  if (table.header.size() < 3 || table.header[0] != "trial" || table.header[1] != "time")
    throw data_error(path.string() + ": expected header trial,time,...");
  return read_trial_table(table, path, 2, true);
}

void write_basis_csv(const fs::path& path, const std::vector<Matrix>& per_trial) {
  if (per_trial.empty()) throw config_error("write_basis_csv needs at least one trial");
  std::string out = "trial,channel";
  for (Eigen::Index q = 0; q < per_trial.front().cols(); ++q)
    out += ",basis_" + std::to_string(q + 1);
  out += "\n";
  for (std::size_t i = 0; i < per_trial.size(); ++i) {
    const Matrix& u = per_trial[i];
    for (Eigen::Index p = 0; p < u.rows(); ++p) {
      out += std::to_string(i);
      out += ',';
      out += std::to_string(p);
      for (Eigen::Index q = 0; q < u.cols(); ++q) {
        out += ',';
        out += format_double(u(p, q));
      }
      out += '\n';
    }
  }
  atomic_write(path, out);
}

std::vector<Matrix> read_basis_csv(const fs::path& path) {
  const CsvTable table = read_csv(path);
  if (table.header.size() < 3 || table.header[0] != "trial" ||
      table.header[1] != "channel")
    throw data_error(path.string() + ": expected header trial,channel,...");
  return read_trial_table(table, path, 2, false);
}

namespace {

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const auto& key : allowed)
      if (item.key() == key) {
        known = true;
        break;
      }
    if (!known) throw config_error("unknown key \"" + item.key() + "\" in " + where);
  }
}

}  // namespace

std::optional<std::uint64_t> env_seed_override() {
  const char* value = std::getenv("OSLMM_SEED");
  if (value == nullptr) return std::nullopt;
  char* end = nullptr;
  const unsigned long long parsed = std::strtoull(value, &end, 10);
  if (end == value || *end != '\0')
    throw config_error("OSLMM_SEED must be an unsigned integer");
  return static_cast<std::uint64_t>(parsed);
}

GenerateConfig parse_generate_config(const json& j,
                                     std::optional<std::uint64_t> env_seed) {
  reject_unknown_keys(j,
                      {"kind", "n_times", "n_channels", "latent_dim", "scale_kernel",
                       "noise_std", "time_span", "lorenz_horizon", "seed", "n_trials",
                       "perturb_sigma", "out_dir"},
                      "generate config");
  GenerateConfig config;
  const std::string kind = j.value("kind", "dgp");
  if (kind == "dgp")
    config.mdgp = false;
  else if (kind == "mdgp")
    config.mdgp = true;
  else
    throw config_error("generate kind must be \"dgp\" or \"mdgp\"");

  config.dgp.n_times = j.value("n_times", config.dgp.n_times);
  config.dgp.n_channels = j.value("n_channels", config.dgp.n_channels);
  config.dgp.latent_dim = j.value("latent_dim", config.dgp.latent_dim);
  config.dgp.noise_std = j.value("noise_std", config.dgp.noise_std);
  config.dgp.time_span = j.value("time_span", config.dgp.time_span);
  config.dgp.lorenz_horizon = j.value("lorenz_horizon", config.dgp.lorenz_horizon);
  if (j.contains("scale_kernel")) {
    const std::string name = j["scale_kernel"].get<std::string>();
    if (name == "short")
      config.dgp.scale_kernel = ScaleKernel::kShort;
    else if (name == "median")
      config.dgp.scale_kernel = ScaleKernel::kMedian;
    else if (name == "long")
      config.dgp.scale_kernel = ScaleKernel::kLong;
    else
      throw config_error("scale_kernel must be short, median or long");
  }
  if (j.contains("seed"))
    config.dgp.seed = j["seed"].get<std::uint64_t>();
  else if (env_seed)
    config.dgp.seed = *env_seed;

  if (!config.mdgp && (j.contains("n_trials") || j.contains("perturb_sigma")))
    throw config_error("n_trials and perturb_sigma are only valid for mdgp");
  config.n_trials = j.value("n_trials", config.n_trials);
  config.perturb_sigma = j.value("perturb_sigma", config.perturb_sigma);

  if (!j.contains("out_dir")) throw config_error("generate config requires out_dir");
  config.out_dir = j["out_dir"].get<std::string>();

  config.dgp.validate();
  if (config.mdgp) {
    MdgpConfig m{config.dgp, config.n_trials, config.perturb_sigma};
    m.validate();
  }
  return config;
}

RunConfig parse_run_config(const json& j, std::optional<std::uint64_t> env_seed) {
  reject_unknown_keys(j,
                      {"model", "latent_dim", "iterations", "burnin", "thinning", "seed",
                       "priors", "init", "updates", "output"},
                      "run config");
  RunConfig config;
  config.raw = j;
  const std::string model = j.value("model", "oslmm");
  if (model == "oslmm")
    config.model = ModelKind::oslmm;
  else if (model == "slmm")
    config.model = ModelKind::slmm;
  else
    throw config_error("model must be \"oslmm\" or \"slmm\"");

  config.latent_dim = j.value("latent_dim", 3);
  if (config.latent_dim < 1) throw config_error("latent_dim must be >= 1");
  config.chain.iterations = j.value("iterations", config.chain.iterations);
  config.chain.burnin = j.value("burnin", config.chain.burnin);
  config.chain.thinning = j.value("thinning", config.chain.thinning);
  if (j.contains("seed"))
    config.chain.seed = j["seed"].get<std::uint64_t>();
  else if (env_seed)
    config.chain.seed = *env_seed;

  if (j.contains("priors")) {
    const json& p = j["priors"];
    reject_unknown_keys(p, {"a", "b", "c", "d"}, "priors");
    config.priors.a = p.value("a", config.priors.a);
    config.priors.b = p.value("b", config.priors.b);
    config.priors.c = p.value("c", config.priors.c);
    config.priors.d = p.value("d", config.priors.d);
  }
  if (j.contains("init")) {
    const json& init = j["init"];
    reject_unknown_keys(init,
                        {"lengthscale_f", "lengthscale_scales", "lengthscale_mixing",
                         "noise_variance"},
                        "init");
    if (init.contains("lengthscale_f"))
      config.init_lengthscale_f = init["lengthscale_f"].get<double>();
    if (init.contains("lengthscale_scales"))
      config.init_lengthscale_scales = init["lengthscale_scales"].get<double>();
    if (init.contains("lengthscale_mixing"))
      config.init_lengthscale_mixing = init["lengthscale_mixing"].get<double>();
    if (init.contains("noise_variance"))
      config.init_noise_variance = init["noise_variance"].get<double>();
  }
  if (j.contains("updates")) {
    const json& u = j["updates"];
    reject_unknown_keys(u,
                        {"latents", "log_scales", "basis", "noise_variance",
                         "scale_variance", "length_scales"},
                        "updates");
    config.chain.updates.latents = u.value("latents", true);
    config.chain.updates.log_scales = u.value("log_scales", true);
    config.chain.updates.basis = u.value("basis", true);
    config.chain.updates.noise_variance = u.value("noise_variance", true);
    config.chain.updates.scale_variance = u.value("scale_variance", true);
    config.chain.updates.length_scales = u.value("length_scales", true);
  }
  if (j.contains("output")) config.output = j["output"].get<std::string>();

  config.chain.validate();
  config.priors.validate();
  return config;
}

namespace {

constexpr const char* kArchiveMagic = "OSLMMARCHIVE 1";

void append_doubles(std::string& out, const double* data, std::size_t count) {
  out.append(reinterpret_cast<const char*>(data), count * sizeof(double));
}

void append_matrix(std::string& out, const Matrix& m) {
  append_doubles(out, m.data(), static_cast<std::size_t>(m.size()));
}

const double* read_matrix(const double* cursor, Matrix& m, Eigen::Index rows,
                          Eigen::Index cols) {
  m = Eigen::Map<const Matrix>(cursor, rows, cols);
  return cursor + rows * cols;
}

}  // namespace

void save_archive(const fs::path& path, const PosteriorArchive& archive) {
  if (archive.states.empty()) throw config_error("archive requires at least one sample");
  const GibbsState& first = archive.states.front();
  const auto n_trials = static_cast<Eigen::Index>(first.f.size());
  const Eigen::Index q_dim = first.latent_dim();
  const Eigen::Index t_dim = archive.times.size();
  const bool oslmm = archive.model == ModelKind::oslmm;
  const Eigen::Index p_dim = oslmm ? first.u.rows() : first.w_series.rows() / q_dim;

  std::string payload;
  append_doubles(payload, archive.times.data(), static_cast<std::size_t>(t_dim));
  append_doubles(payload, archive.log_density_trace.data(),
                 archive.log_density_trace.size());
  for (const GibbsState& state : archive.states) {
    for (const Matrix& f : state.f) append_matrix(payload, f);
    if (oslmm) {
      append_matrix(payload, state.h);
      append_matrix(payload, state.u);
    } else {
      append_matrix(payload, state.w_series);
      append_doubles(payload, state.noise.per_channel->data(),
                     static_cast<std::size_t>(p_dim));
    }
    const double scalars[6] = {state.noise.sigma_y2,    state.kp_f.length_scale,
                               state.kp_h.variance,     state.kp_h.length_scale,
                               state.kp_w.variance,     state.kp_w.length_scale};
    append_doubles(payload, scalars, 6);
  }

  json header;
  header["version"] = archive.version;
  header["model"] = oslmm ? "oslmm" : "slmm";
  header["seed"] = archive.seed;
  header["config"] = archive.config;
  header["channels"] = p_dim;
  header["latent_dim"] = q_dim;
  header["samples"] = t_dim;
  header["n_trials"] = n_trials;
  header["n_samples"] = static_cast<Eigen::Index>(archive.states.size());
  header["trace_len"] = static_cast<Eigen::Index>(archive.log_density_trace.size());
  header["payload_bytes"] = payload.size();
  header["payload_fnv1a"] = fnv1a_hex(payload.data(), payload.size());
  header["sections"] =
      oslmm ? json::array({"times", "trace", "f", "h", "u", "scalars"})
            : json::array({"times", "trace", "f", "w", "noise", "scalars"});

  std::string out = kArchiveMagic;
  out += '\n';
  out += header.dump();
  out += '\n';
  out += payload;
  atomic_write(path, out);
}

PosteriorArchive load_archive(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open archive: " + path.string());
  std::string magic, header_line;
  if (!std::getline(in, magic) || magic != kArchiveMagic)
    throw data_error("not a posterior archive: " + path.string());
  if (!std::getline(in, header_line)) throw data_error("archive header missing");
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw data_error(std::string("archive header unparsable: ") + e.what());
  }
  if (header.value("version", -1) != 1)
    throw data_error("unsupported archive version; refusing to migrate");

  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  if (payload.size() != header["payload_bytes"].get<std::size_t>())
    throw data_error("archive payload truncated");
  if (fnv1a_hex(payload.data(), payload.size()) !=
      header["payload_fnv1a"].get<std::string>())
    throw data_error("archive checksum mismatch");

  PosteriorArchive archive;
  archive.version = 1;
  archive.model = header["model"].get<std::string>() == "oslmm" ? ModelKind::oslmm
                                                                : ModelKind::slmm;
  archive.seed = header["seed"].get<std::uint64_t>();
  archive.config = header["config"];
  const auto p_dim = header["channels"].get<Eigen::Index>();
  const auto q_dim = header["latent_dim"].get<Eigen::Index>();
  const auto t_dim = header["samples"].get<Eigen::Index>();
  const auto n_trials = header["n_trials"].get<Eigen::Index>();
  const auto n_samples = header["n_samples"].get<Eigen::Index>();
  const auto trace_len = header["trace_len"].get<Eigen::Index>();
  const bool oslmm = archive.model == ModelKind::oslmm;

  const auto* cursor = reinterpret_cast<const double*>(payload.data());
  archive.times = Eigen::Map<const Vector>(cursor, t_dim);
  cursor += t_dim;
  archive.log_density_trace.assign(cursor, cursor + trace_len);
  cursor += trace_len;

  archive.states.resize(static_cast<std::size_t>(n_samples));
  for (GibbsState& state : archive.states) {
    state.kind = archive.model;
    state.f.resize(static_cast<std::size_t>(n_trials));
    for (Matrix& f : state.f) cursor = read_matrix(cursor, f, q_dim, t_dim);
    if (oslmm) {
      cursor = read_matrix(cursor, state.h, q_dim, t_dim);
      cursor = read_matrix(cursor, state.u, p_dim, q_dim);
      state.v = state.u;
    } else {
      cursor = read_matrix(cursor, state.w_series, p_dim * q_dim, t_dim);
      Vector noise(p_dim);
      for (Eigen::Index p = 0; p < p_dim; ++p) noise[p] = cursor[p];
      cursor += p_dim;
      state.noise.per_channel = noise;
      state.h = Matrix::Zero(q_dim, t_dim);
    }
    state.noise.sigma_y2 = cursor[0];
    state.kp_f = {1.0, cursor[1]};
    state.kp_h = {cursor[2], cursor[3]};
    state.kp_w = {cursor[4], cursor[5]};
    cursor += 6;
  }
  return archive;
}

}  // namespace oslmm
