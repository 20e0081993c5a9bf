#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <unistd.h>
#include <sys/wait.h>
#include <fstream>

#include "oslmm/cli.hpp"
#include "oslmm/io.hpp"
#include "oslmm/samplers.hpp"
#include "oslmm/synthetic.hpp"

using namespace oslmm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("oslmm_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

std::vector<Dataset> tiny_trials(int n_trials, Eigen::Index p, Eigen::Index t,
                                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Dataset> trials;
  for (int i = 0; i < n_trials; ++i) {
    Dataset d;
    d.times = Vector::LinSpaced(t, 0.0, 3.0);
    d.observations = rng.normal_matrix(p, t);
    trials.push_back(std::move(d));
  }
  return trials;
}

}  // namespace

TEST_CASE("format_double round-trips doubles exactly") {
  Rng rng(301);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.normal() * std::pow(10.0, (i % 21) - 10);
    CHECK(std::strtod(format_double(x).c_str(), nullptr) == x);
  }
  CHECK(std::strtod(format_double(1.0 / 3.0).c_str(), nullptr) == 1.0 / 3.0);
}

TEST_CASE("dataset CSV round trip is exact") {
  TempDir tmp("csv");
  const auto trials = tiny_trials(3, 4, 7, 11);
  const fs::path path = tmp.path / "data.csv";
  write_dataset_csv(path, trials);
  const auto loaded = read_dataset_csv(path);
  REQUIRE(loaded.size() == trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    CHECK((loaded[i].times.array() == trials[i].times.array()).all());
    CHECK((loaded[i].observations.array() == trials[i].observations.array()).all());
  }
}

TEST_CASE("latent and basis CSV round trips") {
  TempDir tmp("latents");
  Rng rng(302);
  const Vector times = Vector::LinSpaced(5, 0.0, 2.0);
  const std::vector<Matrix> latents = {rng.normal_matrix(3, 5), rng.normal_matrix(3, 5)};
  write_latents_csv(tmp.path / "l.csv", times, latents, "latent");
  const auto loaded = read_latents_csv(tmp.path / "l.csv");
  REQUIRE(loaded.size() == 2);
  CHECK((loaded[0].array() == latents[0].array()).all());
  CHECK((loaded[1].array() == latents[1].array()).all());

  const std::vector<Matrix> bases = {random_semiorthogonal(6, 3, rng)};
  write_basis_csv(tmp.path / "b.csv", bases);
  const auto loaded_bases = read_basis_csv(tmp.path / "b.csv");
  REQUIRE(loaded_bases.size() == 1);
  CHECK((loaded_bases[0].array() == bases[0].array()).all());
}

TEST_CASE("malformed CSV errors name the position") {
  TempDir tmp("badcsv");
  const fs::path path = tmp.path / "bad.csv";
  atomic_write(path, "trial,time,channel_1\n0,0.0,1.0\n0,oops,2.0\n");
  try {
    read_dataset_csv(path);
    FAIL("expected a data_error");
  } catch (const data_error& e) {
    const std::string what = e.what();
    CHECK(what.find("row 3") != std::string::npos);
    CHECK(what.find("column 2") != std::string::npos);
  }
}

TEST_CASE("generate config parsing") {
  SUBCASE("unknown keys rejected") {
    const json j = {{"kind", "dgp"}, {"out_dir", "x"}, {"bogus", 1}};
    CHECK_THROWS_AS(parse_generate_config(j, std::nullopt), config_error);
  }
  SUBCASE("mdgp-only keys rejected for dgp") {
    const json j = {{"kind", "dgp"}, {"out_dir", "x"}, {"n_trials", 5}};
    CHECK_THROWS_AS(parse_generate_config(j, std::nullopt), config_error);
  }
  SUBCASE("environment seed fills a missing seed") {
    const json j = {{"kind", "dgp"}, {"out_dir", "x"}};
    CHECK(parse_generate_config(j, 77).dgp.seed == 77);
    CHECK(parse_generate_config(j, std::nullopt).dgp.seed == 0);
    const json with_seed = {{"kind", "dgp"}, {"out_dir", "x"}, {"seed", 5}};
    CHECK(parse_generate_config(with_seed, 77).dgp.seed == 5);
  }
  SUBCASE("validation failures surface as config errors") {
    const json j = {{"kind", "dgp"}, {"out_dir", "x"}, {"latent_dim", 4}};
    CHECK_THROWS_AS(parse_generate_config(j, std::nullopt), config_error);
  }
}

TEST_CASE("run config parsing") {
  SUBCASE("defaults") {
    const json j = {{"model", "oslmm"}, {"latent_dim", 3}};
    const RunConfig c = parse_run_config(j, std::nullopt);
    CHECK(c.chain.iterations == 500);
    CHECK(c.chain.burnin == 200);
    CHECK(c.priors.a == 0.01);
    CHECK(c.priors.b == 0.01);
  }
  SUBCASE("unknown keys rejected at every level") {
    CHECK_THROWS_AS(parse_run_config({{"modle", "oslmm"}}, std::nullopt), config_error);
    CHECK_THROWS_AS(parse_run_config({{"priors", {{"z", 1.0}}}}, std::nullopt),
                    config_error);
    CHECK_THROWS_AS(parse_run_config({{"updates", {{"bases", true}}}}, std::nullopt),
                    config_error);
  }
  SUBCASE("invalid chain shapes rejected") {
    const json j = {{"iterations", 10}, {"burnin", 10}};
    CHECK_THROWS_AS(parse_run_config(j, std::nullopt), config_error);
  }
}

TEST_CASE("posterior archive round trip, checksum and version guard") {
  TempDir tmp("archive");
  const auto trials = tiny_trials(2, 5, 9, 12);
  const GibbsState init = init_state(ModelKind::oslmm, trials, 2);
  ChainConfig cfg;
  cfg.iterations = 8;
  cfg.burnin = 3;
  cfg.seed = 9;
  HyperPriors priors;
  const PosteriorSamples post = run_chain(ModelKind::oslmm, trials, cfg, priors, init);

  PosteriorArchive archive;
  archive.model = ModelKind::oslmm;
  archive.seed = cfg.seed;
  archive.config = {{"model", "oslmm"}};
  archive.times = trials.front().times;
  archive.states = post.states;
  archive.log_density_trace = post.log_density_trace;

  const fs::path path = tmp.path / "posterior.bin";
  save_archive(path, archive);

  SUBCASE("round trip preserves every stored field bitwise") {
    const PosteriorArchive loaded = load_archive(path);
    CHECK(loaded.seed == archive.seed);
    CHECK(loaded.model == ModelKind::oslmm);
    REQUIRE(loaded.states.size() == archive.states.size());
    CHECK(loaded.log_density_trace == archive.log_density_trace);
    CHECK((loaded.times.array() == archive.times.array()).all());
    for (std::size_t s = 0; s < archive.states.size(); ++s) {
      const GibbsState& a = archive.states[s];
      const GibbsState& b = loaded.states[s];
      for (std::size_t i = 0; i < a.f.size(); ++i)
        CHECK((a.f[i].array() == b.f[i].array()).all());
      CHECK((a.h.array() == b.h.array()).all());
      CHECK((a.u.array() == b.u.array()).all());
      CHECK(a.noise.sigma_y2 == b.noise.sigma_y2);
      CHECK(a.kp_f.length_scale == b.kp_f.length_scale);
      CHECK(a.kp_h.variance == b.kp_h.variance);
      CHECK(a.kp_h.length_scale == b.kp_h.length_scale);
    }
  }

  SUBCASE("payload corruption is rejected") {
    std::string raw = slurp(path);
    raw[raw.size() - 5] ^= 0x40;
    atomic_write(path, raw);
    CHECK_THROWS_AS(load_archive(path), data_error);
  }

  SUBCASE("version mismatches are rejected, never migrated") {
    std::string raw = slurp(path);
    const auto pos = raw.find("\"version\":1");
    REQUIRE(pos != std::string::npos);
    raw.replace(pos, 11, "\"version\":2");
    atomic_write(path, raw);
    CHECK_THROWS_AS(load_archive(path), data_error);
  }

  SUBCASE("garbage files are rejected") {
    atomic_write(path, "not an archive at all");
    CHECK_THROWS_AS(load_archive(path), data_error);
  }
}

TEST_CASE("slmm archives round trip") {
  TempDir tmp("slmm_archive");
  const auto trials = tiny_trials(1, 4, 8, 13);
  const GibbsState init = init_state(ModelKind::slmm, trials, 2);
  ChainConfig cfg;
  cfg.iterations = 6;
  cfg.burnin = 2;
  HyperPriors priors;
  const PosteriorSamples post = run_chain(ModelKind::slmm, trials, cfg, priors, init);

  PosteriorArchive archive;
  archive.model = ModelKind::slmm;
  archive.seed = 0;
  archive.config = {{"model", "slmm"}};
  archive.times = trials.front().times;
  archive.states = post.states;
  archive.log_density_trace = post.log_density_trace;
  save_archive(tmp.path / "p.bin", archive);
  const PosteriorArchive loaded = load_archive(tmp.path / "p.bin");
  REQUIRE(loaded.states.size() == post.states.size());
  CHECK((loaded.states[0].w_series.array() == post.states[0].w_series.array()).all());
  REQUIRE(loaded.states[0].noise.per_channel.has_value());
  CHECK((*loaded.states[0].noise.per_channel - *post.states[0].noise.per_channel)
            .norm() == 0.0);
}

TEST_CASE("environment seed override") {
  ::setenv("OSLMM_SEED", "4242", 1);
  const auto seed = env_seed_override();
  REQUIRE(seed.has_value());
  CHECK(*seed == 4242);
  ::setenv("OSLMM_SEED", "not a number", 1);
  CHECK_THROWS_AS(env_seed_override(), config_error);
  ::unsetenv("OSLMM_SEED");
  CHECK_FALSE(env_seed_override().has_value());
}

TEST_CASE("generate with default settings writes 200 rows x 50 channels") {
  TempDir tmp("default_shape");
  const json gen = {{"kind", "dgp"}, {"seed", 3}, {"out_dir", (tmp.path / "d").string()}};
  atomic_write(tmp.path / "gen.json", gen.dump());
  REQUIRE(cli::cmd_generate(tmp.path / "gen.json") == 0);
  const auto trials = read_dataset_csv(tmp.path / "d" / "data.csv");
  REQUIRE(trials.size() == 1);
  CHECK(trials[0].samples() == 200);
  CHECK(trials[0].channels() == 50);
}

TEST_CASE("fit with default chain settings stores 300 samples" *
          doctest::timeout(300)) {
  TempDir tmp("default_fit");
  const json gen = {{"kind", "dgp"},    {"n_times", 24}, {"n_channels", 6},
                    {"latent_dim", 3},  {"seed", 8},     {"out_dir", (tmp.path / "d").string()}};
  atomic_write(tmp.path / "gen.json", gen.dump());
  REQUIRE(cli::cmd_generate(tmp.path / "gen.json") == 0);
  const fs::path archive = tmp.path / "p.bin";
  const json fit = {{"model", "oslmm"}, {"latent_dim", 3}, {"output", archive.string()}};
  atomic_write(tmp.path / "fit.json", fit.dump());
  REQUIRE(cli::cmd_fit(tmp.path / "fit.json", tmp.path / "d" / "data.csv") == 0);
  CHECK(load_archive(archive).states.size() == 300);
}

TEST_CASE("cli binary exit codes" * doctest::timeout(120)) {
  const fs::path cli_binary =
      fs::read_symlink("/proc/self/exe").parent_path() / "oslmm";
  REQUIRE(fs::exists(cli_binary));
  TempDir tmp("exit_codes");
  auto run = [&](const std::string& args) {
    const std::string cmd =
        "'" + cli_binary.string() + "' " + args + " > /dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
  };
  CHECK(run("fit --config " + (tmp.path / "missing.json").string() + " --data x.csv") == 2);
  atomic_write(tmp.path / "bad.csv", "trial,time,channel_1\n0,0.0,oops\n");
  atomic_write(tmp.path / "cfg.json", json({{"model", "oslmm"}}).dump());
  CHECK(run("fit --config " + (tmp.path / "cfg.json").string() + " --data " +
            (tmp.path / "bad.csv").string()) == 3);
  CHECK(run("eval --archive missing.bin --data missing.csv --task bogus") == 2);
}

TEST_CASE("cli end-to-end on a small bundle" * doctest::timeout(300)) {
  TempDir tmp("cli");
  const fs::path gen_cfg = tmp.path / "gen.json";
  const fs::path fit_cfg = tmp.path / "fit.json";
  const fs::path out_a = tmp.path / "a";
  const fs::path out_b = tmp.path / "b";

  const json gen = {{"kind", "mdgp"},    {"n_times", 24},      {"n_channels", 6},
                    {"latent_dim", 3},   {"scale_kernel", "median"},
                    {"seed", 17},        {"n_trials", 4},      {"perturb_sigma", 0.02},
                    {"out_dir", out_a.string()}};
  atomic_write(gen_cfg, gen.dump());
  REQUIRE(cli::cmd_generate(gen_cfg) == 0);

  SUBCASE("regeneration with the same seed is byte-identical") {
    json gen_b = gen;
    gen_b["out_dir"] = out_b.string();
    atomic_write(gen_cfg, gen_b.dump());
    REQUIRE(cli::cmd_generate(gen_cfg) == 0);
    CHECK(slurp(out_a / "data.csv") == slurp(out_b / "data.csv"));
    CHECK(slurp(out_a / "truth_latents.csv") == slurp(out_b / "truth_latents.csv"));
    CHECK(slurp(out_a / "truth_basis.csv") == slurp(out_b / "truth_basis.csv"));
  }

  SUBCASE("mdgp with sigma 0 records identical basis checksums") {
    json gen_zero = gen;
    gen_zero["perturb_sigma"] = 0.0;
    gen_zero["out_dir"] = out_b.string();
    atomic_write(gen_cfg, gen_zero.dump());
    REQUIRE(cli::cmd_generate(gen_cfg) == 0);
    const json manifest = json::parse(slurp(out_b / "manifest.json"));
    const auto checksums = manifest["basis_checksums"];
    REQUIRE(checksums.size() == 4);
    for (const auto& c : checksums) CHECK(c == checksums[0]);
  }

  SUBCASE("fit and the three eval tasks") {
    const fs::path archive = tmp.path / "posterior.bin";
    const json fit = {{"model", "oslmm"}, {"latent_dim", 3}, {"iterations", 16},
                      {"burnin", 6},      {"seed", 3},       {"output", archive.string()}};
    atomic_write(fit_cfg, fit.dump());
    REQUIRE(cli::cmd_fit(fit_cfg, out_a / "data.csv") == 0);
    REQUIRE(fs::exists(archive));
    const PosteriorArchive loaded = load_archive(archive);
    CHECK(loaded.states.size() == 10);

    const fs::path eval_dir = tmp.path / "eval";
    REQUIRE(cli::cmd_eval(archive, out_a / "data.csv", "recovery", "", eval_dir, 1) == 0);
    CHECK(fs::exists(eval_dir / "recovery.json"));
    CHECK(fs::exists(eval_dir / "latents_mean.csv"));

    REQUIRE(cli::cmd_eval(archive, out_a / "data.csv", "loco", "", eval_dir, 4) == 0);
    const std::string loco = slurp(eval_dir / "loco.csv");
    // header plus P rows per trial
    CHECK(std::count(loco.begin(), loco.end(), '\n') == 1 + 4 * 6);

    REQUIRE(cli::cmd_eval(archive, out_a / "data.csv", "compare",
                          eval_dir / "latents_mean.csv", eval_dir, 1) == 0);
    const json compare = json::parse(slurp(eval_dir / "compare.json"));
    CHECK(compare["delta_rmse"].get<double>() == 0.0);
    CHECK(compare["spearman_rho"].get<double>() == doctest::Approx(1.0));

    CHECK_THROWS_AS(
        cli::cmd_eval(archive, out_a / "data.csv", "bogus", "", eval_dir, 1),
        config_error);
  }
}
