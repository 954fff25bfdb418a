#include "doctest.h"

#include "bnnrob/experiment.hpp"

#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

using namespace bnnrob;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  static const std::string tag = std::to_string(std::random_device{}());
  fs::path p = fs::temp_directory_path() / ("bnnrob-cli-" + tag) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kTinyHmc =
    "seed = 7\n"
    "widths = 4\n"
    "depth = 1\n"
    "test_n = 12\n"
    "hmc_step_size = 0.01\n"
    "hmc_leapfrog_steps = 3\n"
    "hmc_warmup = 4\n"
    "hmc_samples = 6\n"
    "vi_epochs = 5\n"
    "vi_samples = 6\n"
    "sgd_epochs = 2\n"
    "ensemble_members = 2\n"
    "pgd_iterations = 3\n"
    "zoo_iterations = 2\n"
    "sample_counts = 1, 6\n";

// The tiny base config with any key in `extra` replaced.
std::string tiny(const std::string& experiment, const std::string& extra) {
  std::string out = "experiment = " + experiment + "\n";
  std::istringstream base(kTinyHmc);
  for (std::string line; std::getline(base, line);) {
    const std::string key = line.substr(0, line.find(' '));
    if (("\n" + extra).find("\n" + key + " ") == std::string::npos) out += line + "\n";
  }
  return out + extra;
}

ExperimentConfig tiny_config(const std::string& experiment, const std::string& extra, const fs::path& out) {
  return parse_config(tiny(experiment, extra), {{"output_dir", out.string()}});
}

// Artifact hashes in a run, keyed by relative path.
std::map<std::string, std::string> artifact_hashes(const RunResult& r) {
  std::map<std::string, std::string> out;
  for (const fs::path& a : r.artifacts) out[a.generic_string()] = file_hash(r.output_dir / a);
  return out;
}

void check_rerun_identical(const std::string& experiment, const std::string& extra) {
  CAPTURE(experiment);
  const RunResult a = run_experiment(tiny_config(experiment, extra, scratch_dir(experiment + "-a")));
  const RunResult b = run_experiment(tiny_config(experiment, extra, scratch_dir(experiment + "-b")));
  const auto ha = artifact_hashes(a), hb = artifact_hashes(b);
  CHECK(!ha.empty());
  CHECK(ha == hb);
  for (const auto& [path, hash] : ha) CHECK(read_file(a.output_dir / path) == read_file(b.output_dir / path));
  CHECK(fs::exists(a.output_dir / "manifest.json"));
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BNNROB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> problems_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& problems, const std::string& what) {
  for (const std::string& p : problems) {
    if (p.find(what) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("experiment names round-trip") {
  for (ExperimentKind k : {ExperimentKind::GradVanish, ExperimentKind::HalfMoonsSweep, ExperimentKind::AttackTable,
                           ExperimentKind::RobustnessAccuracy, ExperimentKind::Multimodality}) {
    CHECK(parse_experiment_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_experiment_kind("nope"), ContractViolation);
}

TEST_CASE("config text round-trips") {
  const ExperimentConfig c =
      parse_config(tiny("attack-table", "attacks = fgsm, zoo\npgd_step = 0.02\nclip_domain = none\n"),
                   {{"output_dir", "/tmp/x"}});
  const std::string text = config_text(c);
  const ExperimentConfig back = parse_config(text);
  CHECK(config_text(back) == text);
  CHECK(back.attacks.size() == 2);
  CHECK(back.attack.pgd_step.value() == 0.02);
  CHECK(!back.attack.clip_domain.has_value());
  CHECK(!back.clip_auto);
}

TEST_CASE("overrides apply after the file") {
  const ExperimentConfig c = parse_config(tiny("grad-vanish", "output_dir = a\n"), {{"seed", "11"}, {"output_dir", "b"}});
  CHECK(c.seed == 11);
  CHECK(c.output_dir == "b");
  const ExperimentConfig s = parse_config("seed = 1\noutput_dir = o\n", {{"experiment", "half-moons-sweep"}});
  CHECK(s.widths == default_config(ExperimentKind::HalfMoonsSweep).widths);
}

TEST_CASE("every bad line is reported") {
  const auto p = problems_of(tiny("grad-vanish", "output_dir = o\nbogus = 1\nnoise = 0.1\nnoise = 0.2\nnot a pair\nhmc_samples = x\n"));
  CHECK(mentions(p, "unknown key 'bogus'"));
  CHECK(mentions(p, "duplicate key 'noise'"));
  CHECK(mentions(p, "expected 'key = value'"));
  CHECK(mentions(p, "hmc_samples"));
  CHECK(p.size() >= 4);
}

TEST_CASE("semantic validation problems") {
  CHECK(mentions(problems_of("experiment = grad-vanish\noutput_dir = o\n"), "seed: not set"));
  CHECK(mentions(problems_of("seed = 1\n"), "output_dir: not set"));
  const std::string base = "seed = 1\noutput_dir = o\n";
  CHECK(mentions(problems_of(base + "experiment = half-moons-sweep\nwidths =\n"), "arch grid"));
  CHECK(mentions(problems_of(base + "experiment = attack-table\nattacks =\n"), "attacks: empty"));
  CHECK(mentions(problems_of(base + "experiment = grad-vanish\ntrainers = sgd\n"), "supports hmc and vi"));
  CHECK(mentions(problems_of(base + "experiment = grad-vanish\nsample_counts = 1, 300\n"), "exceeds"));
  CHECK(mentions(problems_of(base + "experiment = grad-vanish\nsample_counts = 5, 2\n"), "ascending"));
  CHECK(mentions(problems_of(base + "dataset = mnist\n"), "mnist_dir"));
  CHECK(mentions(problems_of(base + "experiment = attack-table\neps = -1\n"), "attack"));
  CHECK(problems_of(base).empty());
}

TEST_CASE("defaults per experiment") {
  const ExperimentConfig g = default_config(ExperimentKind::GradVanish);
  CHECK(g.sample_counts == std::vector<std::size_t>{1, 10, 50, 100, 250});
  CHECK(g.widths == std::vector<std::size_t>{128});
  CHECK(g.depth == 2);
  CHECK(g.prior.std == 10.0);
  const ExperimentConfig s = default_config(ExperimentKind::HalfMoonsSweep);
  CHECK(s.widths == std::vector<std::size_t>{32, 128, 256, 512});
  CHECK(s.train_sizes == std::vector<std::size_t>{5000, 10000, 15000});
  CHECK(default_config(ExperimentKind::AttackTable).trainers.size() == 4);
  CHECK(g.accuracy_threshold == 0.80);
  CHECK(g.epsilon_for("hmc") == 0.3);
  CHECK(g.epsilon_for("vi") == 0.2);
  CHECK(g.epsilon_for("sgd") == 0.1);
}

TEST_CASE("sub-seeds and data seeds") {
  ExperimentConfig c = tiny_config("grad-vanish", "", "o");
  const std::uint64_t s = sub_seed(c, "p", "hmc");
  CHECK(sub_seed(c, "p", "hmc") == s);
  CHECK(sub_seed(c, "q", "hmc") != s);
  CHECK(sub_seed(c, "p", "vi") != s);
  ExperimentConfig other = c;
  other.experiment = ExperimentKind::Multimodality;
  CHECK(sub_seed(other, "p", "hmc") != s);
  other.seed = 8;
  CHECK(load_data(other, 30).train.inputs != load_data(c, 30).train.inputs);
  other.seed = c.seed;
  const DataSplit a = load_data(c, 30), b = load_data(other, 30);
  CHECK(a.train.inputs == b.train.inputs);
  CHECK(a.test.labels == b.test.labels);
  CHECK(a.train.size() == 30);
  CHECK(a.test.size() == 12);
}

TEST_CASE("parallel_for places results and rethrows the first failure") {
  for (std::size_t workers : {1, 3, 8}) {
    std::vector<int> out(20, -1);
    parallel_for(20, workers, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
    for (std::size_t i = 0; i < 20; ++i) CHECK(out[i] == static_cast<int>(i * i));
    std::atomic<int> ran{0};
    try {
      parallel_for(10, workers, [&](std::size_t i) {
        ++ran;
        if (i == 3 || i == 7) throw std::runtime_error("fail " + std::to_string(i));
      });
      FAIL("expected a throw");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "fail 3");
    }
  }
}

TEST_CASE("file hash is FNV-1a") {
  const fs::path dir = scratch_dir("hash");
  std::ofstream(dir / "empty").close();
  CHECK(file_hash(dir / "empty") == "cbf29ce484222325");
  std::ofstream(dir / "a") << "a";
  CHECK(file_hash(dir / "a") == "af63dc4c8601ec8c");
}

TEST_CASE("reruns are byte-identical") {
  check_rerun_identical("grad-vanish", "trainers = hmc, vi\ntrain_n = 60\n");
  check_rerun_identical("half-moons-sweep", "widths = 4, 6\ntrain_sizes = 40, 60\n");
  check_rerun_identical("attack-table",
                        "train_n = 60\ntrainers = hmc, vi, sgd, deep-ensemble\nattacks = random, fgsm, pgd, zoo\n"
                        "attack_points = 5\n");
  check_rerun_identical("robustness-accuracy", "train_sizes = 40\ntrainers = hmc, vi, sgd\n");
  check_rerun_identical("multimodality", "train_sizes = 40, 60\n");
}

TEST_CASE("worker count does not change artifacts") {
  const std::string extra = "widths = 4, 6\ntrain_sizes = 40\n";
  ExperimentConfig one = tiny_config("half-moons-sweep", extra, scratch_dir("workers-1"));
  ExperimentConfig many = tiny_config("half-moons-sweep", extra, scratch_dir("workers-3"));
  many.workers = 3;
  CHECK(artifact_hashes(run_experiment(one)) == artifact_hashes(run_experiment(many)));
}

TEST_CASE("sweep marks runs below the accuracy threshold") {
  ExperimentConfig c = tiny_config("half-moons-sweep", "widths = 4, 6\ntrain_sizes = 40, 60\n", scratch_dir("excl"));
  c.accuracy_threshold = 0.8;
  const RunResult r = run_experiment(c);
  std::istringstream in(read_file(r.output_dir / "sweep_summary.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("trainer,arch,width,train_n,test_acc,excluded,", 0) == 0);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    REQUIRE(f.size() >= 6);
    CHECK((f[5] == "1") == (std::stod(f[4]) < 0.8));
    ++rows;
  }
  CHECK(rows == 4);
}

TEST_CASE("trained models are reused from model_dir") {
  const fs::path out = scratch_dir("train");
  ExperimentConfig c = tiny_config("grad-vanish", "trainers = hmc\ntrain_n = 60\n", out);
  const RunResult trained = run_train(c);
  CHECK(fs::exists(out / "models"));
  c.output_dir = scratch_dir("from-models").string();
  c.model_dir = (out / "models").string();
  const RunResult loaded = run_experiment(c);
  c.output_dir = scratch_dir("fresh").string();
  c.model_dir.clear();
  const RunResult fresh = run_experiment(c);
  auto strip_models = [](std::map<std::string, std::string> m) {
    std::erase_if(m, [](const auto& kv) { return kv.first.rfind("models/", 0) == 0; });
    return m;
  };
  CHECK(strip_models(artifact_hashes(loaded)) == strip_models(artifact_hashes(fresh)));
  (void)trained;
}

TEST_CASE("command-line exit codes") {
  const fs::path dir = scratch_dir("exit");
  const fs::path good = dir / "good.cfg";
  std::ofstream(good) << tiny("grad-vanish", "trainers = hmc\ntrain_n = 40\n");
  const std::string out = " --output-dir " + (dir / "out").string();
  CHECK(run_cli("report --config " + good.string() + out) == 0);
  CHECK(fs::exists(dir / "out" / "manifest.json"));

  const fs::path bad = dir / "bad.cfg";
  std::ofstream(bad) << tiny("grad-vanish", "bogus = 3\n");
  CHECK(run_cli("report --config " + bad.string() + out) == 2);
  CHECK(run_cli("report --config " + (dir / "missing.cfg").string() + out) == 2);
  CHECK(run_cli("report" + out) == 2);
  CHECK(run_cli("attack --config " + good.string() + out) == 2);
  CHECK(run_cli("report --config " + good.string() + out + " --set widths") == 2);

  // A step this large rejects every warmup proposal.
  CHECK(run_cli("report --config " + good.string() + out + " --set hmc_step_size=50") == 3);
}

}  // TEST_SUITE
