#include "bnnrob/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <set>

namespace {

// Experiments each verb accepts; `train` accepts all of them.
const std::map<std::string, std::set<bnnrob::ExperimentKind>> kVerbs{
    {"attack", {bnnrob::ExperimentKind::AttackTable, bnnrob::ExperimentKind::RobustnessAccuracy}},
    {"report", {bnnrob::ExperimentKind::GradVanish, bnnrob::ExperimentKind::Multimodality}},
    {"sweep", {bnnrob::ExperimentKind::HalfMoonsSweep, bnnrob::ExperimentKind::RobustnessAccuracy}},
};

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string seed;
  std::string output_dir;
  std::string experiment;
  std::string model_dir;
  std::size_t workers = 0;
};

std::vector<std::pair<std::string, std::string>> overrides(const Options& o) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw bnnrob::ConfigError({"--set: expected key=value, got '" + s + "'"});
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (!o.experiment.empty()) out.emplace_back("experiment", o.experiment);
  if (!o.seed.empty()) out.emplace_back("seed", o.seed);
  if (!o.output_dir.empty()) out.emplace_back("output_dir", o.output_dir);
  if (!o.model_dir.empty()) out.emplace_back("model_dir", o.model_dir);
  if (o.workers > 0) out.emplace_back("workers", std::to_string(o.workers));
  return out;
}

int run_verb(const std::string& verb, const Options& o) {
  const bnnrob::ExperimentConfig cfg = bnnrob::load_config(o.config, overrides(o));
  if (verb == "train") {
    bnnrob::run_train(cfg);
  } else {
    const auto& allowed = kVerbs.at(verb);
    if (!allowed.count(cfg.experiment)) {
      std::string names;
      for (auto k : allowed) names += (names.empty() ? "" : ", ") + bnnrob::to_string(k);
      throw bnnrob::ConfigError(
          {"experiment: '" + verb + "' runs " + names + ", not " + bnnrob::to_string(cfg.experiment)});
    }
    bnnrob::run_experiment(cfg);
  }
  std::cout << "wrote " << cfg.output_dir << "/manifest.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian neural network robustness experiments"};
  app.require_subcommand(1);
  Options opts;
  for (const char* verb : {"train", "attack", "report", "sweep"}) {
    CLI::App* sub = app.add_subcommand(verb);
    sub->add_option("--config", opts.config, "key = value config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", opts.sets, "override a config key (key=value), repeatable");
    sub->add_option("--seed", opts.seed, "master seed");
    sub->add_option("--output-dir", opts.output_dir, "output directory");
    sub->add_option("--experiment", opts.experiment, "experiment name");
    sub->add_option("--model-dir", opts.model_dir, "load saved ensembles from this directory");
    sub->add_option("--workers", opts.workers, "worker threads for grid points");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    return run_verb(verb, opts);
  } catch (const bnnrob::ContractViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const bnnrob::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
