#pragma once

#include "bnnrob/analysis.hpp"
#include "bnnrob/attacks.hpp"
#include "bnnrob/data.hpp"
#include "bnnrob/errors.hpp"
#include "bnnrob/inference.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace bnnrob {

enum class ExperimentKind { GradVanish, HalfMoonsSweep, AttackTable, RobustnessAccuracy, Multimodality };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);

// Every problem found while reading or validating a config, one per line.
class ConfigError : public ContractViolation {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::GradVanish;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string output_dir;
  std::string model_dir;  // optional: load ensembles from here instead of training
  std::size_t workers = 1;

  // Data.
  std::string dataset = "half-moons";  // half-moons | mnist
  std::size_t train_n = 5000;
  std::size_t test_n = 100;
  double noise = 0.1;
  std::string mnist_dir;
  std::size_t mnist_train_limit = 2000;
  std::size_t mnist_test_limit = 500;

  // Architecture grid: every width, `depth` hidden layers each.
  std::vector<std::size_t> widths{128};
  std::size_t depth = 2;
  Activation activation = Activation::Tanh;
  double leaky_slope = 0.01;
  std::vector<std::size_t> train_sizes{5000};

  // Trainers.
  std::vector<std::string> trainers{"hmc", "vi"};
  GaussianPrior prior;
  HmcConfig hmc;
  ViConfig vi;
  std::size_t vi_samples = 250;
  SgdConfig sgd;
  std::size_t ensemble_members = 5;

  // Attacks.
  std::vector<AttackKind> attacks{AttackKind::Random, AttackKind::Fgsm, AttackKind::Pgd};
  AttackSpec attack;  // template: epsilon, PGD and ZOO settings, clip domain
  bool clip_auto = true;  // [0, 1] box for images, none for half-moons
  double eps_hmc = 0.3;
  double eps_vi = 0.2;
  double eps_sgd = 0.1;
  std::size_t attack_points = 500;

  // Reports.
  std::vector<std::size_t> sample_counts{1, 10, 50, 100, 250};
  double accuracy_threshold = 0.80;
  std::size_t pca_components = 2;

  std::vector<MlpArchitecture> arch_grid(std::size_t input_dim, std::size_t classes) const;
  double epsilon_for(const std::string& trainer) const;
};

// Defaults for an experiment before any key is applied.
ExperimentConfig default_config(ExperimentKind kind);

// Flat `key = value` lines with `#` comments. Overrides are applied after the
// file, in order. Throws ConfigError listing every bad line and field.
ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides = {});

// All semantic problems; empty when the config is runnable.
std::vector<std::string> validation_problems(const ExperimentConfig& cfg);
void validate(const ExperimentConfig& cfg);

// Canonical text form; parse_config(config_text(c)) reproduces c.
std::string config_text(const ExperimentConfig& cfg);

// Stable sub-seed for (experiment, grid point, role).
std::uint64_t sub_seed(const ExperimentConfig& cfg, const std::string& grid_point, const std::string& role);

struct DataSplit {
  LabeledDataset train;
  LabeledDataset test;
};
// Data seeds depend only on the master seed and the sizes, so every experiment
// sharing a seed sees the same points.
DataSplit load_data(const ExperimentConfig& cfg, std::size_t train_n);

struct TrainedModel {
  std::string trainer;
  PosteriorEnsemble ensemble;
  HmcDiagnostics hmc;  // filled for HMC
};

// Loads <model_dir>/<model_filename> when model_dir is set and the file exists.
TrainedModel train_model(const ExperimentConfig& cfg, const std::string& trainer, const MlpArchitecture& arch,
                         const LabeledDataset& train);
std::string model_filename(const std::string& trainer, const MlpArchitecture& arch, std::size_t train_n);

// Runs fn(0..count-1) on up to `workers` threads; results are placed by index,
// and the first failure (lowest index) is rethrown.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct RunResult {
  std::filesystem::path output_dir;
  std::vector<std::filesystem::path> artifacts;  // relative to output_dir
};

RunResult run_grad_vanish(const ExperimentConfig& cfg);
RunResult run_half_moons_sweep(const ExperimentConfig& cfg);
RunResult run_attack_table(const ExperimentConfig& cfg);
RunResult run_robustness_accuracy(const ExperimentConfig& cfg);
RunResult run_multimodality(const ExperimentConfig& cfg);
RunResult run_experiment(const ExperimentConfig& cfg);

// Trains every configured trainer on every arch and saves the ensembles.
RunResult run_train(const ExperimentConfig& cfg);

// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace bnnrob
