#pragma once

#include "bnnrob/attacks.hpp"
#include "bnnrob/data.hpp"
#include "bnnrob/inference.hpp"
#include "bnnrob/predictive.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace bnnrob {

// Fraction of points whose predictive argmax equals the label.
double accuracy(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, const LabeledDataset& ds);
double accuracy_from_predictive(const Matrix& predictive_columns, std::span<const int> labels);

// Mean over pairs of the L-infinity distance between predictive vectors.
double softmax_difference(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, const InputMatrix& clean,
                          const InputMatrix& adversarial);
double softmax_difference(const Matrix& clean_predictive, const Matrix& adversarial_predictive);

struct GradientEntry {
  std::size_t point_id = 0;
  std::size_t sample_count = 0;
  Vector gradient;
  double linf = 0.0;
  double mean_abs = 0.0;
};

struct GradientReport {
  std::vector<std::size_t> sample_counts;
  std::size_t n_points = 0;
  // Count-major: entries[c * n_points + p].
  std::vector<GradientEntry> entries;

  const GradientEntry& at(std::size_t count_index, std::size_t point) const;
  // Medians over points for one sample count.
  double median_linf(std::size_t count_index) const;
  double median_abs_component(std::size_t count_index) const;
};

// Expected gradients over prefixes of the stored member order.
GradientReport gradient_vanishing_report(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble,
                                         const InputMatrix& points, std::span<const int> labels,
                                         std::span<const std::size_t> sample_counts);

// Columns: point_id, sample_count, component_index, value.
void write_gradients_csv(std::ostream& out, const GradientReport& report);

struct NamedEnsemble {
  std::string trainer;
  const PosteriorEnsemble* ensemble = nullptr;
};

struct AttackTableRow {
  std::string trainer;
  AttackKind attack = AttackKind::Fgsm;
  double eps = 0.0;
  double robust_acc = 0.0;
  double clean_acc = 0.0;
  double softmax_diff = 0.0;
  std::size_t n_points = 0;
  std::size_t n_samples = 0;
};

// Row for one attack run; `clean_predictive` holds the model's predictive on ds.
AttackTableRow summarize_attack(const std::string& trainer, const PosteriorEnsemble& ensemble,
                                const LabeledDataset& ds, const Matrix& clean_predictive,
                                std::span<const AttackOutcome> outcomes);

// One row per (model, spec), in model-major order.
std::vector<AttackTableRow> attack_table(const std::vector<NamedEnsemble>& models, const LabeledDataset& ds,
                                         const std::vector<AttackSpec>& specs);

// Columns: trainer, attack, eps, robust_acc, clean_acc, n_points, n_samples.
void write_attacks_csv(std::ostream& out, std::span<const AttackTableRow> rows);

struct SweepRecord {
  std::string arch;
  std::string trainer;
  std::size_t width = 0;
  std::size_t train_n = 0;
  double test_acc = 0.0;
  double softmax_diff = 0.0;
  AttackKind attack = AttackKind::Fgsm;
  double eps = 0.0;

  void validate() const;
};

// Columns: arch, trainer, width, train_n, test_acc, softmax_diff, attack, eps.
void write_sweep_csv(std::ostream& out, std::span<const SweepRecord> rows);

struct PcaResult {
  Matrix projections;  // members x components
  Vector explained;    // fractions of total variance, non-increasing
  double total_variance = 0.0;
  bool degenerate = false;
};

// Top principal components of the member weight vectors, from the member Gram
// matrix. The sign of each component makes its largest-magnitude loading positive.
PcaResult pca_project(const PosteriorEnsemble& ensemble, std::size_t n_components = 2);

struct PcaBlock {
  std::string trainer;
  std::size_t train_n = 0;
  PcaResult pca;
};

// Columns: member_id, pc1, pc2, trainer, train_n.
void write_pca_csv(std::ostream& out, std::span<const PcaBlock> blocks);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

struct TwoMeans {
  std::vector<int> assignment;
  double silhouette = 0.0;
};

// Exact 2-means on a line plus the mean silhouette of that split.
TwoMeans two_means_1d(std::span<const double> values);

double median(std::vector<double> values);

}  // namespace bnnrob
