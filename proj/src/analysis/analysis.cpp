#include "bnnrob/analysis.hpp"

#include "bnnrob/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

namespace bnnrob {

namespace {

Matrix stack_predictive(std::span<const AttackOutcome> outcomes, bool adversarial) {
  require(!outcomes.empty(), "no attack outcomes");
  const Eigen::Index k = outcomes.front().clean_pred.size();
  Matrix out(k, static_cast<Eigen::Index>(outcomes.size()));
  for (std::size_t j = 0; j < outcomes.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = adversarial ? outcomes[j].adv_pred : outcomes[j].clean_pred;
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double median(std::vector<double> values) {
  require(!values.empty(), "median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double accuracy_from_predictive(const Matrix& predictive_columns, std::span<const int> labels) {
  require(!labels.empty(), "accuracy: empty dataset");
  require(labels.size() == static_cast<std::size_t>(predictive_columns.cols()), "accuracy: label count mismatch");
  std::size_t hits = 0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (argmax(predictive_columns.col(static_cast<Eigen::Index>(j))) == labels[j]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double accuracy(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, const LabeledDataset& ds) {
  require(ds.size() > 0, "accuracy: empty dataset");
  return accuracy_from_predictive(predictive_batch(arch, ensemble, as_columns(ds.inputs)), ds.labels);
}

double softmax_difference(const Matrix& clean_predictive, const Matrix& adversarial_predictive) {
  require(clean_predictive.rows() == adversarial_predictive.rows() &&
              clean_predictive.cols() == adversarial_predictive.cols(),
          "softmax_difference: clean and adversarial lists differ in shape");
  require(clean_predictive.cols() > 0, "softmax_difference: empty lists");
  double total = 0.0;
  for (Eigen::Index j = 0; j < clean_predictive.cols(); ++j) {
    total += (clean_predictive.col(j) - adversarial_predictive.col(j)).cwiseAbs().maxCoeff();
  }
  return total / static_cast<double>(clean_predictive.cols());
}

double softmax_difference(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, const InputMatrix& clean,
                          const InputMatrix& adversarial) {
  require(clean.rows() == adversarial.rows(), "softmax_difference: clean and adversarial lists differ in length");
  return softmax_difference(predictive_batch(arch, ensemble, as_columns(clean)),
                            predictive_batch(arch, ensemble, as_columns(adversarial)));
}

const GradientEntry& GradientReport::at(std::size_t count_index, std::size_t point) const {
  require(count_index < sample_counts.size() && point < n_points, "gradient report index out of range");
  return entries[count_index * n_points + point];
}

double GradientReport::median_linf(std::size_t count_index) const {
  std::vector<double> v;
  v.reserve(n_points);
  for (std::size_t p = 0; p < n_points; ++p) v.push_back(at(count_index, p).linf);
  return median(std::move(v));
}

double GradientReport::median_abs_component(std::size_t count_index) const {
  std::vector<double> v;
  for (std::size_t p = 0; p < n_points; ++p) {
    const Vector& g = at(count_index, p).gradient;
    for (Eigen::Index i = 0; i < g.size(); ++i) v.push_back(std::abs(g[i]));
  }
  return median(std::move(v));
}

GradientReport gradient_vanishing_report(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble,
                                         const InputMatrix& points, std::span<const int> labels,
                                         std::span<const std::size_t> sample_counts) {
  require(!sample_counts.empty(), "gradient report: sample_counts is empty");
  require(std::is_sorted(sample_counts.begin(), sample_counts.end()) &&
              std::adjacent_find(sample_counts.begin(), sample_counts.end()) == sample_counts.end(),
          "gradient report: sample_counts must be strictly ascending");
  require(sample_counts.front() >= 1, "gradient report: sample counts must be >= 1");
  require(sample_counts.back() <= ensemble.size(),
          "gradient report: sample count " + std::to_string(sample_counts.back()) + " exceeds the ensemble size " +
              std::to_string(ensemble.size()));
  require(ensemble.arch == arch, "gradient report: ensemble architecture does not match");
  require(static_cast<std::size_t>(points.cols()) == arch.input_dim, "gradient report: input dimension mismatch");
  require(labels.size() == static_cast<std::size_t>(points.rows()), "gradient report: one label per point");

  GradientReport report;
  report.sample_counts.assign(sample_counts.begin(), sample_counts.end());
  report.n_points = labels.size();
  report.entries.reserve(report.n_points * sample_counts.size());
  const auto inputs = as_columns(points);
  Matrix sum = Matrix::Zero(inputs.rows(), inputs.cols());
  std::size_t next = 0;
  for (std::size_t m = 0; m < sample_counts.back(); ++m) {
    try {
      sum += batch_input_gradient(arch, ensemble.members[m], inputs, labels);
    } catch (const NumericError& e) {
      throw NumericError("ensemble member " + std::to_string(m) + ": " + e.what());
    }
    if (m + 1 != sample_counts[next]) continue;
    const Matrix mean = sum / static_cast<double>(m + 1);
    for (std::size_t p = 0; p < report.n_points; ++p) {
      GradientEntry e;
      e.point_id = p;
      e.sample_count = m + 1;
      e.gradient = mean.col(static_cast<Eigen::Index>(p));
      e.linf = e.gradient.cwiseAbs().maxCoeff();
      e.mean_abs = e.gradient.cwiseAbs().mean();
      report.entries.push_back(std::move(e));
    }
    ++next;
  }
  return report;
}

void write_gradients_csv(std::ostream& out, const GradientReport& report) {
  out << "point_id,sample_count,component_index,value\n" << std::setprecision(17);
  for (const GradientEntry& e : report.entries) {
    for (Eigen::Index i = 0; i < e.gradient.size(); ++i) {
      out << e.point_id << ',' << e.sample_count << ',' << i << ',' << e.gradient[i] << '\n';
    }
  }
}

AttackTableRow summarize_attack(const std::string& trainer, const PosteriorEnsemble& ensemble,
                                const LabeledDataset& ds, const Matrix& clean_predictive,
                                std::span<const AttackOutcome> outcomes) {
  require(outcomes.size() == ds.size(), "attack summary: one outcome per point is required");
  const Matrix adv = stack_predictive(outcomes, true);
  AttackTableRow row;
  row.trainer = trainer;
  row.attack = outcomes.front().kind;
  row.eps = outcomes.front().epsilon;
  row.robust_acc = accuracy_from_predictive(adv, ds.labels);
  row.clean_acc = accuracy_from_predictive(clean_predictive, ds.labels);
  row.softmax_diff = softmax_difference(clean_predictive, adv);
  row.n_points = ds.size();
  row.n_samples = ensemble.size();
  return row;
}

std::vector<AttackTableRow> attack_table(const std::vector<NamedEnsemble>& models, const LabeledDataset& ds,
                                         const std::vector<AttackSpec>& specs) {
  require(!models.empty(), "attack table: no models");
  require(!specs.empty(), "attack table: no attacks");
  require(ds.size() > 0, "attack table: empty dataset");
  std::vector<AttackTableRow> rows;
  for (const NamedEnsemble& model : models) {
    require(model.ensemble != nullptr, "attack table: null ensemble for " + model.trainer);
    const PosteriorEnsemble& ens = *model.ensemble;
    const Matrix clean = predictive_batch(ens.arch, ens, as_columns(ds.inputs));
    for (const AttackSpec& spec : specs) {
      const std::vector<AttackOutcome> outcomes = attack_batch(ens.arch, ens, ds.inputs, ds.labels, spec);
      rows.push_back(summarize_attack(model.trainer, ens, ds, clean, outcomes));
    }
  }
  return rows;
}

void write_attacks_csv(std::ostream& out, std::span<const AttackTableRow> rows) {
  out << "trainer,attack,eps,robust_acc,clean_acc,n_points,n_samples\n" << std::setprecision(17);
  for (const AttackTableRow& r : rows) {
    out << r.trainer << ',' << to_string(r.attack) << ',' << r.eps << ',' << r.robust_acc << ',' << r.clean_acc
        << ',' << r.n_points << ',' << r.n_samples << '\n';
  }
}

void SweepRecord::validate() const {
  require(test_acc >= 0.0 && test_acc <= 1.0, "sweep record: test_acc outside [0,1]");
  require(softmax_diff >= 0.0 && softmax_diff <= 1.0, "sweep record: softmax_diff outside [0,1]");
  require(trainer == "hmc" || trainer == "vi" || trainer == "sgd" || trainer == "deep-ensemble",
          "sweep record: unknown trainer " + trainer);
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRecord> rows) {
  out << "arch,trainer,width,train_n,test_acc,softmax_diff,attack,eps\n" << std::setprecision(17);
  for (const SweepRecord& r : rows) {
    r.validate();
    out << r.arch << ',' << r.trainer << ',' << r.width << ',' << r.train_n << ',' << r.test_acc << ','
        << r.softmax_diff << ',' << to_string(r.attack) << ',' << r.eps << '\n';
  }
}

PcaResult pca_project(const PosteriorEnsemble& ensemble, std::size_t n_components) {
  require(n_components >= 1, "pca: n_components must be >= 1");
  const std::size_t n = ensemble.size();
  require(n >= n_components + 1, "pca: ensemble needs at least n_components + 1 members");
  const Eigen::Index p = ensemble.members.front().values.size();
  const auto ni = static_cast<Eigen::Index>(n);
  const auto k = static_cast<Eigen::Index>(n_components);

  Vector mean = Vector::Zero(p);
  for (const WeightVector& w : ensemble.members) {
    require(w.values.size() == p, "pca: members differ in length");
    mean += w.values;
  }
  mean /= static_cast<double>(n);
  Matrix centered(ni, p);
  for (Eigen::Index i = 0; i < ni; ++i) centered.row(i) = (ensemble.members[static_cast<std::size_t>(i)].values - mean).transpose();

  // n x n Gram matrix; its eigenvectors give the member scores directly.
  const Matrix gram = centered * centered.transpose();
  PcaResult result;
  result.total_variance = gram.trace() / static_cast<double>(n - 1);
  result.projections = Matrix::Zero(ni, k);
  result.explained = Vector::Zero(k);
  if (!(gram.trace() > 0.0)) {
    result.degenerate = true;
    return result;
  }
  const Eigen::SelfAdjointEigenSolver<Matrix> solver(gram);
  require(solver.info() == Eigen::Success, "pca: eigensolver failed");
  const double trace = gram.trace();
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index idx = ni - 1 - c;  // eigenvalues come in ascending order
    const double lambda = std::max(solver.eigenvalues()[idx], 0.0);
    if (lambda <= 1e-14 * trace) continue;
    Vector u = solver.eigenvectors().col(idx);
    const Vector loading = centered.transpose() * u / std::sqrt(lambda);
    Eigen::Index peak = 0;
    for (Eigen::Index i = 1; i < loading.size(); ++i) {
      if (std::abs(loading[i]) > std::abs(loading[peak])) peak = i;
    }
    if (loading[peak] < 0.0) u = -u;
    result.projections.col(c) = u * std::sqrt(lambda);
    result.explained[c] = lambda / trace;
  }
  return result;
}

void write_pca_csv(std::ostream& out, std::span<const PcaBlock> blocks) {
  out << "member_id,pc1,pc2,trainer,train_n\n" << std::setprecision(17);
  for (const PcaBlock& b : blocks) {
    const Matrix& proj = b.pca.projections;
    for (Eigen::Index i = 0; i < proj.rows(); ++i) {
      const double pc1 = proj.cols() > 0 ? proj(i, 0) : 0.0;
      const double pc2 = proj.cols() > 1 ? proj(i, 1) : 0.0;
      out << i << ',' << pc1 << ',' << pc2 << ',' << b.trainer << ',' << b.train_n << '\n';
    }
  }
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "spearman: length mismatch");
  require(x.size() >= 2, "spearman: needs at least two pairs");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, "spearman: a constant sequence has no rank correlation");
  return sxy / std::sqrt(sxx * syy);
}

TwoMeans two_means_1d(std::span<const double> values) {
  require(values.size() >= 2, "two_means_1d: needs at least two values");
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  // The optimal 1-D split is contiguous in sorted order; scan every cut.
  std::vector<double> prefix(n + 1, 0.0), prefix_sq(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    prefix[i + 1] = prefix[i] + values[order[i]];
    prefix_sq[i + 1] = prefix_sq[i] + values[order[i]] * values[order[i]];
  }
  const auto sse = [&](std::size_t a, std::size_t b) {
    const double count = static_cast<double>(b - a);
    const double s = prefix[b] - prefix[a];
    return (prefix_sq[b] - prefix_sq[a]) - s * s / count;
  };
  std::size_t best_cut = 1;
  double best = sse(0, 1) + sse(1, n);
  for (std::size_t cut = 2; cut < n; ++cut) {
    const double cost = sse(0, cut) + sse(cut, n);
    if (cost < best) {
      best = cost;
      best_cut = cut;
    }
  }

  TwoMeans out;
  out.assignment.assign(n, 1);
  for (std::size_t i = 0; i < best_cut; ++i) out.assignment[order[i]] = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double own = 0.0, other = 0.0;
    std::size_t own_n = 0, other_n = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dist = std::abs(values[i] - values[j]);
      if (out.assignment[j] == out.assignment[i]) {
        own += dist;
        ++own_n;
      } else {
        other += dist;
        ++other_n;
      }
    }
    if (own_n == 0) continue;  // singleton clusters score 0
    const double a = own / static_cast<double>(own_n);
    const double b = other / static_cast<double>(other_n);
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  out.silhouette = total / static_cast<double>(n);
  return out;
}

}  // namespace bnnrob
