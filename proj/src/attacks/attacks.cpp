#include "bnnrob/attacks.hpp"

#include "bnnrob/errors.hpp"
#include "bnnrob/predictive.hpp"
#include "bnnrob/random.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

namespace bnnrob {

namespace {

Vector to_vector(std::span<const double> x) {
  return Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
}

std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

// Cross-entropy of a predictive vector; probabilities are floored so a zero
// predictive gives a large finite loss.
double predictive_loss(const Vector& p, int label) {
  return -std::log(std::max(p[label], std::numeric_limits<double>::min()));
}

void check_point(const MlpArchitecture& arch, std::span<const double> x, int label) {
  require(x.size() == arch.input_dim, "attack: input dimension mismatch");
  require(label >= 0 && static_cast<std::size_t>(label) < arch.output_dim, "attack: label out of range");
}

// White-box attacks on the columns of `x` (d x B); column j uses seeds[j].
std::vector<AttackOutcome> attack_columns(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble,
                                          const Matrix& x, std::span<const int> labels, const AttackSpec& spec,
                                          std::span<const std::uint64_t> seeds) {
  const Eigen::Index b = x.cols();
  const Eigen::Index d = x.rows();
  Matrix best(d, b);
  switch (spec.kind) {
    case AttackKind::Fgsm: {
      const Matrix g = expected_gradient_batch(arch, ensemble, x, labels);
      for (Eigen::Index j = 0; j < b; ++j) {
        best.col(j) = sign_step(x.col(j), g.col(j), spec.epsilon, x.col(j), spec.epsilon, spec.clip_domain);
      }
      break;
    }
    case AttackKind::Pgd: {
      std::vector<Rng> rngs;
      rngs.reserve(static_cast<std::size_t>(b));
      for (Eigen::Index j = 0; j < b; ++j) rngs.emplace_back(derive_seed(seeds[static_cast<std::size_t>(j)], "pgd/restart"));
      std::uniform_real_distribution<double> noise(-spec.epsilon, spec.epsilon);
      Vector best_loss = Vector::Constant(b, -std::numeric_limits<double>::infinity());
      Matrix current(d, b);
      for (std::size_t r = 0; r < spec.pgd_restarts; ++r) {
        current = x;
        if (r > 0) {
          for (Eigen::Index j = 0; j < b; ++j) {
            Vector start = x.col(j);
            for (Eigen::Index i = 0; i < d; ++i) start[i] += noise(rngs[static_cast<std::size_t>(j)]);
            current.col(j) = project(start, x.col(j), spec.epsilon, spec.clip_domain);
          }
        }
        for (std::size_t it = 0; it < spec.pgd_iterations; ++it) {
          const Matrix g = expected_gradient_batch(arch, ensemble, current, labels);
          for (Eigen::Index j = 0; j < b; ++j) {
            current.col(j) = sign_step(current.col(j), g.col(j), spec.step(), x.col(j), spec.epsilon, spec.clip_domain);
          }
        }
        const Vector losses = expected_loss_batch(arch, ensemble, current, labels);
        for (Eigen::Index j = 0; j < b; ++j) {
          if (losses[j] > best_loss[j]) {
            best_loss[j] = losses[j];
            best.col(j) = current.col(j);
          }
        }
      }
      break;
    }
    case AttackKind::Random:
      for (Eigen::Index j = 0; j < b; ++j) {
        AttackSpec point = spec;
        point.seed = seeds[static_cast<std::size_t>(j)];
        const Vector xj = x.col(j);
        best.col(j) = random_attack(as_span(xj), point).x_adv;
      }
      break;
    case AttackKind::Zoo:
      throw ContractViolation("attack_columns: ZOO is handled per point");
  }

  const Matrix clean_pred = predictive_batch(arch, ensemble, x);
  const Matrix adv_pred = predictive_batch(arch, ensemble, best);
  const Vector clean_loss = expected_loss_batch(arch, ensemble, x, labels);
  const Vector adv_loss = expected_loss_batch(arch, ensemble, best, labels);
  std::vector<AttackOutcome> out(static_cast<std::size_t>(b));
  for (Eigen::Index j = 0; j < b; ++j) {
    AttackOutcome& o = out[static_cast<std::size_t>(j)];
    o.kind = spec.kind;
    o.epsilon = spec.epsilon;
    o.label = labels[static_cast<std::size_t>(j)];
    o.x = x.col(j);
    o.x_adv = best.col(j);
    o.clean_pred = clean_pred.col(j);
    o.adv_pred = adv_pred.col(j);
    o.loss_clean = clean_loss[j];
    o.loss_adv = adv_loss[j];
    o.success = argmax(o.adv_pred) != argmax(o.clean_pred);
  }
  return out;
}

AttackOutcome attack_one(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, std::span<const double> x,
                         int label, const AttackSpec& spec) {
  spec.validate();
  check_point(arch, x, label);
  const Matrix column = to_vector(x);
  const int labels[1] = {label};
  const std::uint64_t seeds[1] = {spec.seed};
  return std::move(attack_columns(arch, ensemble, column, labels, spec, seeds).front());
}

}  // namespace

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::Fgsm: return "fgsm";
    case AttackKind::Pgd: return "pgd";
    case AttackKind::Random: return "random";
    case AttackKind::Zoo: return "zoo";
  }
  return "unknown";
}

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "fgsm") return AttackKind::Fgsm;
  if (name == "pgd") return AttackKind::Pgd;
  if (name == "random") return AttackKind::Random;
  if (name == "zoo") return AttackKind::Zoo;
  throw ContractViolation("unknown attack kind '" + name + "' (expected fgsm, pgd, random or zoo)");
}

void AttackSpec::validate() const {
  require(std::isfinite(epsilon) && epsilon >= 0.0, "attack: epsilon must be finite and >= 0");
  require(pgd_iterations >= 1, "attack: pgd_iterations must be >= 1");
  require(pgd_restarts >= 1, "attack: pgd_restarts must be >= 1");
  if (pgd_step) require(std::isfinite(*pgd_step) && *pgd_step > 0.0, "attack: pgd_step must be > 0");
  require(std::isfinite(zoo_fd_step) && zoo_fd_step > 0.0, "attack: zoo_fd_step must be > 0");
  require(zoo_iterations >= 1, "attack: zoo_iterations must be >= 1");
  require(zoo_coords_per_iter >= 1, "attack: zoo_coords_per_iter must be >= 1");
  if (clip_domain) {
    require(std::isfinite(clip_domain->lo) && std::isfinite(clip_domain->hi) && clip_domain->lo < clip_domain->hi,
            "attack: clip domain needs finite lo < hi");
  }
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Vector project(const Vector& v, const Vector& x, double epsilon, const std::optional<ClipDomain>& clip) {
  require(v.size() == x.size(), "project: dimension mismatch");
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double lo = x[i] - epsilon;
    double hi = x[i] + epsilon;
    if (clip) {
      lo = std::max(lo, clip->lo);
      hi = std::min(hi, clip->hi);
    }
    // An origin outside the clip box can leave an empty interval; the box wins.
    out[i] = lo <= hi ? std::clamp(v[i], lo, hi) : std::clamp(v[i], clip->lo, clip->hi);
  }
  return out;
}

Vector sign_step(const Vector& x_current, const Vector& direction, double step, const Vector& x, double epsilon,
                 const std::optional<ClipDomain>& clip) {
  require(x_current.size() == direction.size(), "sign_step: dimension mismatch");
  Vector moved = x_current;
  for (Eigen::Index i = 0; i < moved.size(); ++i) moved[i] += step * sign(direction[i]);
  return project(moved, x, epsilon, clip);
}

Vector expected_gradient(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, std::span<const double> x,
                         int label) {
  check_point(arch, x, label);
  const int labels[1] = {label};
  const Eigen::Map<const Matrix> column(x.data(), static_cast<Eigen::Index>(x.size()), 1);
  return expected_gradient_batch(arch, ensemble, column, labels).col(0);
}

AttackOutcome fgsm(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, std::span<const double> x,
                   int label, const AttackSpec& spec) {
  AttackSpec s = spec;
  s.kind = AttackKind::Fgsm;
  return attack_one(arch, ensemble, x, label, s);
}

AttackOutcome pgd(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, std::span<const double> x,
                  int label, const AttackSpec& spec) {
  AttackSpec s = spec;
  s.kind = AttackKind::Pgd;
  return attack_one(arch, ensemble, x, label, s);
}

AttackOutcome random_attack(std::span<const double> x, const AttackSpec& spec) {
  spec.validate();
  AttackOutcome o;
  o.kind = AttackKind::Random;
  o.epsilon = spec.epsilon;
  o.x = to_vector(x);
  Rng rng(derive_seed(spec.seed, "random"));
  std::bernoulli_distribution coin(0.5);
  Vector moved = o.x;
  for (Eigen::Index i = 0; i < moved.size(); ++i) moved[i] += coin(rng) ? spec.epsilon : -spec.epsilon;
  o.x_adv = project(moved, o.x, spec.epsilon, spec.clip_domain);
  return o;
}

void evaluate_outcome(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, AttackOutcome& outcome) {
  check_point(arch, as_span(outcome.x), outcome.label);
  require(outcome.x_adv.size() == outcome.x.size(), "evaluate_outcome: x_adv dimension mismatch");
  Matrix both(outcome.x.size(), 2);
  both.col(0) = outcome.x;
  both.col(1) = outcome.x_adv;
  const int labels[2] = {outcome.label, outcome.label};
  const Matrix pred = predictive_batch(arch, ensemble, both);
  const Vector losses = expected_loss_batch(arch, ensemble, both, labels);
  outcome.clean_pred = pred.col(0);
  outcome.adv_pred = pred.col(1);
  outcome.loss_clean = losses[0];
  outcome.loss_adv = losses[1];
  outcome.success = argmax(outcome.adv_pred) != argmax(outcome.clean_pred);
}

Vector central_difference(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                          std::span<const std::size_t> coords, double h) {
  require(h > 0.0, "central_difference: h must be > 0");
  Vector probe = to_vector(x);
  Vector out(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const auto j = static_cast<Eigen::Index>(coords[k]);
    require(coords[k] < x.size(), "central_difference: coordinate out of range");
    const double original = probe[j];
    probe[j] = original + h;
    const double up = f(as_span(probe));
    probe[j] = original - h;
    const double down = f(as_span(probe));
    probe[j] = original;
    out[static_cast<Eigen::Index>(k)] = (up - down) / (2.0 * h);
  }
  return out;
}

AttackOutcome zoo_attack(const PredictFn& predict, std::span<const double> x, int label, const AttackSpec& spec) {
  spec.validate();
  require(!x.empty(), "zoo: empty input");
  require(label >= 0, "zoo: label must be >= 0");
  AttackOutcome o;
  o.kind = AttackKind::Zoo;
  o.epsilon = spec.epsilon;
  o.label = label;
  o.x = to_vector(x);

  std::size_t queries = 0;
  const auto loss = [&](std::span<const double> point) {
    ++queries;
    const Vector p = predict(point);
    require(label < p.size(), "zoo: label out of range for the predictive");
    if (!p.allFinite()) throw NumericError("zoo: predictive query returned non-finite values");
    return predictive_loss(p, label);
  };

  const std::size_t d = x.size();
  const std::size_t per_iter = std::min(spec.zoo_coords_per_iter, d);
  std::vector<std::size_t> all(d);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> coords(per_iter);
  Rng rng(derive_seed(spec.seed, "zoo/coords"));
  Vector current = o.x;
  for (std::size_t it = 0; it < spec.zoo_iterations; ++it) {
    std::sample(all.begin(), all.end(), coords.begin(), per_iter, rng);
    const Vector estimate = central_difference(loss, as_span(current), coords, spec.zoo_fd_step);
    Vector moved = current;
    for (std::size_t k = 0; k < per_iter; ++k) {
      moved[static_cast<Eigen::Index>(coords[k])] += spec.step() * sign(estimate[static_cast<Eigen::Index>(k)]);
    }
    current = project(moved, o.x, spec.epsilon, spec.clip_domain);
  }
  o.queries = queries;
  o.x_adv = current;

  o.clean_pred = predict(x);
  o.adv_pred = predict(as_span(o.x_adv));
  o.loss_clean = predictive_loss(o.clean_pred, label);
  o.loss_adv = predictive_loss(o.adv_pred, label);
  o.success = argmax(o.adv_pred) != argmax(o.clean_pred);
  return o;
}

AttackOutcome run_attack(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, std::span<const double> x,
                         int label, const AttackSpec& spec) {
  if (spec.kind == AttackKind::Zoo) {
    check_point(arch, x, label);
    return zoo_attack([&](std::span<const double> p) { return predictive(arch, ensemble, p); }, x, label, spec);
  }
  return attack_one(arch, ensemble, x, label, spec);
}

std::uint64_t point_seed(std::uint64_t seed, std::size_t index) {
  return derive_seed(seed, "point/" + std::to_string(index));
}

std::vector<AttackOutcome> attack_batch(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble,
                                        const InputMatrix& points, std::span<const int> labels,
                                        const AttackSpec& spec) {
  spec.validate();
  require(static_cast<std::size_t>(points.cols()) == arch.input_dim, "attack: input dimension mismatch");
  require(labels.size() == static_cast<std::size_t>(points.rows()), "attack: one label per point is required");
  const std::size_t n = labels.size();
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = point_seed(spec.seed, i);

  if (spec.kind == AttackKind::Zoo) {
    std::vector<AttackOutcome> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      AttackSpec point = spec;
      point.seed = seeds[i];
      const std::span<const double> x(points.data() + i * arch.input_dim, arch.input_dim);
      out.push_back(run_attack(arch, ensemble, x, labels[i], point));
    }
    return out;
  }
  for (int y : labels) {
    require(y >= 0 && static_cast<std::size_t>(y) < arch.output_dim, "attack: label out of range");
  }
  return attack_columns(arch, ensemble, Matrix(as_columns(points)), labels, spec, seeds);
}

void write_attack_csv(std::ostream& out, std::span<const AttackOutcome> outcomes) {
  out << "index,eps,kind,linf_delta,loss_clean,loss_adv,clean_label,clean_pred,adv_pred,success\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const AttackOutcome& o = outcomes[i];
    const double linf = o.x.size() == 0 ? 0.0 : (o.x_adv - o.x).cwiseAbs().maxCoeff();
    out << i << ',' << o.epsilon << ',' << to_string(o.kind) << ',' << linf << ',' << o.loss_clean << ','
        << o.loss_adv << ',' << o.label << ',' << (o.clean_pred.size() ? argmax(o.clean_pred) : -1) << ','
        << (o.adv_pred.size() ? argmax(o.adv_pred) : -1) << ',' << (o.success ? 1 : 0) << '\n';
  }
}

}  // namespace bnnrob
