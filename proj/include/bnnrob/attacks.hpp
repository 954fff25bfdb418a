#pragma once

#include "bnnrob/inference.hpp"
#include "bnnrob/nn.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bnnrob {

enum class AttackKind { Fgsm, Pgd, Random, Zoo };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);

// The same [lo, hi] bounds apply to every feature.
struct ClipDomain {
  double lo = 0.0;
  double hi = 1.0;
};

struct AttackSpec {
  AttackKind kind = AttackKind::Fgsm;
  double epsilon = 0.1;  // L-infinity radius
  std::size_t pgd_iterations = 15;
  std::size_t pgd_restarts = 1;
  std::optional<double> pgd_step;  // defaults to epsilon / 10
  double zoo_fd_step = 1e-3;
  std::size_t zoo_iterations = 15;
  std::size_t zoo_coords_per_iter = 16;  // capped at the input dimension
  std::optional<ClipDomain> clip_domain;
  std::uint64_t seed = 0;

  double step() const { return pgd_step.value_or(epsilon / 10.0); }
  void validate() const;
};

struct AttackOutcome {
  AttackKind kind = AttackKind::Fgsm;
  double epsilon = 0.0;
  int label = 0;
  Vector x;
  Vector x_adv;
  Vector clean_pred;  // posterior predictive at x
  Vector adv_pred;    // posterior predictive at x_adv
  // Posterior-expected cross-entropy for the white-box attacks; for ZOO the
  // cross-entropy of the queried predictive.
  double loss_clean = 0.0;
  double loss_adv = 0.0;
  bool success = false;  // argmax of the predictive changed
  std::size_t queries = 0;  // ZOO only: predictive queries spent by the iterations
};

// sgn with sgn(0) = 0.
double sign(double v);

// Clamps every coordinate of `v` into [x - eps, x + eps] intersected with the clip box.
Vector project(const Vector& v, const Vector& x, double epsilon, const std::optional<ClipDomain>& clip);

// project(x_current + step * sgn(direction)) around the origin point `x`.
Vector sign_step(const Vector& x_current, const Vector& direction, double step, const Vector& x, double epsilon,
                 const std::optional<ClipDomain>& clip);

// (1/n) sum_i grad_x L(x, w_i). Numeric errors name the offending member.
Vector expected_gradient(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, std::span<const double> x,
                         int label);

AttackOutcome fgsm(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, std::span<const double> x,
                   int label, const AttackSpec& spec);

// First restart starts at x; later restarts at x plus uniform noise in the ball.
// Returns the restart with the highest expected loss.
AttackOutcome pgd(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, std::span<const double> x,
                  int label, const AttackSpec& spec);

// Model-independent: every component moves by +eps or -eps (then clipped).
// The predictive fields are left empty.
AttackOutcome random_attack(std::span<const double> x, const AttackSpec& spec);

// Fills clean/adversarial predictive vectors, expected losses and the success flag.
void evaluate_outcome(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, AttackOutcome& outcome);

// Black-box query returning the posterior predictive (softmax) vector.
using PredictFn = std::function<Vector(std::span<const double>)>;

// Central differences (f(x + h e_j) - f(x - h e_j)) / 2h for each listed coordinate.
Vector central_difference(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                          std::span<const std::size_t> coords, double h);

// Coordinate-wise sign steps driven by finite-difference estimates of the
// predictive cross-entropy. Touches the model only through `predict`.
AttackOutcome zoo_attack(const PredictFn& predict, std::span<const double> x, int label, const AttackSpec& spec);

// Dispatches on spec.kind; ZOO queries the ensemble's predictive.
AttackOutcome run_attack(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, std::span<const double> x,
                         int label, const AttackSpec& spec);

// Seed used for point `index` when attacking a batch.
std::uint64_t point_seed(std::uint64_t seed, std::size_t index);

// Attacks every row of `points`. FGSM/PGD/random work on all points at once;
// point i uses spec.seed = point_seed(spec.seed, i).
std::vector<AttackOutcome> attack_batch(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble,
                                        const InputMatrix& points, std::span<const int> labels,
                                        const AttackSpec& spec);

// Columns: index, eps, kind, linf_delta, loss_clean, loss_adv, clean_label, clean_pred, adv_pred, success.
void write_attack_csv(std::ostream& out, std::span<const AttackOutcome> outcomes);

}  // namespace bnnrob
