#pragma once

#include "bnnrob/data.hpp"
#include "bnnrob/errors.hpp"
#include "bnnrob/nn.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bnnrob {

// Zero-mean isotropic Gaussian on every weight; a wide std stands in for a flat prior.
struct GaussianPrior {
  double std = 10.0;

  void validate() const;
  double log_density(const Vector& w) const;
  Vector log_density_gradient(const Vector& w) const { return -w / (std * std); }
};

enum class Provenance : std::uint8_t { Hmc = 0, Vi = 1, Sgd = 2, DeepEnsemble = 3 };

std::string to_string(Provenance p);
Provenance parse_provenance(const std::string& name);

struct PosteriorEnsemble {
  MlpArchitecture arch;
  std::vector<WeightVector> members;
  Provenance provenance = Provenance::Hmc;
  std::uint64_t seed = 0;

  std::size_t size() const { return members.size(); }
  // Non-empty, every member has arch.parameter_count() finite values.
  void validate() const;
  // First `count` members, in stored order.
  PosteriorEnsemble prefix(std::size_t count) const;

  bool operator==(const PosteriorEnsemble& other) const;
};

// "BNNE" | u32 version | u8 provenance | u64 seed | u64 members | u32 len + arch descriptor |
// members * n_w little-endian f64.
void write_ensemble(std::ostream& out, const PosteriorEnsemble& ensemble);
PosteriorEnsemble read_ensemble(std::istream& in);
void save_ensemble(const std::string& path, const PosteriorEnsemble& ensemble);
PosteriorEnsemble load_ensemble(const std::string& path);

// Sum over points of log p(y | x, w) (negative cross-entropy) plus the Gaussian log prior.
double log_posterior(const MlpArchitecture& arch, const WeightVector& w, const LabeledDataset& ds,
                     const GaussianPrior& prior);

struct ObjectiveEvaluation {
  double value = 0.0;
  Vector gradient;
};

ObjectiveEvaluation log_posterior_with_gradient(const MlpArchitecture& arch, const WeightVector& w,
                                                const LabeledDataset& ds, const GaussianPrior& prior);

// ---------------------------------------------------------------------------
// Hamiltonian Monte Carlo

// Potential energy U(q) = -log target(q) and its gradient.
using PotentialFn = std::function<ObjectiveEvaluation(const Vector& q)>;

struct LeapfrogResult {
  Vector position;
  Vector momentum;
  double energy_before = 0.0;  // H = U + |p|^2 / 2 at the start
  double energy_after = 0.0;
  ObjectiveEvaluation end_potential;
  bool diverged = false;  // non-finite state somewhere along the trajectory
};

// Half kick, `steps` x (drift, kick), with the final kick halved. steps == 0 is the identity.
LeapfrogResult leapfrog(const PotentialFn& potential, Vector position, Vector momentum, double step_size,
                        std::size_t steps, std::optional<ObjectiveEvaluation> start = std::nullopt);

struct HmcConfig {
  double step_size = 0.002;
  std::size_t leapfrog_steps = 10;
  std::size_t warmup = 200;
  std::size_t samples = 250;
  std::size_t thin = 1;    // keep every thin-th post-warmup draw
  std::size_t chains = 1;  // chains are interleaved in the member order
  std::uint64_t seed = 0;

  void validate() const;
};

struct HmcDiagnostics {
  std::size_t iterations = 0;
  std::size_t accepted = 0;
  std::size_t divergences = 0;
  double warmup_acceptance = 0.0;
  double acceptance_rate = 0.0;  // post-warmup
};

// Thrown when fewer than 1% of warmup proposals are accepted.
class SamplerDiagnosticError : public NumericError {
 public:
  using NumericError::NumericError;
};

inline constexpr double kDivergenceThreshold = 1e4;

// Identity mass matrix, fresh N(0, I) momentum every iteration, Metropolis
// correction. Trajectories with |dH| > kDivergenceThreshold are rejected and counted.
// Single chain; cfg.chains is only used by hmc_sample.
std::vector<Vector> hmc_sample_target(const PotentialFn& potential, const Vector& initial, const HmcConfig& cfg,
                                      HmcDiagnostics* diagnostics = nullptr);

// Samples p(w | ds) for the network. `initial` defaults to initial_weights() per chain.
PosteriorEnsemble hmc_sample(const MlpArchitecture& arch, const LabeledDataset& ds, const GaussianPrior& prior,
                             const HmcConfig& cfg, HmcDiagnostics* diagnostics = nullptr,
                             const std::optional<WeightVector>& initial = std::nullopt);

// ---------------------------------------------------------------------------
// Mean-field variational inference

struct ViConfig {
  std::size_t epochs = 5;
  double learning_rate = 0.01;
  std::size_t mc_samples_per_step = 1;
  double init_log_std = -5.0;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;

  void validate() const;
};

struct ViResult {
  Vector mean;
  Vector std;
  std::vector<double> elbo_trace;  // one Monte Carlo ELBO estimate per optimizer step
};

// KL(N(mu_q, diag(s_q^2)) || N(mu_p, diag(s_p^2))), closed form.
double kl_diagonal_gaussian(const Vector& mean_q, const Vector& std_q, const Vector& mean_p, const Vector& std_p);
double kl_to_prior(const Vector& mean, const Vector& std, const GaussianPrior& prior);

// Inverse of the positive std transform std = log(1 + exp(rho)).
double softplus(double rho);
double inverse_softplus(double s);

using LogLikelihoodFn = std::function<ObjectiveEvaluation(const Vector& w)>;

// Maximizes E_q[loglik] - KL(q || prior) for `cfg.epochs` Adam steps using the
// reparameterization w = mean + std * z.
ViResult vi_fit_target(const LogLikelihoodFn& log_likelihood, const Vector& initial_mean,
                       const GaussianPrior& prior, const ViConfig& cfg);

// One step per epoch when full batch; otherwise ceil(N / batch_size) steps per
// epoch with the minibatch likelihood rescaled by N / batch.
ViResult vi_fit(const MlpArchitecture& arch, const LabeledDataset& ds, const GaussianPrior& prior,
                const ViConfig& cfg);

PosteriorEnsemble vi_sample(const MlpArchitecture& arch, const Vector& mean, const Vector& std,
                            std::size_t n_samples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Point estimates

struct SgdConfig {
  std::size_t epochs = 5;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

// Minibatch SGD on the mean cross-entropy, reshuffling every epoch.
WeightVector sgd_train(const MlpArchitecture& arch, const LabeledDataset& ds, const SgdConfig& cfg);

// Seed used for member i of a deep ensemble built from `seed`.
std::uint64_t deep_ensemble_member_seed(std::uint64_t seed, std::size_t member);

PosteriorEnsemble deep_ensemble_train(const MlpArchitecture& arch, const LabeledDataset& ds, std::size_t n_members,
                                      const SgdConfig& sgd, std::uint64_t seed);

}  // namespace bnnrob
