#include "bnnrob/inference.hpp"
#include "bnnrob/random.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace bnnrob {

namespace {

double kinetic(const Vector& p) { return 0.5 * p.squaredNorm(); }

// Evaluates the potential, mapping a NumericError from the model to a divergence.
std::optional<ObjectiveEvaluation> try_potential(const PotentialFn& potential, const Vector& q) {
  if (!q.allFinite()) return std::nullopt;
  try {
    ObjectiveEvaluation e = potential(q);
    if (!std::isfinite(e.value) || !e.gradient.allFinite()) return std::nullopt;
    return e;
  } catch (const NumericError&) {
    return std::nullopt;
  }
}

struct ChainRun {
  std::vector<Vector> draws;
  HmcDiagnostics diagnostics;
  std::size_t post_accepted = 0;
  std::size_t post_iterations = 0;
};

ChainRun run_chain(const PotentialFn& potential, const Vector& initial, const HmcConfig& cfg,
                   std::size_t draws_wanted, std::uint64_t seed) {
  ChainRun run;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Vector q = initial;
  auto current = try_potential(potential, q);
  if (!current) throw NumericError("HMC: potential is not finite at the initial state");

  std::size_t warmup_accepted = 0;
  std::size_t post_accepted = 0;
  std::size_t post_iterations = 0;
  const std::size_t total = cfg.warmup + draws_wanted * cfg.thin;
  Vector p(q.size());
  for (std::size_t iter = 0; iter < total; ++iter) {
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = normal(rng);
    const LeapfrogResult step = leapfrog(potential, q, p, cfg.step_size, cfg.leapfrog_steps, *current);
    const double delta_h = step.energy_after - step.energy_before;
    const double u = uniform(rng);
    bool accept = false;
    if (step.diverged || !std::isfinite(delta_h) || std::abs(delta_h) > kDivergenceThreshold) {
      ++run.diagnostics.divergences;
    } else {
      accept = delta_h <= 0.0 || std::log(u) < -delta_h;
    }
    if (accept) {
      q = step.position;
      current = step.end_potential;
    }
    ++run.diagnostics.iterations;
    if (iter < cfg.warmup) {
      warmup_accepted += accept ? 1 : 0;
      if (iter + 1 == cfg.warmup) {
        const double rate = static_cast<double>(warmup_accepted) / static_cast<double>(cfg.warmup);
        if (rate < 0.01) {
          std::ostringstream msg;
          msg << "HMC accepted " << warmup_accepted << " of " << cfg.warmup
              << " warmup proposals; reduce step_size (currently " << cfg.step_size << ")";
          throw SamplerDiagnosticError(msg.str());
        }
      }
      continue;
    }
    ++post_iterations;
    post_accepted += accept ? 1 : 0;
    if ((iter - cfg.warmup + 1) % cfg.thin == 0) run.draws.push_back(q);
  }
  run.diagnostics.accepted = warmup_accepted + post_accepted;
  run.post_accepted = post_accepted;
  run.post_iterations = post_iterations;
  run.diagnostics.warmup_acceptance =
      cfg.warmup == 0 ? 1.0 : static_cast<double>(warmup_accepted) / static_cast<double>(cfg.warmup);
  run.diagnostics.acceptance_rate =
      post_iterations == 0 ? 0.0 : static_cast<double>(post_accepted) / static_cast<double>(post_iterations);
  return run;
}

}  // namespace

void HmcConfig::validate() const {
  require(std::isfinite(step_size) && step_size > 0.0, "hmc: step_size must be > 0");
  require(samples >= 1, "hmc: samples must be >= 1");
  require(thin >= 1, "hmc: thin must be >= 1");
  require(chains >= 1, "hmc: chains must be >= 1");
}

LeapfrogResult leapfrog(const PotentialFn& potential, Vector position, Vector momentum, double step_size,
                        std::size_t steps, std::optional<ObjectiveEvaluation> start) {
  LeapfrogResult out;
  if (!start) start = try_potential(potential, position);
  if (!start || !momentum.allFinite()) {
    out.position = std::move(position);
    out.momentum = std::move(momentum);
    out.diverged = true;
    out.energy_before = out.energy_after = std::numeric_limits<double>::infinity();
    return out;
  }
  out.energy_before = start->value + kinetic(momentum);
  ObjectiveEvaluation current = std::move(*start);
  if (steps > 0) {
    momentum.noalias() -= 0.5 * step_size * current.gradient;
    for (std::size_t s = 1; s <= steps; ++s) {
      position.noalias() += step_size * momentum;
      auto next = try_potential(potential, position);
      if (!next) {
        out.position = std::move(position);
        out.momentum = std::move(momentum);
        out.diverged = true;
        out.energy_after = std::numeric_limits<double>::infinity();
        return out;
      }
      current = std::move(*next);
      momentum.noalias() -= (s == steps ? 0.5 : 1.0) * step_size * current.gradient;
    }
  }
  out.energy_after = current.value + kinetic(momentum);
  out.diverged = !std::isfinite(out.energy_after);
  out.position = std::move(position);
  out.momentum = std::move(momentum);
  out.end_potential = std::move(current);
  return out;
}

std::vector<Vector> hmc_sample_target(const PotentialFn& potential, const Vector& initial, const HmcConfig& cfg,
                                      HmcDiagnostics* diagnostics) {
  cfg.validate();
  ChainRun run = run_chain(potential, initial, cfg, cfg.samples, derive_seed(cfg.seed, "hmc/chain/0"));
  if (diagnostics != nullptr) *diagnostics = run.diagnostics;
  return std::move(run.draws);
}

PosteriorEnsemble hmc_sample(const MlpArchitecture& arch, const LabeledDataset& ds, const GaussianPrior& prior,
                             const HmcConfig& cfg, HmcDiagnostics* diagnostics,
                             const std::optional<WeightVector>& initial) {
  cfg.validate();
  prior.validate();
  ds.validate();
  require(ds.dim() == arch.input_dim, "hmc: dataset dimension does not match the architecture");
  if (initial) require(initial->size() == arch.parameter_count(), "hmc: initial state has the wrong length");

  const PotentialFn potential = [&](const Vector& q) {
    ObjectiveEvaluation e = log_posterior_with_gradient(arch, WeightVector{q}, ds, prior);
    e.value = -e.value;
    e.gradient = -e.gradient;
    return e;
  };

  const std::size_t per_chain = (cfg.samples + cfg.chains - 1) / cfg.chains;
  std::vector<ChainRun> runs;
  HmcDiagnostics total;
  double warmup_rate_sum = 0.0;
  std::size_t post_iterations = 0;
  std::size_t post_accepted = 0;
  for (std::size_t c = 0; c < cfg.chains; ++c) {
    const std::string tag = std::to_string(c);
    const Vector start = initial ? initial->values : initial_weights(arch, derive_seed(cfg.seed, "hmc/init/" + tag)).values;
    runs.push_back(run_chain(potential, start, cfg, per_chain, derive_seed(cfg.seed, "hmc/chain/" + tag)));
    const HmcDiagnostics& d = runs.back().diagnostics;
    total.iterations += d.iterations;
    total.accepted += d.accepted;
    total.divergences += d.divergences;
    warmup_rate_sum += d.warmup_acceptance;
    post_iterations += runs.back().post_iterations;
    post_accepted += runs.back().post_accepted;
  }
  total.warmup_acceptance = warmup_rate_sum / static_cast<double>(cfg.chains);
  total.acceptance_rate =
      post_iterations == 0 ? 0.0 : static_cast<double>(post_accepted) / static_cast<double>(post_iterations);
  if (diagnostics != nullptr) *diagnostics = total;

  PosteriorEnsemble ensemble{arch, {}, Provenance::Hmc, cfg.seed};
  ensemble.members.reserve(cfg.samples);
  for (std::size_t i = 0; i < per_chain && ensemble.members.size() < cfg.samples; ++i) {
    for (std::size_t c = 0; c < cfg.chains && ensemble.members.size() < cfg.samples; ++c) {
      ensemble.members.push_back(WeightVector{runs[c].draws[i]});
    }
  }
  return ensemble;
}

}  // namespace bnnrob
