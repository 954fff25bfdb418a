#include "bnnrob/inference.hpp"
#include "bnnrob/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bnnrob {

namespace {

// Adam on the concatenated (mean, rho) parameters; ascent direction.
class Adam {
 public:
  Adam(Eigen::Index size, double learning_rate)
      : rate_(learning_rate), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

  void ascend(Vector& params, const Vector& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.array() += rate_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

 private:
  double rate_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::size_t t_ = 0;
  Vector m_;
  Vector v_;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Runs `steps` ELBO ascent steps; `log_likelihood(w, step)` may subsample.
ViResult run_vi(const std::function<ObjectiveEvaluation(const Vector&, std::size_t)>& log_likelihood,
                const Vector& initial_mean, const GaussianPrior& prior, const ViConfig& cfg, std::size_t steps) {
  const Eigen::Index n = initial_mean.size();
  Vector params(2 * n);
  params.head(n) = initial_mean;
  params.tail(n).setConstant(inverse_softplus(std::exp(cfg.init_log_std)));

  Rng rng(derive_seed(cfg.seed, "vi/noise"));
  std::normal_distribution<double> normal(0.0, 1.0);
  Adam adam(2 * n, cfg.learning_rate);
  const double prior_var = prior.std * prior.std;
  const double inv_mc = 1.0 / static_cast<double>(cfg.mc_samples_per_step);

  ViResult result;
  result.elbo_trace.reserve(steps);
  Vector noise(n);
  Vector grad(2 * n);
  Vector std_dev(n);
  for (std::size_t step = 0; step < steps; ++step) {
    const auto mean = params.head(n);
    const auto rho = params.tail(n);
    for (Eigen::Index i = 0; i < n; ++i) std_dev[i] = softplus(rho[i]);

    grad.setZero();
    double expected_loglik = 0.0;
    for (std::size_t s = 0; s < cfg.mc_samples_per_step; ++s) {
      for (Eigen::Index i = 0; i < n; ++i) noise[i] = normal(rng);
      const Vector w = mean + std_dev.cwiseProduct(noise);
      const ObjectiveEvaluation e = log_likelihood(w, step);
      expected_loglik += inv_mc * e.value;
      grad.head(n) += inv_mc * e.gradient;
      grad.tail(n) += inv_mc * e.gradient.cwiseProduct(noise);
    }
    const double kl = kl_to_prior(mean, std_dev, prior);
    const double elbo = expected_loglik - kl;
    if (!std::isfinite(elbo) || !grad.allFinite()) {
      throw NumericError("VI: ELBO is not finite at step " + std::to_string(step));
    }
    result.elbo_trace.push_back(elbo);

    // d(-KL)/dmean = -mean / s_p^2 ; d(-KL)/ds = 1/s - s / s_p^2 ; ds/drho = sigmoid(rho)
    grad.head(n) -= mean / prior_var;
    for (Eigen::Index i = 0; i < n; ++i) {
      grad[n + i] = (grad[n + i] + 1.0 / std_dev[i] - std_dev[i] / prior_var) * sigmoid(rho[i]);
    }
    adam.ascend(params, grad);
  }
  result.mean = params.head(n);
  result.std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) result.std[i] = softplus(params[n + i]);
  return result;
}

}  // namespace

void ViConfig::validate() const {
  require(std::isfinite(learning_rate) && learning_rate > 0.0, "vi: learning_rate must be > 0");
  require(mc_samples_per_step >= 1, "vi: mc_samples_per_step must be >= 1");
  require(std::isfinite(init_log_std), "vi: init_log_std must be finite");
}

double softplus(double rho) { return rho > 30.0 ? rho : std::log1p(std::exp(rho)); }

double inverse_softplus(double s) {
  require(s > 0.0, "inverse_softplus needs a positive argument");
  return s > 30.0 ? s : std::log(std::expm1(s));
}

double kl_diagonal_gaussian(const Vector& mean_q, const Vector& std_q, const Vector& mean_p, const Vector& std_p) {
  require(mean_q.size() == std_q.size() && mean_q.size() == mean_p.size() && mean_q.size() == std_p.size(),
          "kl: dimension mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mean_q.size(); ++i) {
    const double diff = mean_q[i] - mean_p[i];
    kl += std::log(std_p[i] / std_q[i]) + (std_q[i] * std_q[i] + diff * diff) / (2.0 * std_p[i] * std_p[i]) - 0.5;
  }
  return kl;
}

double kl_to_prior(const Vector& mean, const Vector& std, const GaussianPrior& prior) {
  const Eigen::Index n = mean.size();
  return kl_diagonal_gaussian(mean, std, Vector::Zero(n), Vector::Constant(n, prior.std));
}

ViResult vi_fit_target(const LogLikelihoodFn& log_likelihood, const Vector& initial_mean, const GaussianPrior& prior,
                       const ViConfig& cfg) {
  cfg.validate();
  prior.validate();
  return run_vi([&](const Vector& w, std::size_t) { return log_likelihood(w); }, initial_mean, prior, cfg,
                cfg.epochs);
}

ViResult vi_fit(const MlpArchitecture& arch, const LabeledDataset& ds, const GaussianPrior& prior,
                const ViConfig& cfg) {
  cfg.validate();
  prior.validate();
  ds.validate();
  require(ds.dim() == arch.input_dim, "vi: dataset dimension does not match the architecture");
  const Vector init = initial_weights(arch, derive_seed(cfg.seed, "vi/init")).values;
  const std::size_t n = ds.size();

  if (cfg.batch_size == 0 || cfg.batch_size >= n) {
    const auto inputs = as_columns(ds.inputs);
    return run_vi(
        [&](const Vector& w, std::size_t) {
          BatchGradient g = batch_cross_entropy_gradient(arch, WeightVector{w}, inputs, ds.labels, false);
          return ObjectiveEvaluation{-g.loss_sum, -g.grad_w};
        },
        init, prior, cfg, cfg.epochs);
  }

  const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(cfg.seed, "vi/shuffle"));
  LabeledDataset batch;
  return run_vi(
      [&](const Vector& w, std::size_t step) {
        const std::size_t slot = step % per_epoch;
        if (slot == 0) std::shuffle(order.begin(), order.end(), shuffle_rng);
        const std::size_t begin = slot * cfg.batch_size;
        const std::size_t count = std::min(cfg.batch_size, n - begin);
        batch = ds.subset(std::span<const std::size_t>(order).subspan(begin, count));
        BatchGradient g = batch_cross_entropy_gradient(arch, WeightVector{w}, as_columns(batch.inputs), batch.labels,
                                                       false);
        const double scale = static_cast<double>(n) / static_cast<double>(count);
        return ObjectiveEvaluation{-scale * g.loss_sum, -scale * g.grad_w};
      },
      init, prior, cfg, cfg.epochs * per_epoch);
}

PosteriorEnsemble vi_sample(const MlpArchitecture& arch, const Vector& mean, const Vector& std, std::size_t n_samples,
                            std::uint64_t seed) {
  require(n_samples >= 1, "vi_sample: n_samples must be >= 1");
  require(mean.size() == std.size() && static_cast<std::size_t>(mean.size()) == arch.parameter_count(),
          "vi_sample: mean/std do not match the architecture");
  Rng rng(derive_seed(seed, "vi/sample"));
  std::normal_distribution<double> normal(0.0, 1.0);
  PosteriorEnsemble ensemble{arch, {}, Provenance::Vi, seed};
  ensemble.members.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    WeightVector w{Vector(mean.size())};
    for (Eigen::Index i = 0; i < mean.size(); ++i) w.values[i] = mean[i] + std[i] * normal(rng);
    ensemble.members.push_back(std::move(w));
  }
  return ensemble;
}

}  // namespace bnnrob
