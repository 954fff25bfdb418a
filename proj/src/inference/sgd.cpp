#include "bnnrob/inference.hpp"
#include "bnnrob/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bnnrob {

void SgdConfig::validate() const {
  require(std::isfinite(learning_rate) && learning_rate > 0.0, "sgd: learning_rate must be > 0");
  require(batch_size >= 1, "sgd: batch_size must be >= 1");
}

WeightVector sgd_train(const MlpArchitecture& arch, const LabeledDataset& ds, const SgdConfig& cfg) {
  cfg.validate();
  ds.validate();
  require(ds.dim() == arch.input_dim, "sgd: dataset dimension does not match the architecture");
  WeightVector w = initial_weights(arch, derive_seed(cfg.seed, "sgd/init"));
  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, "sgd/shuffle"));
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - begin);
      const LabeledDataset batch = ds.subset(std::span<const std::size_t>(order).subspan(begin, count));
      const BatchGradient g = batch_cross_entropy_gradient(arch, w, as_columns(batch.inputs), batch.labels, false);
      if (!std::isfinite(g.loss_sum)) {
        throw NumericError("sgd: non-finite loss in epoch " + std::to_string(epoch));
      }
      w.values -= (cfg.learning_rate / static_cast<double>(count)) * g.grad_w;
    }
  }
  return w;
}

std::uint64_t deep_ensemble_member_seed(std::uint64_t seed, std::size_t member) {
  return derive_seed(seed, "deep-ensemble/member/" + std::to_string(member));
}

PosteriorEnsemble deep_ensemble_train(const MlpArchitecture& arch, const LabeledDataset& ds, std::size_t n_members,
                                      const SgdConfig& sgd, std::uint64_t seed) {
  require(n_members >= 1, "deep ensemble: n_members must be >= 1");
  PosteriorEnsemble ensemble{arch, {}, Provenance::DeepEnsemble, seed};
  ensemble.members.reserve(n_members);
  for (std::size_t i = 0; i < n_members; ++i) {
    SgdConfig member = sgd;
    member.seed = deep_ensemble_member_seed(seed, i);
    ensemble.members.push_back(sgd_train(arch, ds, member));
  }
  return ensemble;
}

}  // namespace bnnrob
