#include "bnnrob/predictive.hpp"

#include "bnnrob/errors.hpp"

#include <string>

namespace bnnrob {

namespace {

void check_ensemble(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble) {
  require(!ensemble.members.empty(), "ensemble has no members");
  require(ensemble.arch == arch, "ensemble architecture does not match");
}

[[noreturn]] void rethrow_for_member(std::size_t i, const NumericError& e) {
  throw NumericError("ensemble member " + std::to_string(i) + ": " + e.what());
}

}  // namespace

Vector predictive(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, std::span<const double> x) {
  require(x.size() == arch.input_dim, "predictive: input dimension mismatch");
  const Eigen::Map<const Matrix> column(x.data(), static_cast<Eigen::Index>(x.size()), 1);
  return predictive_batch(arch, ensemble, column).col(0);
}

Matrix predictive_batch(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble,
                        const Eigen::Ref<const Matrix>& inputs) {
  check_ensemble(arch, ensemble);
  Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(arch.output_dim), inputs.cols());
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    try {
      sum += batch_forward(arch, ensemble.members[i], inputs);
    } catch (const NumericError& e) {
      rethrow_for_member(i, e);
    }
  }
  return sum / static_cast<double>(ensemble.members.size());
}

int argmax(const Eigen::Ref<const Vector>& v) {
  require(v.size() > 0, "argmax of an empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<int>(best);
}

Vector expected_loss_batch(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble,
                           const Eigen::Ref<const Matrix>& inputs, std::span<const int> labels) {
  check_ensemble(arch, ensemble);
  require(labels.size() == static_cast<std::size_t>(inputs.cols()), "expected loss: label count mismatch");
  Vector sum = Vector::Zero(inputs.cols());
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    try {
      sum += batch_cross_entropy_losses(arch, ensemble.members[i], inputs, labels);
    } catch (const NumericError& e) {
      rethrow_for_member(i, e);
    }
  }
  return sum / static_cast<double>(ensemble.members.size());
}

Matrix expected_gradient_batch(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble,
                               const Eigen::Ref<const Matrix>& inputs, std::span<const int> labels) {
  check_ensemble(arch, ensemble);
  Matrix sum = Matrix::Zero(inputs.rows(), inputs.cols());
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    try {
      sum += batch_input_gradient(arch, ensemble.members[i], inputs, labels);
    } catch (const NumericError& e) {
      rethrow_for_member(i, e);
    }
  }
  return sum / static_cast<double>(ensemble.members.size());
}

}  // namespace bnnrob
