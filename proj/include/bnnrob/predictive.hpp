#pragma once

#include "bnnrob/inference.hpp"
#include "bnnrob/nn.hpp"

#include <span>

namespace bnnrob {

// Monte Carlo posterior predictive: mean of the members' softmax outputs.
Vector predictive(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble, std::span<const double> x);

// k x B, column j is the predictive of input column j.
Matrix predictive_batch(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble,
                        const Eigen::Ref<const Matrix>& inputs);

// Index of the largest entry; ties go to the lowest index.
int argmax(const Eigen::Ref<const Vector>& v);

// Per-column posterior-expected cross-entropy, mean over members.
Vector expected_loss_batch(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble,
                           const Eigen::Ref<const Matrix>& inputs, std::span<const int> labels);

// d x B, mean over members of the per-column input gradients.
Matrix expected_gradient_batch(const MlpArchitecture& arch, const PosteriorEnsemble& ensemble,
                               const Eigen::Ref<const Matrix>& inputs, std::span<const int> labels);

}  // namespace bnnrob
