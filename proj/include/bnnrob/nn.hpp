#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace bnnrob {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// One input point per row; the storage of an N x d row-major matrix is
// exactly a column-major d x N matrix, which is what the batch kernels use.
using InputMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { Tanh, Sigmoid, LeakyRelu };
enum class OutputHead { Softmax, Identity };

std::string to_string(Activation a);
std::string to_string(OutputHead h);
Activation parse_activation(const std::string& name);
OutputHead parse_output_head(const std::string& name);

struct MlpArchitecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_sizes;
  std::size_t output_dim = 0;
  Activation activation = Activation::Tanh;
  double leaky_slope = 0.01;
  OutputHead head = OutputHead::Softmax;

  // Throws ContractViolation when a dimension is zero or there is no hidden layer.
  void validate() const;

  // Affine layers, i.e. hidden_sizes.size() + 1.
  std::size_t layer_count() const { return hidden_sizes.size() + 1; }
  std::size_t layer_inputs(std::size_t layer) const;
  std::size_t layer_outputs(std::size_t layer) const;
  std::size_t parameter_count() const;

  // Compact text form, e.g. "2-128-128-2:tanh:softmax" or "2-32-2:leaky-relu(0.01):softmax".
  std::string descriptor() const;
  static MlpArchitecture parse(const std::string& descriptor);

  bool operator==(const MlpArchitecture&) const = default;
};

// Flat index map: layer-major, row-major weights within a layer, then that layer's biases.
class WeightLayout {
 public:
  explicit WeightLayout(const MlpArchitecture& arch);

  std::size_t size() const { return size_; }
  std::size_t layer_count() const { return weight_offsets_.size(); }
  std::size_t rows(std::size_t layer) const { return rows_[layer]; }
  std::size_t cols(std::size_t layer) const { return cols_[layer]; }
  std::size_t weight_offset(std::size_t layer) const { return weight_offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const { return weight_offsets_[layer] + rows_[layer] * cols_[layer]; }

  std::size_t weight_index(std::size_t layer, std::size_t row, std::size_t col) const;
  std::size_t bias_index(std::size_t layer, std::size_t row) const;

 private:
  std::vector<std::size_t> rows_;
  std::vector<std::size_t> cols_;
  std::vector<std::size_t> weight_offsets_;
  std::size_t size_ = 0;
};

struct WeightVector {
  Vector values;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  bool all_finite() const { return values.allFinite(); }
  bool operator==(const WeightVector& other) const;
};

struct LayerParameters {
  Matrix weights;  // outputs x inputs
  Vector bias;
};

std::vector<LayerParameters> unpack(const MlpArchitecture& arch, const WeightVector& w);
WeightVector pack(const MlpArchitecture& arch, const std::vector<LayerParameters>& layers);

// Zero-mean Gaussian with std 1/sqrt(fan-in) for every weight and bias.
WeightVector initial_weights(const MlpArchitecture& arch, std::uint64_t seed);

// "BNNW" | u32 version | u64 length | length little-endian f64.
void write_weights(std::ostream& out, const WeightVector& w);
WeightVector read_weights(std::istream& in);

struct GradientPair {
  Vector grad_w;
  Vector grad_x;
};

// Raw output of the last affine layer; forward() additionally applies the head.
Vector logits(const MlpArchitecture& arch, const WeightVector& w, std::span<const double> x);
Vector forward(const MlpArchitecture& arch, const WeightVector& w, std::span<const double> x);

// Categorical cross-entropy on the logits via log-sum-exp.
double loss(const MlpArchitecture& arch, const WeightVector& w, std::span<const double> x, int label);
GradientPair gradients(const MlpArchitecture& arch, const WeightVector& w, std::span<const double> x, int label);

// 0.5 * ||f(x) - target||^2 on the raw outputs; meant for the identity head.
double squared_loss(const MlpArchitecture& arch, const WeightVector& w, std::span<const double> x,
                    std::span<const double> target);
GradientPair squared_loss_gradients(const MlpArchitecture& arch, const WeightVector& w,
                                    std::span<const double> x, std::span<const double> target);

Vector softmax(const Vector& logits);
double log_sum_exp(const Vector& v);

// Batch kernels. `inputs` is d x B, one point per column.
Matrix batch_logits(const MlpArchitecture& arch, const WeightVector& w,
                    const Eigen::Ref<const Matrix>& inputs);
// Columns are softmax (or raw, for the identity head) outputs.
Matrix batch_forward(const MlpArchitecture& arch, const WeightVector& w,
                     const Eigen::Ref<const Matrix>& inputs);

struct BatchGradient {
  double loss_sum = 0.0;
  Vector grad_w;  // gradient of loss_sum
  Matrix grad_x;  // d x B, column j is the input gradient of point j's own loss; empty unless requested
};

BatchGradient batch_cross_entropy_gradient(const MlpArchitecture& arch, const WeightVector& w,
                                           const Eigen::Ref<const Matrix>& inputs,
                                           std::span<const int> labels, bool want_input_gradient);
double batch_cross_entropy(const MlpArchitecture& arch, const WeightVector& w,
                           const Eigen::Ref<const Matrix>& inputs, std::span<const int> labels);
// Per-column cross-entropy.
Vector batch_cross_entropy_losses(const MlpArchitecture& arch, const WeightVector& w,
                                  const Eigen::Ref<const Matrix>& inputs, std::span<const int> labels);
// d x B input gradients only; skips the weight gradient.
Matrix batch_input_gradient(const MlpArchitecture& arch, const WeightVector& w,
                            const Eigen::Ref<const Matrix>& inputs, std::span<const int> labels);

// Column view over rows [begin, begin + count) of a row-major point matrix.
inline Eigen::Map<const Matrix> as_columns(const InputMatrix& points, std::size_t begin, std::size_t count) {
  return {points.data() + begin * static_cast<std::size_t>(points.cols()), points.cols(),
          static_cast<Eigen::Index>(count)};
}
inline Eigen::Map<const Matrix> as_columns(const InputMatrix& points) {
  return as_columns(points, 0, static_cast<std::size_t>(points.rows()));
}

}  // namespace bnnrob
