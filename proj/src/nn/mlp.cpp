#include "bnnrob/nn.hpp"

#include "bnnrob/binary_io.hpp"
#include "bnnrob/errors.hpp"
#include "bnnrob/random.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace bnnrob {

namespace {

#ifdef __GLIBC__
// Per-block temporaries of wide layers exceed the default mmap threshold, so
// every gradient call would map and unmap them. Keep them on the heap instead.
const bool kAllocatorTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  return true;
}();
#endif

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutableRowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

constexpr std::uint32_t kWeightFormatVersion = 1;
constexpr Eigen::Index kBlockColumns = 256;

void check_weights(const MlpArchitecture& arch, const WeightVector& w) {
  if (w.size() != arch.parameter_count()) {
    throw ContractViolation("weight vector has length " + std::to_string(w.size()) + ", architecture " +
                            arch.descriptor() + " needs " + std::to_string(arch.parameter_count()));
  }
}

void check_input(const MlpArchitecture& arch, Eigen::Index rows) {
  if (static_cast<std::size_t>(rows) != arch.input_dim) {
    throw ContractViolation("input has dimension " + std::to_string(rows) + ", expected " +
                            std::to_string(arch.input_dim));
  }
}

void check_label(const MlpArchitecture& arch, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= arch.output_dim) {
    throw ContractViolation("label " + std::to_string(label) + " outside [0, " + std::to_string(arch.output_dim) +
                            ")");
  }
}

void activate(const MlpArchitecture& arch, Matrix& z) {
  switch (arch.activation) {
    case Activation::Tanh:
      z = z.array().tanh();
      break;
    case Activation::Sigmoid:
      z = (1.0 + (-z.array()).exp()).inverse();
      break;
    case Activation::LeakyRelu: {
      const double slope = arch.leaky_slope;
      z = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
      break;
    }
  }
}

// Derivative of the activation, written in terms of the pre-activation z and
// post-activation h of the same unit. At the leaky-ReLU kink the negative-slope
// branch is used.
Matrix activation_derivative(const MlpArchitecture& arch, const Matrix& z, const Matrix& h) {
  switch (arch.activation) {
    case Activation::Tanh:
      return (1.0 - h.array().square()).matrix();
    case Activation::Sigmoid:
      return (h.array() * (1.0 - h.array())).matrix();
    case Activation::LeakyRelu: {
      const double slope = arch.leaky_slope;
      return z.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    }
  }
  return {};
}

struct Trace {
  std::vector<Matrix> pre;   // hidden pre-activations
  std::vector<Matrix> post;  // hidden activations
};

Matrix run_forward(const MlpArchitecture& arch, const WeightLayout& layout, const WeightVector& w,
                   const Eigen::Ref<const Matrix>& inputs, Trace* trace) {
  const std::size_t layers = layout.layer_count();
  Matrix current;
  for (std::size_t l = 0; l < layers; ++l) {
    RowMajorMap weights(w.values.data() + layout.weight_offset(l), static_cast<Eigen::Index>(layout.rows(l)),
                        static_cast<Eigen::Index>(layout.cols(l)));
    Eigen::Map<const Vector> bias(w.values.data() + layout.bias_offset(l), static_cast<Eigen::Index>(layout.rows(l)));
    Matrix z = (l == 0) ? Matrix(weights * inputs) : Matrix(weights * current);
    z.colwise() += bias;
    if (!z.allFinite()) {
      throw NumericError("non-finite pre-activation in layer " + std::to_string(l + 1));
    }
    if (l + 1 == layers) return z;
    if (trace != nullptr) trace->pre.push_back(z);
    activate(arch, z);
    if (trace != nullptr) trace->post.push_back(z);
    current = std::move(z);
  }
  return current;
}

// Reverse pass from dL/dlogits (k x B). Accumulates the weight gradient of the
// summed loss and, optionally, per-column input gradients.
void run_backward(const MlpArchitecture& arch, const WeightLayout& layout, const WeightVector& w,
                  const Eigen::Ref<const Matrix>& inputs, const Trace& trace, Matrix delta, Vector* grad_w,
                  Matrix* grad_x) {
  if (grad_w != nullptr) grad_w->setZero(static_cast<Eigen::Index>(layout.size()));
  for (std::size_t l = layout.layer_count(); l-- > 0;) {
    const auto rows = static_cast<Eigen::Index>(layout.rows(l));
    const auto cols = static_cast<Eigen::Index>(layout.cols(l));
    if (grad_w != nullptr) {
      MutableRowMajorMap grad_weights(grad_w->data() + layout.weight_offset(l), rows, cols);
      Eigen::Map<Vector> grad_bias(grad_w->data() + layout.bias_offset(l), rows);
      if (l == 0) {
        grad_weights.noalias() = delta * inputs.transpose();
      } else {
        grad_weights.noalias() = delta * trace.post[l - 1].transpose();
      }
      grad_bias = delta.rowwise().sum();
    }

    if (l == 0 && grad_x == nullptr) break;
    RowMajorMap weights(w.values.data() + layout.weight_offset(l), rows, cols);
    Matrix upstream = weights.transpose() * delta;
    if (l == 0) {
      *grad_x = std::move(upstream);
    } else {
      delta = upstream.cwiseProduct(activation_derivative(arch, trace.pre[l - 1], trace.post[l - 1]));
    }
  }
  if ((grad_w != nullptr && !grad_w->allFinite()) || (grad_x != nullptr && !grad_x->allFinite())) {
    throw NumericError("non-finite gradient");
  }
}

Eigen::Map<const Matrix> column(std::span<const double> x) {
  return {x.data(), static_cast<Eigen::Index>(x.size()), 1};
}

// Cross-entropy losses and dL/dlogits for each column.
double cross_entropy_delta(const Matrix& z, std::span<const int> labels, Matrix& delta) {
  delta.resize(z.rows(), z.cols());
  double total = 0.0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double peak = z.col(j).maxCoeff();
    const Eigen::ArrayXd shifted = (z.col(j).array() - peak).exp();
    const double sum = shifted.sum();
    const int y = labels[static_cast<std::size_t>(j)];
    total += peak + std::log(sum) - z(y, j);
    delta.col(j) = (shifted / sum).matrix();
    delta(y, j) -= 1.0;
  }
  return total;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::LeakyRelu:
      return "leaky-relu";
  }
  return "?";
}

std::string to_string(OutputHead h) { return h == OutputHead::Softmax ? "softmax" : "identity"; }

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "leaky-relu" || name == "leaky_relu" || name == "lrelu") return Activation::LeakyRelu;
  throw ContractViolation("unknown activation '" + name + "'");
}

OutputHead parse_output_head(const std::string& name) {
  if (name == "softmax") return OutputHead::Softmax;
  if (name == "identity") return OutputHead::Identity;
  throw ContractViolation("unknown output head '" + name + "'");
}

void MlpArchitecture::validate() const {
  require(input_dim >= 1, "architecture: input_dim must be >= 1");
  require(output_dim >= 1, "architecture: output_dim must be >= 1");
  require(!hidden_sizes.empty(), "architecture: at least one hidden layer is required");
  for (std::size_t h : hidden_sizes) require(h >= 1, "architecture: hidden sizes must be >= 1");
  require(std::isfinite(leaky_slope), "architecture: leaky slope must be finite");
}

std::size_t MlpArchitecture::layer_inputs(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_sizes[layer - 1];
}

std::size_t MlpArchitecture::layer_outputs(std::size_t layer) const {
  return layer == hidden_sizes.size() ? output_dim : hidden_sizes[layer];
}

std::size_t MlpArchitecture::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer_count(); ++l) n += (layer_inputs(l) + 1) * layer_outputs(l);
  return n;
}

std::string MlpArchitecture::descriptor() const {
  std::ostringstream s;
  s << input_dim;
  for (std::size_t h : hidden_sizes) s << '-' << h;
  s << '-' << output_dim << ':' << to_string(activation);
  if (activation == Activation::LeakyRelu) s << '(' << leaky_slope << ')';
  s << ':' << to_string(head);
  return s.str();
}

MlpArchitecture MlpArchitecture::parse(const std::string& descriptor) {
  MlpArchitecture arch;
  const auto first = descriptor.find(':');
  const std::string sizes = descriptor.substr(0, first);
  std::vector<std::size_t> dims;
  std::istringstream in(sizes);
  std::string token;
  while (std::getline(in, token, '-')) {
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(token, &pos);
      if (pos != token.size() || v < 1) throw ContractViolation("");
      dims.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ContractViolation("bad architecture descriptor '" + descriptor + "'");
    }
  }
  if (dims.size() < 3) throw ContractViolation("architecture descriptor '" + descriptor + "' needs a hidden layer");
  arch.input_dim = dims.front();
  arch.output_dim = dims.back();
  arch.hidden_sizes.assign(dims.begin() + 1, dims.end() - 1);

  if (first != std::string::npos) {
    std::string rest = descriptor.substr(first + 1);
    const auto second = rest.find(':');
    std::string act = rest.substr(0, second);
    if (const auto paren = act.find('('); paren != std::string::npos) {
      const auto close = act.find(')', paren);
      if (close == std::string::npos) throw ContractViolation("bad activation in '" + descriptor + "'");
      arch.leaky_slope = std::stod(act.substr(paren + 1, close - paren - 1));
      act = act.substr(0, paren);
    }
    arch.activation = parse_activation(act);
    if (second != std::string::npos) arch.head = parse_output_head(rest.substr(second + 1));
  }
  arch.validate();
  return arch;
}

WeightLayout::WeightLayout(const MlpArchitecture& arch) {
  arch.validate();
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    rows_.push_back(arch.layer_outputs(l));
    cols_.push_back(arch.layer_inputs(l));
    weight_offsets_.push_back(size_);
    size_ += rows_.back() * (cols_.back() + 1);
  }
}

std::size_t WeightLayout::weight_index(std::size_t layer, std::size_t row, std::size_t col) const {
  require(layer < layer_count() && row < rows_[layer] && col < cols_[layer], "weight index out of range");
  return weight_offsets_[layer] + row * cols_[layer] + col;
}

std::size_t WeightLayout::bias_index(std::size_t layer, std::size_t row) const {
  require(layer < layer_count() && row < rows_[layer], "bias index out of range");
  return bias_offset(layer) + row;
}

bool WeightVector::operator==(const WeightVector& other) const {
  return values.size() == other.values.size() &&
         std::equal(values.data(), values.data() + values.size(), other.values.data());
}

std::vector<LayerParameters> unpack(const MlpArchitecture& arch, const WeightVector& w) {
  check_weights(arch, w);
  const WeightLayout layout(arch);
  std::vector<LayerParameters> layers;
  for (std::size_t l = 0; l < layout.layer_count(); ++l) {
    const auto rows = static_cast<Eigen::Index>(layout.rows(l));
    const auto cols = static_cast<Eigen::Index>(layout.cols(l));
    LayerParameters p;
    p.weights = RowMajorMap(w.values.data() + layout.weight_offset(l), rows, cols);
    p.bias = Eigen::Map<const Vector>(w.values.data() + layout.bias_offset(l), rows);
    layers.push_back(std::move(p));
  }
  return layers;
}

WeightVector pack(const MlpArchitecture& arch, const std::vector<LayerParameters>& layers) {
  const WeightLayout layout(arch);
  require(layers.size() == layout.layer_count(), "pack: wrong number of layers");
  WeightVector w{Vector::Zero(static_cast<Eigen::Index>(layout.size()))};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto rows = static_cast<Eigen::Index>(layout.rows(l));
    const auto cols = static_cast<Eigen::Index>(layout.cols(l));
    require(layers[l].weights.rows() == rows && layers[l].weights.cols() == cols && layers[l].bias.size() == rows,
            "pack: layer " + std::to_string(l) + " has the wrong shape");
    MutableRowMajorMap(w.values.data() + layout.weight_offset(l), rows, cols) = layers[l].weights;
    Eigen::Map<Vector>(w.values.data() + layout.bias_offset(l), rows) = layers[l].bias;
  }
  return w;
}

WeightVector initial_weights(const MlpArchitecture& arch, std::uint64_t seed) {
  const WeightLayout layout(arch);
  Rng rng(seed);
  WeightVector w{Vector(static_cast<Eigen::Index>(layout.size()))};
  for (std::size_t l = 0; l < layout.layer_count(); ++l) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(layout.cols(l))));
    const std::size_t end = layout.bias_offset(l) + layout.rows(l);
    for (std::size_t i = layout.weight_offset(l); i < end; ++i) w.values[static_cast<Eigen::Index>(i)] = normal(rng);
  }
  return w;
}

void write_weights(std::ostream& out, const WeightVector& w) {
  binary::write_magic(out, "BNNW");
  binary::write_u32(out, kWeightFormatVersion);
  binary::write_u64(out, w.size());
  for (Eigen::Index i = 0; i < w.values.size(); ++i) binary::write_f64(out, w.values[i]);
  if (!out) throw IoError("failed writing weight vector");
}

WeightVector read_weights(std::istream& in) {
  binary::expect_magic(in, "BNNW");
  const std::uint32_t version = binary::read_u32(in, "weight header");
  if (version != kWeightFormatVersion) {
    throw FormatError("unsupported weight format version " + std::to_string(version));
  }
  const std::uint64_t n = binary::read_u64(in, "weight header");
  WeightVector w{Vector(static_cast<Eigen::Index>(n))};
  for (std::uint64_t i = 0; i < n; ++i) w.values[static_cast<Eigen::Index>(i)] = binary::read_f64(in, "weights");
  if (!w.all_finite()) throw FormatError("weight payload contains non-finite values");
  return w;
}

Vector softmax(const Vector& z) {
  const Eigen::ArrayXd e = (z.array() - z.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

double log_sum_exp(const Vector& v) {
  const double peak = v.maxCoeff();
  return peak + std::log((v.array() - peak).exp().sum());
}

Matrix batch_logits(const MlpArchitecture& arch, const WeightVector& w, const Eigen::Ref<const Matrix>& inputs) {
  check_weights(arch, w);
  check_input(arch, inputs.rows());
  const WeightLayout layout(arch);
  Matrix out(static_cast<Eigen::Index>(arch.output_dim), inputs.cols());
  for (Eigen::Index begin = 0; begin < inputs.cols(); begin += kBlockColumns) {
    const Eigen::Index count = std::min(kBlockColumns, inputs.cols() - begin);
    out.middleCols(begin, count) = run_forward(arch, layout, w, inputs.middleCols(begin, count), nullptr);
  }
  return out;
}

Matrix batch_forward(const MlpArchitecture& arch, const WeightVector& w, const Eigen::Ref<const Matrix>& inputs) {
  Matrix z = batch_logits(arch, w, inputs);
  if (arch.head == OutputHead::Softmax) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) z.col(j) = softmax(z.col(j));
  }
  return z;
}

Vector logits(const MlpArchitecture& arch, const WeightVector& w, std::span<const double> x) {
  return batch_logits(arch, w, column(x)).col(0);
}

Vector forward(const MlpArchitecture& arch, const WeightVector& w, std::span<const double> x) {
  return batch_forward(arch, w, column(x)).col(0);
}

double loss(const MlpArchitecture& arch, const WeightVector& w, std::span<const double> x, int label) {
  check_label(arch, label);
  const Vector z = logits(arch, w, x);
  return log_sum_exp(z) - z[label];
}

BatchGradient batch_cross_entropy_gradient(const MlpArchitecture& arch, const WeightVector& w,
                                           const Eigen::Ref<const Matrix>& inputs, std::span<const int> labels,
                                           bool want_input_gradient) {
  check_weights(arch, w);
  check_input(arch, inputs.rows());
  require(labels.size() == static_cast<std::size_t>(inputs.cols()), "one label per input column is required");
  for (int y : labels) check_label(arch, y);
  const WeightLayout layout(arch);
  BatchGradient out;
  out.grad_w.setZero(static_cast<Eigen::Index>(layout.size()));
  if (want_input_gradient) out.grad_x.resize(inputs.rows(), inputs.cols());
  Vector block_grad_w;
  Matrix block_grad_x;
  Matrix delta;
  // Column blocks keep the per-layer temporaries cache sized.
  for (Eigen::Index begin = 0; begin < inputs.cols(); begin += kBlockColumns) {
    const Eigen::Index count = std::min(kBlockColumns, inputs.cols() - begin);
    const auto block = inputs.middleCols(begin, count);
    Trace trace;
    const Matrix z = run_forward(arch, layout, w, block, &trace);
    out.loss_sum += cross_entropy_delta(z, labels.subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(count)), delta);
    run_backward(arch, layout, w, block, trace, std::move(delta), &block_grad_w,
                 want_input_gradient ? &block_grad_x : nullptr);
    out.grad_w += block_grad_w;
    if (want_input_gradient) out.grad_x.middleCols(begin, count) = block_grad_x;
  }
  return out;
}

Matrix batch_input_gradient(const MlpArchitecture& arch, const WeightVector& w, const Eigen::Ref<const Matrix>& inputs,
                            std::span<const int> labels) {
  check_weights(arch, w);
  check_input(arch, inputs.rows());
  require(labels.size() == static_cast<std::size_t>(inputs.cols()), "one label per input column is required");
  for (int y : labels) check_label(arch, y);
  const WeightLayout layout(arch);
  Matrix grad_x(inputs.rows(), inputs.cols());
  Matrix block_grad_x;
  Matrix delta;
  for (Eigen::Index begin = 0; begin < inputs.cols(); begin += kBlockColumns) {
    const Eigen::Index count = std::min(kBlockColumns, inputs.cols() - begin);
    const auto block = inputs.middleCols(begin, count);
    Trace trace;
    const Matrix z = run_forward(arch, layout, w, block, &trace);
    cross_entropy_delta(z, labels.subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(count)), delta);
    run_backward(arch, layout, w, block, trace, std::move(delta), nullptr, &block_grad_x);
    grad_x.middleCols(begin, count) = block_grad_x;
  }
  return grad_x;
}

Vector batch_cross_entropy_losses(const MlpArchitecture& arch, const WeightVector& w,
                                  const Eigen::Ref<const Matrix>& inputs, std::span<const int> labels) {
  require(labels.size() == static_cast<std::size_t>(inputs.cols()), "one label per input column is required");
  for (int y : labels) check_label(arch, y);
  const Matrix z = batch_logits(arch, w, inputs);
  Vector out(z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const Vector col = z.col(j);
    out[j] = log_sum_exp(col) - col[labels[static_cast<std::size_t>(j)]];
  }
  return out;
}

double batch_cross_entropy(const MlpArchitecture& arch, const WeightVector& w, const Eigen::Ref<const Matrix>& inputs,
                           std::span<const int> labels) {
  require(labels.size() == static_cast<std::size_t>(inputs.cols()), "one label per input column is required");
  for (int y : labels) check_label(arch, y);
  const Matrix z = batch_logits(arch, w, inputs);
  Matrix delta;
  return cross_entropy_delta(z, labels, delta);
}

GradientPair gradients(const MlpArchitecture& arch, const WeightVector& w, std::span<const double> x, int label) {
  const int labels[1] = {label};
  BatchGradient g = batch_cross_entropy_gradient(arch, w, column(x), labels, true);
  return {std::move(g.grad_w), g.grad_x.col(0)};
}

double squared_loss(const MlpArchitecture& arch, const WeightVector& w, std::span<const double> x,
                    std::span<const double> target) {
  require(arch.head == OutputHead::Identity, "squared loss needs the identity head");
  require(target.size() == arch.output_dim, "target length must equal output_dim");
  const Vector z = logits(arch, w, x);
  return 0.5 * (z - Eigen::Map<const Vector>(target.data(), static_cast<Eigen::Index>(target.size()))).squaredNorm();
}

GradientPair squared_loss_gradients(const MlpArchitecture& arch, const WeightVector& w, std::span<const double> x,
                                    std::span<const double> target) {
  require(arch.head == OutputHead::Identity, "squared loss needs the identity head");
  require(target.size() == arch.output_dim, "target length must equal output_dim");
  check_weights(arch, w);
  check_input(arch, static_cast<Eigen::Index>(x.size()));
  const WeightLayout layout(arch);
  Trace trace;
  const auto input = column(x);
  const Matrix z = run_forward(arch, layout, w, input, &trace);
  Matrix delta = z - Eigen::Map<const Vector>(target.data(), static_cast<Eigen::Index>(target.size()));
  GradientPair out;
  Matrix grad_x;
  run_backward(arch, layout, w, input, trace, std::move(delta), &out.grad_w, &grad_x);
  out.grad_x = grad_x.col(0);
  return out;
}

}  // namespace bnnrob
