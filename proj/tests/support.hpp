#pragma once

// Independent oracles shared by the unit tests and the acceptance binary.

#include "bnnrob/nn.hpp"
#include "bnnrob/random.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using bnnrob::Activation;
using bnnrob::MlpArchitecture;
using bnnrob::OutputHead;
using bnnrob::WeightVector;

inline long double activate(const MlpArchitecture& a, long double z) {
  switch (a.activation) {
    case Activation::Tanh: return std::tanh(z);
    case Activation::Sigmoid: return 1.0L / (1.0L + std::exp(-z));
    case Activation::LeakyRelu: return z > 0 ? z : static_cast<long double>(a.leaky_slope) * z;
  }
  return z;
}

// Straight-line evaluation with its own offset bookkeeping: per layer, a
// row-major weight block followed by the bias block.
struct NaiveTrace {
  std::vector<long double> logits;
  std::vector<long double> pre;  // all hidden pre-activations, layer by layer
};

inline NaiveTrace naive_forward(const MlpArchitecture& a, const WeightVector& w, const std::vector<double>& x) {
  std::vector<std::size_t> sizes{a.input_dim};
  for (std::size_t h : a.hidden_sizes) sizes.push_back(h);
  sizes.push_back(a.output_dim);
  NaiveTrace t;
  std::vector<long double> cur(x.begin(), x.end());
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l], out = sizes[l + 1];
    std::vector<long double> next(out);
    for (std::size_t r = 0; r < out; ++r) {
      long double z = w.values[static_cast<Eigen::Index>(offset + in * out + r)];
      for (std::size_t c = 0; c < in; ++c) z += w.values[static_cast<Eigen::Index>(offset + r * in + c)] * cur[c];
      next[r] = z;
    }
    offset += in * out + out;
    const bool last = l + 2 == sizes.size();
    if (!last) {
      for (long double& z : next) {
        t.pre.push_back(z);
        z = activate(a, z);
      }
    }
    cur = std::move(next);
  }
  t.logits = cur;
  return t;
}

inline long double naive_cross_entropy(const std::vector<long double>& logits, int y) {
  long double peak = logits[0];
  for (long double z : logits) peak = std::max(peak, z);
  long double sum = 0.0L;
  for (long double z : logits) sum += std::exp(z - peak);
  return peak + std::log(sum) - logits[static_cast<std::size_t>(y)];
}

struct Fixture {
  MlpArchitecture arch;
  WeightVector w;
  std::vector<double> x;
  int y = 0;
  std::vector<double> target;  // identity head only
};

// Small random network with every leaky-ReLU pre-activation at least 1e-3 from
// the kink, so central differences never straddle it.
inline Fixture random_fixture(std::uint64_t seed, Activation activation, OutputHead head) {
  bnnrob::Rng rng(seed);
  std::uniform_int_distribution<int> dim(1, 4), width(1, 6), depth(1, 3), classes(2, 4);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    Fixture f;
    f.arch.input_dim = static_cast<std::size_t>(dim(rng));
    const int layers = depth(rng);
    for (int i = 0; i < layers; ++i) f.arch.hidden_sizes.push_back(static_cast<std::size_t>(width(rng)));
    f.arch.output_dim = static_cast<std::size_t>(head == OutputHead::Softmax ? classes(rng) : dim(rng));
    f.arch.activation = activation;
    f.arch.leaky_slope = 0.1;
    f.arch.head = head;
    f.w.values.resize(static_cast<Eigen::Index>(f.arch.parameter_count()));
    for (Eigen::Index i = 0; i < f.w.values.size(); ++i) f.w.values[i] = 0.8 * normal(rng);
    for (std::size_t i = 0; i < f.arch.input_dim; ++i) f.x.push_back(normal(rng));
    f.y = std::uniform_int_distribution<int>(0, static_cast<int>(f.arch.output_dim) - 1)(rng);
    for (std::size_t i = 0; i < f.arch.output_dim; ++i) f.target.push_back(normal(rng));
    if (activation == Activation::LeakyRelu) {
      bool near_kink = false;
      for (long double z : naive_forward(f.arch, f.w, f.x).pre) near_kink |= std::abs(z) < 1e-3L;
      if (near_kink) continue;
    }
    return f;
  }
}

inline double fixture_loss(const Fixture& f, const WeightVector& w, const std::vector<double>& x) {
  if (f.arch.head == OutputHead::Softmax) return bnnrob::loss(f.arch, w, x, f.y);
  return bnnrob::squared_loss(f.arch, w, x, f.target);
}

inline bnnrob::GradientPair fixture_gradients(const Fixture& f) {
  if (f.arch.head == OutputHead::Softmax) return bnnrob::gradients(f.arch, f.w, f.x, f.y);
  return bnnrob::squared_loss_gradients(f.arch, f.w, f.x, f.target);
}

struct FdReport {
  bool ok = true;
  std::size_t checked = 0;
  std::string first_failure;
};

inline bool close(double analytic, double numeric, double rel, double abs) {
  return std::abs(analytic - numeric) <= abs + rel * std::max(std::abs(analytic), std::abs(numeric));
}

// Every component of grad_w and grad_x against central differences.
inline FdReport finite_difference_check(const Fixture& f, double h = 1e-5, double rel = 1e-5, double abs = 1e-8) {
  FdReport r;
  const bnnrob::GradientPair g = fixture_gradients(f);
  WeightVector w = f.w;
  for (Eigen::Index i = 0; i < w.values.size(); ++i) {
    const double orig = w.values[i];
    w.values[i] = orig + h;
    const double up = fixture_loss(f, w, f.x);
    w.values[i] = orig - h;
    const double down = fixture_loss(f, w, f.x);
    w.values[i] = orig;
    const double fd = (up - down) / (2 * h);
    ++r.checked;
    if (!close(g.grad_w[i], fd, rel, abs) && r.ok) {
      r.ok = false;
      r.first_failure = "grad_w[" + std::to_string(i) + "] analytic " + std::to_string(g.grad_w[i]) + " fd " +
                        std::to_string(fd);
    }
  }
  std::vector<double> x = f.x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = fixture_loss(f, f.w, x);
    x[i] = orig - h;
    const double down = fixture_loss(f, f.w, x);
    x[i] = orig;
    const double fd = (up - down) / (2 * h);
    ++r.checked;
    if (!close(g.grad_x[static_cast<Eigen::Index>(i)], fd, rel, abs) && r.ok) {
      r.ok = false;
      r.first_failure = "grad_x[" + std::to_string(i) + "] analytic " +
                        std::to_string(g.grad_x[static_cast<Eigen::Index>(i)]) + " fd " + std::to_string(fd);
    }
  }
  return r;
}

}  // namespace oracle
