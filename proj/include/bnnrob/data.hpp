#pragma once

#include "bnnrob/nn.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bnnrob {

enum class ManifoldTag : std::uint8_t { None = 0, HalfMoons = 1, Image = 2 };

std::string to_string(ManifoldTag tag);

struct LabeledDataset {
  InputMatrix inputs;  // N x d
  std::vector<int> labels;
  std::size_t class_count = 0;
  ManifoldTag manifold = ManifoldTag::None;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(inputs.cols()); }
  std::span<const double> point(std::size_t i) const {
    return {inputs.data() + i * dim(), dim()};
  }

  // Finite inputs, labels in range, N >= 1, image features in [0, 1].
  void validate() const;

  LabeledDataset subset(std::span<const std::size_t> rows) const;
  LabeledDataset head(std::size_t n) const;

  bool operator==(const LabeledDataset& other) const;
};

// Class 0 on (cos t, sin t), class 1 on (1 - cos t, 0.5 - sin t), t in [0, pi].
std::pair<double, double> half_moon_point(int label, double t);

// ceil(n/2) class-0 points then floor(n/2) class-1 points, each with isotropic
// Gaussian noise of std `noise_std`.
LabeledDataset make_half_moons(std::size_t n, double noise_std, std::uint64_t seed);

// Same construction with explicit angles per class.
LabeledDataset make_half_moons_from_angles(std::span<const double> class0_angles,
                                           std::span<const double> class1_angles, double noise_std,
                                           std::uint64_t seed);

// Big-endian IDX (MNIST / Fashion-MNIST). `limit` keeps the first `limit` items.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                        std::optional<std::size_t> limit = std::nullopt, bool scale = true);

struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

IdxImages read_idx_images(std::istream& in, std::optional<std::size_t> limit = std::nullopt);
std::vector<std::uint8_t> read_idx_labels(std::istream& in, std::optional<std::size_t> limit = std::nullopt);
void write_idx_images(std::ostream& out, const IdxImages& images);
void write_idx_labels(std::ostream& out, std::span<const std::uint8_t> labels);

// Shuffle with `seed`, then cut at round(N * train_fraction).
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                std::uint64_t seed);

// "BNND" | u32 version | u64 N | u64 d | u32 classes | u8 tag | N*d f64 | N u8 labels.
void write_dataset(std::ostream& out, const LabeledDataset& ds);
LabeledDataset read_dataset(std::istream& in);

}  // namespace bnnrob
