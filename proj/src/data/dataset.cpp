#include "bnnrob/data.hpp"

#include "bnnrob/binary_io.hpp"
#include "bnnrob/errors.hpp"
#include "bnnrob/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace bnnrob {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // 2051
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // 2049
constexpr std::uint32_t kDatasetFormatVersion = 1;

std::uint32_t read_be_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  binary::read_exact(in, reinterpret_cast<char*>(b), 4, what);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

void write_be_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

std::string hex_magic(std::uint32_t v) {
  std::ostringstream s;
  s << "0x" << std::hex;
  s.width(8);
  s.fill('0');
  s << v;
  return s.str();
}

void expect_idx_magic(std::uint32_t got, std::uint32_t expected, const char* kind) {
  if (got != expected) {
    throw FormatError(std::string("IDX ") + kind + " file: expected magic " + hex_magic(expected) + ", got " +
                      hex_magic(got));
  }
}

std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return in;
}

}  // namespace

std::string to_string(ManifoldTag tag) {
  switch (tag) {
    case ManifoldTag::HalfMoons:
      return "half-moons";
    case ManifoldTag::Image:
      return "image";
    case ManifoldTag::None:
      break;
  }
  return "none";
}

void LabeledDataset::validate() const {
  require(size() >= 1, "dataset is empty");
  require(static_cast<std::size_t>(inputs.rows()) == size(), "dataset: one label per input row is required");
  require(class_count >= 1, "dataset: class_count must be >= 1");
  require(inputs.allFinite(), "dataset: inputs must be finite");
  for (int y : labels) {
    require(y >= 0 && static_cast<std::size_t>(y) < class_count, "dataset: label out of range");
  }
  if (manifold == ManifoldTag::Image) {
    require(inputs.minCoeff() >= 0.0 && inputs.maxCoeff() <= 1.0, "dataset: image features must lie in [0, 1]");
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < size(), "subset: row index out of range");
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
  }
  out.class_count = class_count;
  out.manifold = manifold;
  return out;
}

LabeledDataset LabeledDataset::head(std::size_t n) const {
  std::vector<std::size_t> rows(std::min(n, size()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return subset(rows);
}

bool LabeledDataset::operator==(const LabeledDataset& other) const {
  return labels == other.labels && class_count == other.class_count && manifold == other.manifold &&
         inputs.rows() == other.inputs.rows() && inputs.cols() == other.inputs.cols() &&
         std::equal(inputs.data(), inputs.data() + inputs.size(), other.inputs.data());
}

std::pair<double, double> half_moon_point(int label, double t) {
  if (label == 0) return {std::cos(t), std::sin(t)};
  return {1.0 - std::cos(t), 0.5 - std::sin(t)};
}

LabeledDataset make_half_moons_from_angles(std::span<const double> class0_angles,
                                           std::span<const double> class1_angles, double noise_std,
                                           std::uint64_t seed) {
  require(std::isfinite(noise_std) && noise_std >= 0.0, "half-moons: noise_std must be >= 0");
  const std::size_t n = class0_angles.size() + class1_angles.size();
  require(n >= 2, "half-moons: n must be >= 2");
  LabeledDataset ds;
  ds.inputs.resize(static_cast<Eigen::Index>(n), 2);
  ds.labels.reserve(n);
  ds.class_count = 2;
  ds.manifold = ManifoldTag::HalfMoons;
  std::size_t row = 0;
  for (int label = 0; label < 2; ++label) {
    for (double t : label == 0 ? class0_angles : class1_angles) {
      const auto [px, py] = half_moon_point(label, t);
      ds.inputs(static_cast<Eigen::Index>(row), 0) = px;
      ds.inputs(static_cast<Eigen::Index>(row), 1) = py;
      ds.labels.push_back(label);
      ++row;
    }
  }
  if (noise_std > 0.0) {
    Rng rng(derive_seed(seed, "half-moons/noise"));
    std::normal_distribution<double> noise(0.0, noise_std);
    for (Eigen::Index i = 0; i < ds.inputs.size(); ++i) ds.inputs.data()[i] += noise(rng);
  }
  return ds;
}

LabeledDataset make_half_moons(std::size_t n, double noise_std, std::uint64_t seed) {
  require(n >= 2, "half-moons: n must be >= 2");
  Rng rng(derive_seed(seed, "half-moons/angles"));
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::vector<double> t0((n + 1) / 2);
  std::vector<double> t1(n / 2);
  for (double& t : t0) t = angle(rng);
  for (double& t : t1) t = angle(rng);
  return make_half_moons_from_angles(t0, t1, noise_std, seed);
}

IdxImages read_idx_images(std::istream& in, std::optional<std::size_t> limit) {
  expect_idx_magic(read_be_u32(in, "IDX image header"), kIdxImagesMagic, "image");
  IdxImages images;
  const std::size_t stored = read_be_u32(in, "IDX image header");
  images.rows = read_be_u32(in, "IDX image header");
  images.cols = read_be_u32(in, "IDX image header");
  images.count = limit ? std::min(*limit, stored) : stored;
  images.pixels.resize(images.count * images.rows * images.cols);
  binary::read_exact(in, reinterpret_cast<char*>(images.pixels.data()), images.pixels.size(), "IDX image payload");
  return images;
}

std::vector<std::uint8_t> read_idx_labels(std::istream& in, std::optional<std::size_t> limit) {
  expect_idx_magic(read_be_u32(in, "IDX label header"), kIdxLabelsMagic, "label");
  const std::size_t stored = read_be_u32(in, "IDX label header");
  std::vector<std::uint8_t> labels(limit ? std::min(*limit, stored) : stored);
  binary::read_exact(in, reinterpret_cast<char*>(labels.data()), labels.size(), "IDX label payload");
  return labels;
}

void write_idx_images(std::ostream& out, const IdxImages& images) {
  require(images.pixels.size() == images.count * images.rows * images.cols, "IDX images: payload size mismatch");
  write_be_u32(out, kIdxImagesMagic);
  write_be_u32(out, static_cast<std::uint32_t>(images.count));
  write_be_u32(out, static_cast<std::uint32_t>(images.rows));
  write_be_u32(out, static_cast<std::uint32_t>(images.cols));
  out.write(reinterpret_cast<const char*>(images.pixels.data()), static_cast<std::streamsize>(images.pixels.size()));
}

void write_idx_labels(std::ostream& out, std::span<const std::uint8_t> labels) {
  write_be_u32(out, kIdxLabelsMagic);
  write_be_u32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                        std::optional<std::size_t> limit, bool scale) {
  std::ifstream image_stream = open_binary(images_path);
  std::ifstream label_stream = open_binary(labels_path);
  const IdxImages images = read_idx_images(image_stream, limit);
  const std::vector<std::uint8_t> raw_labels = read_idx_labels(label_stream, limit);
  if (images.count != raw_labels.size()) {
    throw ConsistencyError("IDX image count " + std::to_string(images.count) + " does not match label count " +
                           std::to_string(raw_labels.size()));
  }
  const std::size_t d = images.rows * images.cols;
  LabeledDataset ds;
  ds.inputs.resize(static_cast<Eigen::Index>(images.count), static_cast<Eigen::Index>(d));
  const double factor = scale ? 1.0 / 255.0 : 1.0;
  for (std::size_t i = 0; i < images.pixels.size(); ++i) ds.inputs.data()[i] = images.pixels[i] * factor;
  std::uint8_t max_label = 0;
  for (std::uint8_t y : raw_labels) {
    ds.labels.push_back(y);
    max_label = std::max(max_label, y);
  }
  ds.class_count = std::max<std::size_t>(10, std::size_t{max_label} + 1);
  ds.manifold = scale ? ManifoldTag::Image : ManifoldTag::None;
  return ds;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, "split: train_fraction must lie in (0, 1)");
  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
  require(n_train >= 1 && n_train < n, "split: fraction " + std::to_string(train_fraction) + " of " +
                                           std::to_string(n) + " points leaves an empty split");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  std::shuffle(order.begin(), order.end(), rng);
  const std::span<const std::size_t> all(order);
  return {ds.subset(all.first(n_train)), ds.subset(all.subspan(n_train))};
}

void write_dataset(std::ostream& out, const LabeledDataset& ds) {
  require(ds.class_count <= 256, "dataset cache stores labels as u8");
  binary::write_magic(out, "BNND");
  binary::write_u32(out, kDatasetFormatVersion);
  binary::write_u64(out, ds.size());
  binary::write_u64(out, ds.dim());
  binary::write_u32(out, static_cast<std::uint32_t>(ds.class_count));
  binary::write_u8(out, static_cast<std::uint8_t>(ds.manifold));
  for (Eigen::Index i = 0; i < ds.inputs.size(); ++i) binary::write_f64(out, ds.inputs.data()[i]);
  for (int y : ds.labels) binary::write_u8(out, static_cast<std::uint8_t>(y));
  if (!out) throw IoError("failed writing dataset");
}

LabeledDataset read_dataset(std::istream& in) {
  binary::expect_magic(in, "BNND");
  const std::uint32_t version = binary::read_u32(in, "dataset header");
  if (version != kDatasetFormatVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
  const std::uint64_t n = binary::read_u64(in, "dataset header");
  const std::uint64_t d = binary::read_u64(in, "dataset header");
  LabeledDataset ds;
  ds.class_count = binary::read_u32(in, "dataset header");
  const std::uint8_t tag = binary::read_u8(in, "dataset header");
  if (tag > 2) throw FormatError("unknown manifold tag " + std::to_string(tag));
  ds.manifold = static_cast<ManifoldTag>(tag);
  ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < ds.inputs.size(); ++i) ds.inputs.data()[i] = binary::read_f64(in, "dataset inputs");
  ds.labels.resize(n);
  for (auto& y : ds.labels) y = binary::read_u8(in, "dataset labels");
  ds.validate();
  return ds;
}

}  // namespace bnnrob
