#include "bnnrob/binary_io.hpp"
#include "bnnrob/inference.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace bnnrob {

namespace {
constexpr std::uint32_t kEnsembleFormatVersion = 1;
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Hmc:
      return "hmc";
    case Provenance::Vi:
      return "vi";
    case Provenance::Sgd:
      return "sgd";
    case Provenance::DeepEnsemble:
      return "deep-ensemble";
  }
  return "?";
}

Provenance parse_provenance(const std::string& name) {
  if (name == "hmc") return Provenance::Hmc;
  if (name == "vi") return Provenance::Vi;
  if (name == "sgd") return Provenance::Sgd;
  if (name == "deep-ensemble" || name == "ensemble") return Provenance::DeepEnsemble;
  throw ContractViolation("unknown trainer '" + name + "'");
}

void GaussianPrior::validate() const {
  require(std::isfinite(std) && std > 0.0, "prior std must be finite and > 0");
}

double GaussianPrior::log_density(const Vector& w) const {
  const double n = static_cast<double>(w.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi * std * std) - 0.5 * w.squaredNorm() / (std * std);
}

void PosteriorEnsemble::validate() const {
  require(!members.empty(), "ensemble is empty");
  const std::size_t n_w = arch.parameter_count();
  for (std::size_t i = 0; i < members.size(); ++i) {
    require(members[i].size() == n_w, "ensemble member " + std::to_string(i) + " has the wrong length");
    require(members[i].all_finite(), "ensemble member " + std::to_string(i) + " has non-finite weights");
  }
}

PosteriorEnsemble PosteriorEnsemble::prefix(std::size_t count) const {
  require(count >= 1 && count <= members.size(),
          "prefix of " + std::to_string(count) + " members requested from an ensemble of " +
              std::to_string(members.size()));
  PosteriorEnsemble out{arch, {}, provenance, seed};
  out.members.assign(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(count));
  return out;
}

bool PosteriorEnsemble::operator==(const PosteriorEnsemble& other) const {
  return arch == other.arch && members == other.members && provenance == other.provenance && seed == other.seed;
}

void write_ensemble(std::ostream& out, const PosteriorEnsemble& ensemble) {
  ensemble.validate();
  binary::write_magic(out, "BNNE");
  binary::write_u32(out, kEnsembleFormatVersion);
  binary::write_u8(out, static_cast<std::uint8_t>(ensemble.provenance));
  binary::write_u64(out, ensemble.seed);
  binary::write_u64(out, ensemble.members.size());
  const std::string descriptor = ensemble.arch.descriptor();
  binary::write_u32(out, static_cast<std::uint32_t>(descriptor.size()));
  binary::write_magic(out, descriptor);
  for (const auto& m : ensemble.members) {
    for (Eigen::Index i = 0; i < m.values.size(); ++i) binary::write_f64(out, m.values[i]);
  }
  if (!out) throw IoError("failed writing ensemble");
}

PosteriorEnsemble read_ensemble(std::istream& in) {
  binary::expect_magic(in, "BNNE");
  const std::uint32_t version = binary::read_u32(in, "ensemble header");
  if (version != kEnsembleFormatVersion) throw FormatError("unsupported ensemble version " + std::to_string(version));
  PosteriorEnsemble ensemble;
  const std::uint8_t provenance = binary::read_u8(in, "ensemble header");
  if (provenance > 3) throw FormatError("unknown provenance byte " + std::to_string(provenance));
  ensemble.provenance = static_cast<Provenance>(provenance);
  ensemble.seed = binary::read_u64(in, "ensemble header");
  const std::uint64_t count = binary::read_u64(in, "ensemble header");
  const std::uint32_t descriptor_length = binary::read_u32(in, "ensemble header");
  std::string descriptor(descriptor_length, '\0');
  binary::read_exact(in, descriptor.data(), descriptor.size(), "architecture descriptor");
  ensemble.arch = MlpArchitecture::parse(descriptor);
  const auto n_w = static_cast<Eigen::Index>(ensemble.arch.parameter_count());
  ensemble.members.resize(count);
  for (auto& m : ensemble.members) {
    m.values.resize(n_w);
    for (Eigen::Index i = 0; i < n_w; ++i) m.values[i] = binary::read_f64(in, "ensemble payload");
  }
  ensemble.validate();
  return ensemble;
}

void save_ensemble(const std::string& path, const PosteriorEnsemble& ensemble) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_ensemble(out, ensemble);
}

PosteriorEnsemble load_ensemble(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_ensemble(in);
}

double log_posterior(const MlpArchitecture& arch, const WeightVector& w, const LabeledDataset& ds,
                     const GaussianPrior& prior) {
  prior.validate();
  const double value = -batch_cross_entropy(arch, w, as_columns(ds.inputs), ds.labels) + prior.log_density(w.values);
  if (!std::isfinite(value)) throw NumericError("log posterior is not finite");
  return value;
}

ObjectiveEvaluation log_posterior_with_gradient(const MlpArchitecture& arch, const WeightVector& w,
                                                const LabeledDataset& ds, const GaussianPrior& prior) {
  prior.validate();
  BatchGradient g = batch_cross_entropy_gradient(arch, w, as_columns(ds.inputs), ds.labels, false);
  ObjectiveEvaluation out;
  out.value = -g.loss_sum + prior.log_density(w.values);
  out.gradient = -g.grad_w + prior.log_density_gradient(w.values);
  if (!std::isfinite(out.value)) throw NumericError("log posterior is not finite");
  return out;
}

}  // namespace bnnrob
