#include "bnnrob/experiment.hpp"

#include "bnnrob/random.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace bnnrob {

namespace {

const std::array<std::string, 4> kTrainers{"hmc", "vi", "sgd", "deep-ensemble"};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw std::invalid_argument("expected a number, got '" + v + "'");
  }
  return out;
}

std::string fmt(double v) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::string fmt(std::size_t v) { return std::to_string(v); }

std::vector<std::size_t> to_sizes(const std::string& v) {
  std::vector<std::size_t> out;
  for (const std::string& item : split_list(v)) out.push_back(to_size(item));
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& items, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += f(items[i]);
  }
  return out;
}

struct Field {
  const char* key;
  void (*set)(ExperimentConfig&, const std::string&);
  std::string (*get)(const ExperimentConfig&);
};

#define BNNROB_SIZE_FIELD(name, member)                                          \
  Field {                                                                        \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = to_size(v); }, \
        [](const ExperimentConfig& c) { return fmt(c.member); }                  \
  }
#define BNNROB_REAL_FIELD(name, member)                                            \
  Field {                                                                          \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = to_double(v); }, \
        [](const ExperimentConfig& c) { return fmt(c.member); }                    \
  }
#define BNNROB_TEXT_FIELD(name, member)                                  \
  Field {                                                                \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = v; }, \
        [](const ExperimentConfig& c) { return c.member; }               \
  }
#define BNNROB_SIZES_FIELD(name, member)                                            \
  Field {                                                                           \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = to_sizes(v); }, \
        [](const ExperimentConfig& c) { return join(c.member, [](std::size_t x) { return fmt(x); }); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      Field{"experiment",
            [](ExperimentConfig& c, const std::string& v) { c.experiment = parse_experiment_kind(v); },
            [](const ExperimentConfig& c) { return to_string(c.experiment); }},
      Field{"seed",
            [](ExperimentConfig& c, const std::string& v) {
              c.seed = to_u64(v);
              c.seed_set = true;
            },
            [](const ExperimentConfig& c) { return c.seed_set ? std::to_string(c.seed) : std::string(); }},
      BNNROB_TEXT_FIELD("output_dir", output_dir),
      BNNROB_TEXT_FIELD("model_dir", model_dir),
      BNNROB_SIZE_FIELD("workers", workers),
      BNNROB_TEXT_FIELD("dataset", dataset),
      BNNROB_SIZE_FIELD("train_n", train_n),
      BNNROB_SIZE_FIELD("test_n", test_n),
      BNNROB_REAL_FIELD("noise", noise),
      BNNROB_TEXT_FIELD("mnist_dir", mnist_dir),
      BNNROB_SIZE_FIELD("mnist_train_limit", mnist_train_limit),
      BNNROB_SIZE_FIELD("mnist_test_limit", mnist_test_limit),
      BNNROB_SIZES_FIELD("widths", widths),
      BNNROB_SIZE_FIELD("depth", depth),
      Field{"activation", [](ExperimentConfig& c, const std::string& v) { c.activation = parse_activation(v); },
            [](const ExperimentConfig& c) { return to_string(c.activation); }},
      BNNROB_REAL_FIELD("leaky_slope", leaky_slope),
      BNNROB_SIZES_FIELD("train_sizes", train_sizes),
      Field{"trainers",
            [](ExperimentConfig& c, const std::string& v) {
              const auto names = split_list(v);
              for (const std::string& n : names) {
                if (std::find(kTrainers.begin(), kTrainers.end(), n) == kTrainers.end()) {
                  throw std::invalid_argument("unknown trainer '" + n + "' (expected hmc, vi, sgd or deep-ensemble)");
                }
              }
              c.trainers = names;
            },
            [](const ExperimentConfig& c) { return join(c.trainers, [](const std::string& s) { return s; }); }},
      BNNROB_REAL_FIELD("prior_std", prior.std),
      BNNROB_REAL_FIELD("hmc_step_size", hmc.step_size),
      BNNROB_SIZE_FIELD("hmc_leapfrog_steps", hmc.leapfrog_steps),
      BNNROB_SIZE_FIELD("hmc_warmup", hmc.warmup),
      BNNROB_SIZE_FIELD("hmc_samples", hmc.samples),
      BNNROB_SIZE_FIELD("hmc_thin", hmc.thin),
      BNNROB_SIZE_FIELD("hmc_chains", hmc.chains),
      BNNROB_SIZE_FIELD("vi_epochs", vi.epochs),
      BNNROB_REAL_FIELD("vi_learning_rate", vi.learning_rate),
      BNNROB_SIZE_FIELD("vi_mc_samples", vi.mc_samples_per_step),
      BNNROB_REAL_FIELD("vi_init_log_std", vi.init_log_std),
      BNNROB_SIZE_FIELD("vi_batch_size", vi.batch_size),
      BNNROB_SIZE_FIELD("vi_samples", vi_samples),
      BNNROB_SIZE_FIELD("sgd_epochs", sgd.epochs),
      BNNROB_REAL_FIELD("sgd_learning_rate", sgd.learning_rate),
      BNNROB_SIZE_FIELD("sgd_batch_size", sgd.batch_size),
      BNNROB_SIZE_FIELD("ensemble_members", ensemble_members),
      Field{"attacks",
            [](ExperimentConfig& c, const std::string& v) {
              std::vector<AttackKind> kinds;
              for (const std::string& n : split_list(v)) kinds.push_back(parse_attack_kind(n));
              c.attacks = kinds;
            },
            [](const ExperimentConfig& c) {
              return join(c.attacks, [](AttackKind k) { return to_string(k); });
            }},
      BNNROB_REAL_FIELD("eps", attack.epsilon),
      BNNROB_REAL_FIELD("eps_hmc", eps_hmc),
      BNNROB_REAL_FIELD("eps_vi", eps_vi),
      BNNROB_REAL_FIELD("eps_sgd", eps_sgd),
      BNNROB_SIZE_FIELD("pgd_iterations", attack.pgd_iterations),
      BNNROB_SIZE_FIELD("pgd_restarts", attack.pgd_restarts),
      Field{"pgd_step",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "auto") {
                c.attack.pgd_step.reset();
              } else {
                c.attack.pgd_step = to_double(v);
              }
            },
            [](const ExperimentConfig& c) {
              return c.attack.pgd_step ? fmt(*c.attack.pgd_step) : std::string("auto");
            }},
      BNNROB_REAL_FIELD("zoo_fd_step", attack.zoo_fd_step),
      BNNROB_SIZE_FIELD("zoo_iterations", attack.zoo_iterations),
      BNNROB_SIZE_FIELD("zoo_coords_per_iter", attack.zoo_coords_per_iter),
      Field{"clip_domain",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "auto") {
                c.clip_auto = true;
                c.attack.clip_domain.reset();
              } else if (v == "none") {
                c.clip_auto = false;
                c.attack.clip_domain.reset();
              } else {
                const auto parts = split_list(v);
                if (parts.size() != 2) throw std::invalid_argument("expected auto, none or lo,hi");
                c.clip_auto = false;
                c.attack.clip_domain = ClipDomain{to_double(parts[0]), to_double(parts[1])};
              }
            },
            [](const ExperimentConfig& c) {
              if (c.clip_auto) return std::string("auto");
              if (!c.attack.clip_domain) return std::string("none");
              return fmt(c.attack.clip_domain->lo) + "," + fmt(c.attack.clip_domain->hi);
            }},
      BNNROB_SIZE_FIELD("attack_points", attack_points),
      BNNROB_SIZES_FIELD("sample_counts", sample_counts),
      BNNROB_REAL_FIELD("accuracy_threshold", accuracy_threshold),
      BNNROB_SIZE_FIELD("pca_components", pca_components),
  };
  return table;
}

#undef BNNROB_SIZE_FIELD
#undef BNNROB_REAL_FIELD
#undef BNNROB_TEXT_FIELD
#undef BNNROB_SIZES_FIELD

const Field* find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out = "invalid configuration:";
  for (const std::string& l : lines) out += "\n  " + l;
  return out;
}

void check(std::vector<std::string>& problems, const char* what, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    problems.push_back(std::string(what) + ": " + e.what());
  }
}

bool has_trainer(const ExperimentConfig& cfg, const std::string& name) {
  return std::find(cfg.trainers.begin(), cfg.trainers.end(), name) != cfg.trainers.end();
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : ContractViolation(join_lines(problems)), problems_(std::move(problems)) {}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::GradVanish: return "grad-vanish";
    case ExperimentKind::HalfMoonsSweep: return "half-moons-sweep";
    case ExperimentKind::AttackTable: return "attack-table";
    case ExperimentKind::RobustnessAccuracy: return "robustness-accuracy";
    case ExperimentKind::Multimodality: return "multimodality";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (ExperimentKind k : {ExperimentKind::GradVanish, ExperimentKind::HalfMoonsSweep, ExperimentKind::AttackTable,
                           ExperimentKind::RobustnessAccuracy, ExperimentKind::Multimodality}) {
    if (to_string(k) == name) return k;
  }
  throw ContractViolation("unknown experiment '" + name +
                          "' (expected grad-vanish, half-moons-sweep, attack-table, robustness-accuracy or "
                          "multimodality)");
}

std::vector<MlpArchitecture> ExperimentConfig::arch_grid(std::size_t input_dim, std::size_t classes) const {
  std::vector<MlpArchitecture> out;
  for (std::size_t w : widths) {
    MlpArchitecture a;
    a.input_dim = input_dim;
    a.hidden_sizes.assign(depth, w);
    a.output_dim = classes;
    a.activation = activation;
    a.leaky_slope = leaky_slope;
    a.head = OutputHead::Softmax;
    out.push_back(a);
  }
  return out;
}

double ExperimentConfig::epsilon_for(const std::string& trainer) const {
  if (trainer == "hmc") return eps_hmc;
  if (trainer == "vi") return eps_vi;
  return eps_sgd;
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  c.hmc.step_size = 0.01;
  c.hmc.leapfrog_steps = 10;
  c.hmc.warmup = 200;
  c.hmc.samples = 250;
  c.vi.epochs = 1000;
  c.vi.learning_rate = 0.01;
  c.sgd.epochs = 50;
  c.sgd.learning_rate = 0.01;
  c.sgd.batch_size = 32;
  c.ensemble_members = 100;
  switch (kind) {
    case ExperimentKind::GradVanish:
      // 0.01 rejects every warmup proposal on the [128, 128] net at n = 5000.
      c.hmc.step_size = 0.002;
      break;
    case ExperimentKind::HalfMoonsSweep:
      c.widths = {32, 128, 256, 512};
      c.depth = 1;
      c.activation = Activation::LeakyRelu;
      c.train_sizes = {5000, 10000, 15000};
      c.trainers = {"hmc"};
      // Largest step that survives warmup at width 512, n = 15000.
      c.hmc.step_size = 0.001;
      c.attacks = {AttackKind::Fgsm};
      break;
    case ExperimentKind::AttackTable:
      c.test_n = 500;
      c.trainers = {"hmc", "vi", "sgd", "deep-ensemble"};
      break;
    case ExperimentKind::RobustnessAccuracy:
      c.widths = {32, 128, 512};
      c.depth = 1;
      c.activation = Activation::LeakyRelu;
      c.train_sizes = {1000, 5000};
      c.trainers = {"hmc", "vi", "sgd"};
      c.hmc.step_size = 0.001;
      c.attacks = {AttackKind::Fgsm};
      break;
    case ExperimentKind::Multimodality:
      c.widths = {32};
      c.depth = 1;
      c.activation = Activation::LeakyRelu;
      c.train_sizes = {500, 1000, 2000};
      c.trainers = {"hmc"};
      c.hmc.warmup = 100;
      break;
  }
  return c;
}

ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::vector<std::string> problems;
  struct Entry {
    std::string where;
    std::string key;
    std::string value;
  };
  std::vector<Entry> entries;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const std::string where = "line " + std::to_string(number);
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      problems.push_back(where + ": expected 'key = value', got '" + body + "'");
      continue;
    }
    Entry e{where, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1))};
    if (!seen.insert(e.key).second) {
      problems.push_back(where + ": duplicate key '" + e.key + "'");
      continue;
    }
    entries.push_back(std::move(e));
  }
  for (const auto& [key, value] : overrides) entries.push_back({"override", trim(key), trim(value)});

  // The experiment picks the defaults, so it is resolved first; the last setting wins.
  ExperimentKind kind = ExperimentKind::GradVanish;
  for (const Entry& e : entries) {
    if (e.key != "experiment") continue;
    try {
      kind = parse_experiment_kind(e.value);
    } catch (const std::exception&) {
      // reported with the other field errors below
    }
  }
  ExperimentConfig cfg = default_config(kind);
  for (const Entry& e : entries) {
    const Field* f = find_field(e.key);
    if (f == nullptr) {
      problems.push_back(e.where + ": unknown key '" + e.key + "'");
      continue;
    }
    try {
      f->set(cfg, e.value);
    } catch (const std::exception& ex) {
      problems.push_back(e.key + ": " + ex.what());
    }
  }
  for (std::string& p : validation_problems(cfg)) problems.push_back(std::move(p));
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot open '" + path.string() + "'"});
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

std::vector<std::string> validation_problems(const ExperimentConfig& cfg) {
  std::vector<std::string> p;
  const ExperimentKind kind = cfg.experiment;
  if (!cfg.seed_set) p.push_back("seed: not set");
  if (cfg.output_dir.empty()) p.push_back("output_dir: not set");
  if (!cfg.model_dir.empty() && !std::filesystem::is_directory(cfg.model_dir)) {
    p.push_back("model_dir: '" + cfg.model_dir + "' is not a directory");
  }
  if (cfg.workers < 1) p.push_back("workers: must be >= 1");

  if (cfg.dataset == "half-moons") {
    if (!(cfg.noise >= 0.0 && std::isfinite(cfg.noise))) p.push_back("noise: must be finite and >= 0");
    if (cfg.train_n < 1) p.push_back("train_n: must be >= 1");
    if (cfg.test_n < 1) p.push_back("test_n: must be >= 1");
  } else if (cfg.dataset == "mnist") {
    if (kind == ExperimentKind::HalfMoonsSweep) p.push_back("dataset: the half-moons sweep needs dataset = half-moons");
    if (cfg.mnist_dir.empty()) {
      p.push_back("mnist_dir: required when dataset = mnist");
    } else {
      for (const char* name : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                               "t10k-labels-idx1-ubyte"}) {
        if (!std::filesystem::exists(std::filesystem::path(cfg.mnist_dir) / name)) {
          p.push_back(std::string("mnist_dir: missing file ") + name);
        }
      }
    }
    if (cfg.mnist_train_limit < 1) p.push_back("mnist_train_limit: must be >= 1");
    if (cfg.mnist_test_limit < 1) p.push_back("mnist_test_limit: must be >= 1");
  } else {
    p.push_back("dataset: expected half-moons or mnist, got '" + cfg.dataset + "'");
  }

  if (cfg.widths.empty()) p.push_back("arch grid: widths is empty");
  if (std::find(cfg.widths.begin(), cfg.widths.end(), std::size_t{0}) != cfg.widths.end()) {
    p.push_back("arch grid: widths must be >= 1");
  }
  if (cfg.depth < 1) p.push_back("arch grid: depth must be >= 1");
  if (!(std::isfinite(cfg.leaky_slope) && cfg.leaky_slope >= 0.0)) p.push_back("leaky_slope: must be finite and >= 0");
  const bool uses_train_sizes = kind == ExperimentKind::HalfMoonsSweep || kind == ExperimentKind::RobustnessAccuracy ||
                                kind == ExperimentKind::Multimodality;
  if (uses_train_sizes) {
    if (cfg.train_sizes.empty()) p.push_back("train_sizes: empty");
    if (std::find(cfg.train_sizes.begin(), cfg.train_sizes.end(), std::size_t{0}) != cfg.train_sizes.end()) {
      p.push_back("train_sizes: sizes must be >= 1");
    }
  }

  if (cfg.trainers.empty()) p.push_back("trainers: empty");
  std::set<std::string> unique(cfg.trainers.begin(), cfg.trainers.end());
  if (unique.size() != cfg.trainers.size()) p.push_back("trainers: duplicate entries");
  if (kind == ExperimentKind::GradVanish || kind == ExperimentKind::Multimodality) {
    for (const std::string& t : cfg.trainers) {
      if (t != "hmc" && t != "vi") p.push_back("trainers: " + to_string(kind) + " supports hmc and vi, not " + t);
    }
  }
  if (kind == ExperimentKind::HalfMoonsSweep || kind == ExperimentKind::RobustnessAccuracy) {
    for (const std::string& t : cfg.trainers) {
      if (t == "deep-ensemble") p.push_back("trainers: " + to_string(kind) + " supports hmc, vi and sgd");
    }
  }
  check(p, "prior", [&] { cfg.prior.validate(); });
  if (has_trainer(cfg, "hmc")) check(p, "hmc", [&] { cfg.hmc.validate(); });
  if (has_trainer(cfg, "vi")) {
    check(p, "vi", [&] { cfg.vi.validate(); });
    if (cfg.vi_samples < 1) p.push_back("vi_samples: must be >= 1");
  }
  if (has_trainer(cfg, "sgd") || has_trainer(cfg, "deep-ensemble")) check(p, "sgd", [&] { cfg.sgd.validate(); });
  if (has_trainer(cfg, "deep-ensemble") && cfg.ensemble_members < 1) p.push_back("ensemble_members: must be >= 1");

  check(p, "attack", [&] { cfg.attack.validate(); });
  for (double eps : {cfg.eps_hmc, cfg.eps_vi, cfg.eps_sgd}) {
    if (!(std::isfinite(eps) && eps >= 0.0)) {
      p.push_back("eps_hmc/eps_vi/eps_sgd: must be finite and >= 0");
      break;
    }
  }
  const bool uses_attacks = kind == ExperimentKind::AttackTable || kind == ExperimentKind::RobustnessAccuracy ||
                            kind == ExperimentKind::HalfMoonsSweep;
  if (uses_attacks && cfg.attacks.empty()) p.push_back("attacks: empty");
  if (kind == ExperimentKind::AttackTable && cfg.attack_points < 1) p.push_back("attack_points: must be >= 1");

  if (kind == ExperimentKind::GradVanish) {
    const auto& sc = cfg.sample_counts;
    if (sc.empty()) {
      p.push_back("sample_counts: empty");
    } else {
      if (sc.front() < 1) p.push_back("sample_counts: counts must be >= 1");
      for (std::size_t i = 1; i < sc.size(); ++i) {
        if (sc[i] <= sc[i - 1]) {
          p.push_back("sample_counts: must be strictly ascending");
          break;
        }
      }
      if (has_trainer(cfg, "hmc") && sc.back() > cfg.hmc.samples * std::max<std::size_t>(cfg.hmc.chains, 1)) {
        p.push_back("sample_counts: " + std::to_string(sc.back()) + " exceeds the HMC posterior size");
      }
      if (has_trainer(cfg, "vi") && sc.back() > cfg.vi_samples) {
        p.push_back("sample_counts: " + std::to_string(sc.back()) + " exceeds vi_samples");
      }
    }
  }
  if (!(cfg.accuracy_threshold >= 0.0 && cfg.accuracy_threshold <= 1.0)) {
    p.push_back("accuracy_threshold: must lie in [0, 1]");
  }
  if (kind == ExperimentKind::Multimodality) {
    if (cfg.pca_components < 1) p.push_back("pca_components: must be >= 1");
    const std::size_t members = has_trainer(cfg, "hmc") ? cfg.hmc.samples * std::max<std::size_t>(cfg.hmc.chains, 1)
                                                         : cfg.vi_samples;
    if (members < cfg.pca_components + 1) p.push_back("pca_components: needs more posterior samples than components");
  }
  return p;
}

void validate(const ExperimentConfig& cfg) {
  std::vector<std::string> problems = validation_problems(cfg);
  if (!problems.empty()) throw ConfigError(std::move(problems));
}

std::string config_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) {
    const std::string value = f.get(cfg);
    if (value.empty()) continue;
    out += std::string(f.key) + " = " + value + "\n";
  }
  return out;
}

std::uint64_t sub_seed(const ExperimentConfig& cfg, const std::string& grid_point, const std::string& role) {
  return derive_seed(cfg.seed, to_string(cfg.experiment) + "/" + grid_point + "/" + role);
}

}  // namespace bnnrob
