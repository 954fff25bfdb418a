#include "bnnrob/experiment.hpp"

#include "bnnrob/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace bnnrob {

namespace fs = std::filesystem;

namespace {

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.';
    out += keep ? c : '_';
  }
  return out;
}

std::string arch_tag(const MlpArchitecture& arch) { return sanitize(arch.descriptor()); }

std::string grid_point(const MlpArchitecture& arch, std::size_t train_n) {
  return arch.descriptor() + "/n=" + std::to_string(train_n);
}

LabeledDataset shuffled(const LabeledDataset& ds, std::uint64_t seed) {
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return ds.subset(order);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void log_line(const std::string& line) {
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  std::clog << line << std::endl;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

AttackSpec attack_template(const ExperimentConfig& cfg) {
  AttackSpec spec = cfg.attack;
  if (cfg.clip_auto) {
    spec.clip_domain.reset();
    if (cfg.dataset == "mnist") spec.clip_domain = ClipDomain{0.0, 1.0};
  }
  return spec;
}

void require_kind(const ExperimentConfig& cfg, ExperimentKind kind) {
  require(cfg.experiment == kind, "config is for experiment '" + to_string(cfg.experiment) + "', not '" +
                                      to_string(kind) + "'");
  validate(cfg);
}

// Output directory bookkeeping plus the manifest written at the end.
class Run {
 public:
  explicit Run(const ExperimentConfig& cfg) : cfg_(cfg), dir_(cfg.output_dir) {
    fs::create_directories(dir_);
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path path = dir_ / name;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
    artifacts_.emplace_back(name);
  }

  void save_model(const PosteriorEnsemble& ensemble, const std::string& trainer, std::size_t train_n) {
    std::ostringstream buf(std::ios::binary);
    write_ensemble(buf, ensemble);
    write("models/" + model_filename(trainer, ensemble.arch, train_n), buf.str());
  }

  nlohmann::json& diagnostics() { return diagnostics_; }

  RunResult finish() {
    nlohmann::json manifest;
    manifest["experiment"] = to_string(cfg_.experiment);
    manifest["seed"] = cfg_.seed;
    nlohmann::json config = nlohmann::json::object();
    std::istringstream lines(config_text(cfg_));
    std::string line;
    while (std::getline(lines, line)) {
      const auto eq = line.find(" = ");
      if (eq != std::string::npos) config[line.substr(0, eq)] = line.substr(eq + 3);
    }
    manifest["config"] = config;
    nlohmann::json hashes = nlohmann::json::array();
    for (const fs::path& a : artifacts_) {
      hashes.push_back({{"path", a.generic_string()}, {"fnv1a64", file_hash(dir_ / a)}});
    }
    manifest["artifacts"] = hashes;
    manifest["diagnostics"] = diagnostics_;
    std::ofstream out(dir_ / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write manifest in '" + dir_.string() + "'");
    out << manifest.dump(2) << '\n';
    return RunResult{dir_, artifacts_};
  }

 private:
  ExperimentConfig cfg_;
  fs::path dir_;
  std::vector<fs::path> artifacts_;
  nlohmann::json diagnostics_ = nlohmann::json::object();
};

nlohmann::json hmc_json(const TrainedModel& m) {
  return {{"iterations", m.hmc.iterations},
          {"accepted", m.hmc.accepted},
          {"divergences", m.hmc.divergences},
          {"warmup_acceptance", m.hmc.warmup_acceptance},
          {"acceptance_rate", m.hmc.acceptance_rate}};
}

template <class F>
std::string to_csv(F&& writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

struct ModelJob {
  std::string trainer;
  MlpArchitecture arch;
  std::size_t train_n = 0;
};

// Trainer-major, then arch, then train size.
std::vector<ModelJob> model_jobs(const ExperimentConfig& cfg, const std::vector<MlpArchitecture>& archs,
                                 const std::vector<std::size_t>& sizes) {
  std::vector<ModelJob> jobs;
  for (const std::string& t : cfg.trainers) {
    for (const MlpArchitecture& a : archs) {
      for (std::size_t n : sizes) jobs.push_back({t, a, n});
    }
  }
  return jobs;
}

std::string label_for(const ModelJob& job, bool with_arch) {
  return with_arch ? job.trainer + "@" + arch_tag(job.arch) : job.trainer;
}

struct GridOutcome {
  TrainedModel model;
  double test_acc = 0.0;
  std::vector<AttackTableRow> attacks;
  std::optional<GradientReport> gradients;
};

// Shared by the half-moons sweep and the robustness-accuracy experiment.
RunResult run_grid(const ExperimentConfig& cfg, bool record_gradients) {
  const std::string name = to_string(cfg.experiment);
  const DataSplit probe = load_data(cfg, cfg.train_sizes.front());
  const LabeledDataset& test = probe.test;
  const auto archs = cfg.arch_grid(test.dim(), test.class_count);
  const auto jobs = model_jobs(cfg, archs, cfg.train_sizes);
  std::vector<GridOutcome> results(jobs.size());

  parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    const ModelJob& job = jobs[i];
    const auto t0 = std::chrono::steady_clock::now();
    const DataSplit data = load_data(cfg, job.train_n);
    GridOutcome& r = results[i];
    r.model = train_model(cfg, job.trainer, job.arch, data.train);
    const PosteriorEnsemble& ens = r.model.ensemble;
    const Matrix clean = predictive_batch(job.arch, ens, as_columns(test.inputs));
    r.test_acc = accuracy_from_predictive(clean, test.labels);
    for (AttackKind kind : cfg.attacks) {
      AttackSpec spec = attack_template(cfg);
      spec.kind = kind;
      spec.epsilon = cfg.epsilon_for(job.trainer);
      spec.seed = sub_seed(cfg, grid_point(job.arch, job.train_n), "attack/" + to_string(kind));
      const auto outcomes = attack_batch(job.arch, ens, test.inputs, test.labels, spec);
      r.attacks.push_back(summarize_attack(job.trainer, ens, test, clean, outcomes));
    }
    if (record_gradients) {
      const std::size_t counts[1] = {ens.size()};
      r.gradients = gradient_vanishing_report(job.arch, ens, test.inputs, test.labels, counts);
    }
    log_line("[" + name + "] " + job.trainer + " " + job.arch.descriptor() + " n=" + std::to_string(job.train_n) +
             ": test acc " + fixed(r.test_acc) +
             (job.trainer == "hmc" ? ", acceptance " + fixed(r.model.hmc.acceptance_rate) : std::string()) +
             (r.gradients ? ", median |grad| " + fixed(r.gradients->median_abs_component(0), 8) : std::string()) +
             " (" + fixed(seconds_since(t0), 1) + " s)");
  });

  Run run(cfg);
  std::vector<SweepRecord> records;
  std::ostringstream summary;
  summary << "trainer,arch,width,train_n,test_acc,excluded,attack,eps,robust_acc,softmax_diff,robustness,"
             "median_abs_grad,median_linf_grad,acceptance_rate,divergences\n"
          << std::setprecision(17);
  nlohmann::json diag = nlohmann::json::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const ModelJob& job = jobs[i];
    const GridOutcome& r = results[i];
    const bool excluded = r.test_acc < cfg.accuracy_threshold;
    const std::size_t width = job.arch.hidden_sizes.front();
    for (const AttackTableRow& a : r.attacks) {
      records.push_back({job.arch.descriptor(), job.trainer, width, job.train_n, r.test_acc, a.softmax_diff, a.attack,
                         a.eps});
      summary << job.trainer << ',' << job.arch.descriptor() << ',' << width << ',' << job.train_n << ','
              << r.test_acc << ',' << (excluded ? 1 : 0) << ',' << to_string(a.attack) << ',' << a.eps << ','
              << a.robust_acc << ',' << a.softmax_diff << ',' << 1.0 - a.softmax_diff << ',';
      if (r.gradients) summary << r.gradients->median_abs_component(0) << ',' << r.gradients->median_linf(0);
      else summary << ',';
      summary << ',';
      if (job.trainer == "hmc") summary << r.model.hmc.acceptance_rate << ',' << r.model.hmc.divergences;
      else summary << ',';
      summary << '\n';
    }
    if (r.gradients) {
      run.write("gradients-" + job.trainer + "-" + arch_tag(job.arch) + "-n" + std::to_string(job.train_n) + ".csv",
                to_csv([&](std::ostream& o) { write_gradients_csv(o, *r.gradients); }));
    }
    nlohmann::json d = {{"trainer", job.trainer}, {"arch", job.arch.descriptor()}, {"train_n", job.train_n},
                        {"test_acc", r.test_acc}, {"excluded", excluded}};
    if (job.trainer == "hmc") d["hmc"] = hmc_json(r.model);
    diag.push_back(d);
  }
  run.write("sweep.csv", to_csv([&](std::ostream& o) { write_sweep_csv(o, records); }));
  run.write("sweep_summary.csv", summary.str());
  run.diagnostics()["runs"] = diag;
  return run.finish();
}

}  // namespace

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for hashing");
  std::ostringstream buf;
  buf << in.rdbuf();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(buf.str())));
  return hex;
}

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(count);
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const std::size_t n_threads = std::min(workers, count);
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string model_filename(const std::string& trainer, const MlpArchitecture& arch, std::size_t train_n) {
  return trainer + "-" + arch_tag(arch) + "-n" + std::to_string(train_n) + ".bnne";
}

DataSplit load_data(const ExperimentConfig& cfg, std::size_t train_n) {
  DataSplit out;
  if (cfg.dataset == "mnist") {
    const fs::path dir(cfg.mnist_dir);
    out.train = load_idx((dir / "train-images-idx3-ubyte").string(), (dir / "train-labels-idx1-ubyte").string(),
                         std::min(train_n, cfg.mnist_train_limit));
    out.test = load_idx((dir / "t10k-images-idx3-ubyte").string(), (dir / "t10k-labels-idx1-ubyte").string(),
                        cfg.mnist_test_limit);
    return out;
  }
  const std::string noise = std::to_string(cfg.noise);
  const std::string train_role = "data/half-moons/noise=" + noise + "/train/n=" + std::to_string(train_n);
  const std::string test_role = "data/half-moons/noise=" + noise + "/test/n=" + std::to_string(cfg.test_n);
  // The generator emits class 0 first; shuffling keeps any prefix balanced.
  out.train = shuffled(make_half_moons(train_n, cfg.noise, derive_seed(cfg.seed, train_role)),
                       derive_seed(cfg.seed, train_role + "/order"));
  out.test = shuffled(make_half_moons(cfg.test_n, cfg.noise, derive_seed(cfg.seed, test_role)),
                      derive_seed(cfg.seed, test_role + "/order"));
  return out;
}

TrainedModel train_model(const ExperimentConfig& cfg, const std::string& trainer, const MlpArchitecture& arch,
                         const LabeledDataset& train) {
  TrainedModel out;
  out.trainer = trainer;
  if (!cfg.model_dir.empty()) {
    const fs::path path = fs::path(cfg.model_dir) / model_filename(trainer, arch, train.size());
    if (fs::exists(path)) {
      out.ensemble = load_ensemble(path.string());
      if (!(out.ensemble.arch == arch)) {
        throw ConsistencyError("model '" + path.string() + "' has architecture " + out.ensemble.arch.descriptor() +
                               ", expected " + arch.descriptor());
      }
      return out;
    }
  }
  const std::string point = grid_point(arch, train.size());
  if (trainer == "hmc") {
    HmcConfig h = cfg.hmc;
    h.seed = sub_seed(cfg, point, "hmc");
    out.ensemble = hmc_sample(arch, train, cfg.prior, h, &out.hmc);
  } else if (trainer == "vi") {
    ViConfig v = cfg.vi;
    v.seed = sub_seed(cfg, point, "vi");
    const ViResult fit = vi_fit(arch, train, cfg.prior, v);
    out.ensemble = vi_sample(arch, fit.mean, fit.std, cfg.vi_samples, sub_seed(cfg, point, "vi/sample"));
  } else if (trainer == "sgd") {
    SgdConfig s = cfg.sgd;
    s.seed = sub_seed(cfg, point, "sgd");
    out.ensemble = PosteriorEnsemble{arch, {sgd_train(arch, train, s)}, Provenance::Sgd, s.seed};
  } else if (trainer == "deep-ensemble") {
    out.ensemble =
        deep_ensemble_train(arch, train, cfg.ensemble_members, cfg.sgd, sub_seed(cfg, point, "deep-ensemble"));
  } else {
    throw ContractViolation("unknown trainer '" + trainer + "'");
  }
  return out;
}

RunResult run_grad_vanish(const ExperimentConfig& cfg) {
  require_kind(cfg, ExperimentKind::GradVanish);
  const DataSplit data = load_data(cfg, cfg.train_n);
  const auto archs = cfg.arch_grid(data.train.dim(), data.train.class_count);
  const auto jobs = model_jobs(cfg, archs, {data.train.size()});
  struct Outcome {
    TrainedModel model;
    double test_acc = 0.0;
    GradientReport report;
  };
  std::vector<Outcome> results(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelJob& job = jobs[i];
    Outcome& r = results[i];
    r.model = train_model(cfg, job.trainer, job.arch, data.train);
    r.test_acc = accuracy(job.arch, r.model.ensemble, data.test);
    r.report = gradient_vanishing_report(job.arch, r.model.ensemble, data.test.inputs, data.test.labels,
                                         cfg.sample_counts);
    std::string medians;
    for (std::size_t c = 0; c < r.report.sample_counts.size(); ++c) {
      medians += " " + std::to_string(r.report.sample_counts[c]) + ":" + fixed(r.report.median_linf(c), 6);
    }
    log_line("[grad-vanish] " + job.trainer + " " + job.arch.descriptor() + ": test acc " + fixed(r.test_acc) +
             (job.trainer == "hmc" ? ", acceptance " + fixed(r.model.hmc.acceptance_rate) : std::string()) +
             ", median Linf by count" + medians + " (" + fixed(seconds_since(t0), 1) + " s)");
  });

  Run run(cfg);
  std::ostringstream summary;
  summary << "trainer,arch,sample_count,median_linf,median_abs_component,frac_below_first,test_acc\n"
          << std::setprecision(17);
  nlohmann::json diag = nlohmann::json::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const ModelJob& job = jobs[i];
    const Outcome& r = results[i];
    run.save_model(r.model.ensemble, job.trainer, job.train_n);
    run.write("gradients-" + job.trainer + "-" + arch_tag(job.arch) + ".csv",
              to_csv([&](std::ostream& o) { write_gradients_csv(o, r.report); }));
    for (std::size_t c = 0; c < r.report.sample_counts.size(); ++c) {
      std::size_t below = 0;
      for (std::size_t p = 0; p < r.report.n_points; ++p) {
        if (r.report.at(c, p).linf < r.report.at(0, p).linf) ++below;
      }
      summary << job.trainer << ',' << job.arch.descriptor() << ',' << r.report.sample_counts[c] << ','
              << r.report.median_linf(c) << ',' << r.report.median_abs_component(c) << ','
              << static_cast<double>(below) / static_cast<double>(r.report.n_points) << ',' << r.test_acc << '\n';
    }
    nlohmann::json d = {{"trainer", job.trainer}, {"arch", job.arch.descriptor()}, {"test_acc", r.test_acc}};
    if (job.trainer == "hmc") d["hmc"] = hmc_json(r.model);
    diag.push_back(d);
  }
  run.write("gradient_summary.csv", summary.str());
  run.diagnostics()["runs"] = diag;
  return run.finish();
}

RunResult run_half_moons_sweep(const ExperimentConfig& cfg) {
  require_kind(cfg, ExperimentKind::HalfMoonsSweep);
  return run_grid(cfg, true);
}

RunResult run_robustness_accuracy(const ExperimentConfig& cfg) {
  require_kind(cfg, ExperimentKind::RobustnessAccuracy);
  return run_grid(cfg, false);
}

RunResult run_attack_table(const ExperimentConfig& cfg) {
  require_kind(cfg, ExperimentKind::AttackTable);
  const DataSplit data = load_data(cfg, cfg.train_n);
  const LabeledDataset points = data.test.head(std::min(cfg.attack_points, data.test.size()));
  const auto archs = cfg.arch_grid(data.train.dim(), data.train.class_count);
  const auto jobs = model_jobs(cfg, archs, {data.train.size()});
  const bool with_arch = archs.size() > 1;
  struct Outcome {
    TrainedModel model;
    std::vector<AttackTableRow> rows;
    std::vector<std::vector<AttackOutcome>> per_point;
  };
  std::vector<Outcome> results(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelJob& job = jobs[i];
    Outcome& r = results[i];
    r.model = train_model(cfg, job.trainer, job.arch, data.train);
    const PosteriorEnsemble& ens = r.model.ensemble;
    const Matrix clean = predictive_batch(job.arch, ens, as_columns(points.inputs));
    std::string line = "[attack-table] " + label_for(job, with_arch) + ":";
    for (AttackKind kind : cfg.attacks) {
      AttackSpec spec = attack_template(cfg);
      spec.kind = kind;
      spec.seed = sub_seed(cfg, grid_point(job.arch, job.train_n), "attack/" + to_string(kind));
      r.per_point.push_back(attack_batch(job.arch, ens, points.inputs, points.labels, spec));
      r.rows.push_back(summarize_attack(label_for(job, with_arch), ens, points, clean, r.per_point.back()));
      line += " " + to_string(kind) + " " + fixed(r.rows.back().robust_acc);
    }
    log_line(line + " (clean " + fixed(r.rows.front().clean_acc) + ", " + fixed(seconds_since(t0), 1) + " s)");
  });

  Run run(cfg);
  std::vector<AttackTableRow> rows;
  std::ostringstream softmax;
  softmax << "trainer,attack,eps,softmax_diff,robustness\n" << std::setprecision(17);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const ModelJob& job = jobs[i];
    const Outcome& r = results[i];
    run.save_model(r.model.ensemble, job.trainer, job.train_n);
    for (std::size_t a = 0; a < r.rows.size(); ++a) {
      const AttackTableRow& row = r.rows[a];
      rows.push_back(row);
      softmax << row.trainer << ',' << to_string(row.attack) << ',' << row.eps << ',' << row.softmax_diff << ','
              << 1.0 - row.softmax_diff << '\n';
      run.write("attack-" + sanitize(row.trainer) + "-" + to_string(row.attack) + ".csv",
                to_csv([&](std::ostream& o) { write_attack_csv(o, r.per_point[a]); }));
    }
  }
  run.write("attacks.csv", to_csv([&](std::ostream& o) { write_attacks_csv(o, rows); }));
  run.write("attacks_softmax.csv", softmax.str());
  nlohmann::json diag = nlohmann::json::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (jobs[i].trainer == "hmc") diag.push_back({{"arch", jobs[i].arch.descriptor()}, {"hmc", hmc_json(results[i].model)}});
  }
  run.diagnostics()["hmc"] = diag;
  return run.finish();
}

RunResult run_multimodality(const ExperimentConfig& cfg) {
  require_kind(cfg, ExperimentKind::Multimodality);
  const DataSplit probe = load_data(cfg, cfg.train_sizes.front());
  const auto archs = cfg.arch_grid(probe.train.dim(), probe.train.class_count);
  const auto jobs = model_jobs(cfg, archs, cfg.train_sizes);
  const bool with_arch = archs.size() > 1;
  struct Outcome {
    TrainedModel model;
    PcaResult pca;
    double silhouette = 0.0;
  };
  std::vector<Outcome> results(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    const ModelJob& job = jobs[i];
    Outcome& r = results[i];
    const DataSplit data = load_data(cfg, job.train_n);
    r.model = train_model(cfg, job.trainer, job.arch, data.train);
    r.pca = pca_project(r.model.ensemble, cfg.pca_components);
    if (!r.pca.degenerate) {
      const Vector pc1 = r.pca.projections.col(0);
      r.silhouette = two_means_1d(std::span<const double>(pc1.data(), static_cast<std::size_t>(pc1.size()))).silhouette;
    }
    log_line("[multimodality] " + label_for(job, with_arch) + " n=" + std::to_string(job.train_n) +
             ": explained PC1 " + fixed(r.pca.explained[0]) + ", PC1 silhouette " + fixed(r.silhouette) + " (" +
             fixed(seconds_since(t0), 1) + " s)");
  });

  Run run(cfg);
  std::vector<PcaBlock> blocks;
  std::ostringstream summary;
  summary << "trainer,arch,train_n,n_members,total_variance";
  for (std::size_t c = 0; c < cfg.pca_components; ++c) summary << ",explained_pc" << c + 1;
  summary << ",degenerate,pc1_silhouette\n" << std::setprecision(17);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const ModelJob& job = jobs[i];
    const Outcome& r = results[i];
    blocks.push_back({label_for(job, with_arch), job.train_n, r.pca});
    summary << label_for(job, with_arch) << ',' << job.arch.descriptor() << ',' << job.train_n << ','
            << r.model.ensemble.size() << ',' << r.pca.total_variance;
    for (Eigen::Index c = 0; c < r.pca.explained.size(); ++c) summary << ',' << r.pca.explained[c];
    summary << ',' << (r.pca.degenerate ? 1 : 0) << ',' << r.silhouette << '\n';
  }
  run.write("pca.csv", to_csv([&](std::ostream& o) { write_pca_csv(o, blocks); }));
  run.write("pca_summary.csv", summary.str());
  return run.finish();
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::GradVanish: return run_grad_vanish(cfg);
    case ExperimentKind::HalfMoonsSweep: return run_half_moons_sweep(cfg);
    case ExperimentKind::AttackTable: return run_attack_table(cfg);
    case ExperimentKind::RobustnessAccuracy: return run_robustness_accuracy(cfg);
    case ExperimentKind::Multimodality: return run_multimodality(cfg);
  }
  throw ContractViolation("unknown experiment");
}

RunResult run_train(const ExperimentConfig& cfg) {
  validate(cfg);
  const DataSplit data = load_data(cfg, cfg.train_n);
  const auto archs = cfg.arch_grid(data.train.dim(), data.train.class_count);
  const auto jobs = model_jobs(cfg, archs, {data.train.size()});
  std::vector<TrainedModel> models(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    models[i] = train_model(cfg, jobs[i].trainer, jobs[i].arch, data.train);
    const double acc = accuracy(jobs[i].arch, models[i].ensemble, data.test);
    log_line("[train] " + jobs[i].trainer + " " + jobs[i].arch.descriptor() + ": test acc " + fixed(acc) + " (" +
             fixed(seconds_since(t0), 1) + " s)");
  });
  Run run(cfg);
  nlohmann::json diag = nlohmann::json::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    run.save_model(models[i].ensemble, jobs[i].trainer, jobs[i].train_n);
    nlohmann::json d = {{"trainer", jobs[i].trainer}, {"arch", jobs[i].arch.descriptor()}};
    if (jobs[i].trainer == "hmc") d["hmc"] = hmc_json(models[i]);
    diag.push_back(d);
  }
  run.diagnostics()["runs"] = diag;
  return run.finish();
}

}  // namespace bnnrob
