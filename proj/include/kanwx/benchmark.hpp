#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "kanwx/data.hpp"
#include "kanwx/ensemble.hpp"
#include "kanwx/error.hpp"
#include "kanwx/metrics.hpp"
#include "kanwx/model.hpp"
#include "kanwx/rng.hpp"
#include "kanwx/train.hpp"

namespace kanwx {

inline constexpr const char* kVersion = "0.1.0";

struct DatasetSpec {
  std::string city;
  std::string csv;
};

struct BenchmarkConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::size_t workers = 1;
  std::size_t window = 14;
  std::size_t horizon = 1;
  double train_frac = 0.72;
  double val_frac = 0.08;
  double test_frac = 0.20;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double lr = 0.001;
  std::size_t patience = 15;
  MissingPolicy missing_policy = MissingPolicy::forward_fill;
  std::vector<DatasetSpec> datasets;
  std::vector<std::string> targets = {"T2M", "PS", "PREC"};
  std::vector<ModelKind> models;
  // Per-model overrides, applied on top of the shared defaults.
  std::map<std::string, nlohmann::json> model_overrides;

  void validate() const {
    if (datasets.empty()) throw ConfigError("config: no datasets");
    if (targets.empty()) throw ConfigError("config: no targets");
    if (models.empty()) throw ConfigError("config: no models");
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    for (const std::string& t : targets) feature_index(t);
  }
};

inline BenchmarkConfig benchmark_config_from_json(const nlohmann::json& j) {
  BenchmarkConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  cfg.workers = j.value("workers", cfg.workers);
  cfg.window = j.value("window", cfg.window);
  cfg.horizon = j.value("horizon", cfg.horizon);
  if (j.contains("split")) {
    const nlohmann::json& s = j.at("split");
    cfg.train_frac = s.value("train", cfg.train_frac);
    cfg.val_frac = s.value("val", cfg.val_frac);
    cfg.test_frac = s.value("test", cfg.test_frac);
  }
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.patience = j.value("patience", cfg.patience);
  if (j.contains("missing_policy")) {
    const std::string p = j.at("missing_policy").get<std::string>();
    if (p == "reject")
      cfg.missing_policy = MissingPolicy::reject;
    else if (p == "forward_fill")
      cfg.missing_policy = MissingPolicy::forward_fill;
    else
      throw ConfigError("config: unknown missing_policy '" + p + "'");
  }
  if (!j.contains("datasets"))
    throw ConfigError("config: 'datasets' is required");
  for (const nlohmann::json& d : j.at("datasets"))
    cfg.datasets.push_back(
        {d.at("city").get<std::string>(), d.at("csv").get<std::string>()});
  if (j.contains("targets")) {
    cfg.targets.clear();
    for (const nlohmann::json& t : j.at("targets"))
      cfg.targets.push_back(t.get<std::string>());
  }
  if (!j.contains("models")) throw ConfigError("config: 'models' is required");
  for (const nlohmann::json& m : j.at("models"))
    cfg.models.push_back(parse_model_kind(m.get<std::string>()));
  if (j.contains("model_overrides"))
    for (const auto& [key, value] : j.at("model_overrides").items()) {
      parse_model_kind(key);
      cfg.model_overrides[key] = value;
    }
  return cfg;
}

inline nlohmann::json benchmark_config_to_json(const BenchmarkConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["workers"] = cfg.workers;
  j["window"] = cfg.window;
  j["horizon"] = cfg.horizon;
  j["split"] = {{"train", cfg.train_frac},
                {"val", cfg.val_frac},
                {"test", cfg.test_frac}};
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.lr;
  j["patience"] = cfg.patience;
  j["missing_policy"] =
      cfg.missing_policy == MissingPolicy::reject ? "reject" : "forward_fill";
  j["datasets"] = nlohmann::json::array();
  for (const DatasetSpec& d : cfg.datasets)
    j["datasets"].push_back({{"city", d.city}, {"csv", d.csv}});
  j["targets"] = cfg.targets;
  j["models"] = nlohmann::json::array();
  for (ModelKind m : cfg.models) j["models"].push_back(model_kind_name(m));
  j["model_overrides"] = nlohmann::json::object();
  for (const auto& [key, value] : cfg.model_overrides)
    j["model_overrides"][key] = value;
  return j;
}

// ---- jobs ----

struct JobResult {
  std::string city;
  std::string target;
  ModelKind model = ModelKind::lstm;
  bool ok = false;
  std::string error;
  MetricsReport original;
  MetricsReport scaled;
  double best_val_mse = 0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  long long wall_ms = 0;
};

struct BenchmarkReport {
  std::vector<JobResult> jobs;
  bool all_ok = true;
  long long wall_ms = 0;
};

namespace detail {

inline constexpr ModelKind kEnsembleBases[4] = {
    ModelKind::lstm, ModelKind::gru, ModelKind::bilstm, ModelKind::bigru};

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline void write_history_csv(const std::filesystem::path& path,
                              const History& history) {
  std::ofstream os(path);
  os << "epoch,train_mse,val_mse\n";
  for (std::size_t e = 0; e < history.epochs.size(); ++e)
    os << e << "," << fmt_g17(history.epochs[e].train_mse) << ","
       << fmt_g17(history.epochs[e].val_mse) << "\n";
}

inline void write_predictions_csv(const std::filesystem::path& path,
                                  const EvalResult& eval) {
  std::ofstream os(path);
  os << "date,actual,predicted\n";
  for (const SeriesPoint& p : eval.series)
    os << p.date << "," << fmt_g17(p.actual) << "," << fmt_g17(p.predicted)
       << "\n";
}

// Fills a TrainConfig for one job from the shared settings plus any
// per-model override block.
inline TrainConfig job_train_config(const BenchmarkConfig& cfg, ModelKind kind,
                                    const std::string& target,
                                    std::uint64_t seed) {
  TrainConfig tc;
  tc.kind = kind;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.lr = cfg.lr;
  tc.seed = seed;
  tc.patience = cfg.patience;
  tc.target = target;
  tc.window = cfg.window;
  tc.features = kFeatureCount;
  const auto it = cfg.model_overrides.find(model_kind_name(kind));
  if (it != cfg.model_overrides.end()) {
    const nlohmann::json& o = it->second;
    tc.epochs = o.value("epochs", tc.epochs);
    tc.batch_size = o.value("batch_size", tc.batch_size);
    tc.lr = o.value("lr", tc.lr);
    tc.patience = o.value("patience", tc.patience);
    tc.hp = hparams_from_json(o);
  }
  return tc;
}

}  // namespace detail

// Shared per-run data: one parsed series per city, one windowed dataset per
// (city, family, target). Built up front, read-only during the parallel
// phase.
class BenchmarkData {
 public:
  BenchmarkData(const BenchmarkConfig& cfg) {
    for (const DatasetSpec& d : cfg.datasets) {
      WeatherSeries series = ingest_csv(d.csv, cfg.missing_policy, d.city);
      for (const std::string& target : cfg.targets) {
        const std::size_t feature = feature_index(target);
        for (ScalingFamily family :
             {ScalingFamily::spline, ScalingFamily::rnn}) {
          const std::string key = dataset_key(d.city, family, target);
          datasets_[key] = std::make_shared<WindowedDataset>(build_dataset(
              series, family, cfg.window, cfg.horizon, feature,
              cfg.train_frac, cfg.val_frac, cfg.test_frac));
        }
      }
    }
  }

  static std::string dataset_key(const std::string& city, ScalingFamily f,
                                 const std::string& target) {
    return city + "|" + (f == ScalingFamily::spline ? "spline" : "rnn") + "|" +
           target;
  }

  const WindowedDataset& dataset(const std::string& city, ScalingFamily f,
                                 const std::string& target) const {
    return *datasets_.at(dataset_key(city, f, target));
  }

 private:
  std::map<std::string, std::shared_ptr<WindowedDataset>> datasets_;
};

namespace detail {

inline std::filesystem::path job_dir(const BenchmarkConfig& cfg,
                                     const std::string& city,
                                     const std::string& target,
                                     ModelKind model) {
  return std::filesystem::path(cfg.output_dir) / city / target /
         model_kind_name(model);
}

inline void run_single_job(const BenchmarkConfig& cfg,
                           const BenchmarkData& data, JobResult& job) {
  const auto t0 = std::chrono::steady_clock::now();
  const WindowedDataset& ds =
      data.dataset(job.city, scaling_family(job.model), job.target);
  const std::uint64_t seed = derive_seed(cfg.seed, job.city, job.target,
                                         model_kind_name(job.model));
  const std::filesystem::path dir = job_dir(cfg, job.city, job.target,
                                            job.model);
  std::filesystem::create_directories(dir);

  if (job.model == ModelKind::ensemble) {
    // Assemble from the four base checkpoints of this run.
    std::vector<std::unique_ptr<Model>> bases;
    nlohmann::json base_configs = nlohmann::json::array();
    for (ModelKind base_kind : kEnsembleBases) {
      const auto ck_path =
          job_dir(cfg, job.city, job.target, base_kind) / "checkpoint.bin";
      const Checkpoint ck = Checkpoint::load(ck_path.string());
      base_configs.push_back(nlohmann::json::parse(ck.config_json));
      bases.push_back(model_from_checkpoint(ck));
    }
    EnsembleModel ensemble(std::move(bases));

    // Precompute detached base predictions per split (scaled space).
    const SplitCounts& split = ds.split();
    auto predictions_for = [&](std::size_t start, std::size_t count) {
      Tensor p = Tensor::zeros({count, kEnsembleSize});
      Tensor y = Tensor::zeros({count, 1});
      for (std::size_t at = 0; at < count; at += cfg.batch_size) {
        const std::size_t b = std::min(cfg.batch_size, count - at);
        std::vector<std::size_t> idx(b);
        for (std::size_t i = 0; i < b; ++i) idx[i] = start + at + i;
        Batch batch = make_batch(ds, idx, false, ds.sample_count());
        Tensor preds = ensemble.base_predictions(batch);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t k = 0; k < kEnsembleSize; ++k)
            p.at(at + i, k) = preds.at(i, k);
          y.data()[at + i] = batch.targets.data()[i];
        }
      }
      return std::make_pair(p, y);
    };
    auto [p_train, y_train] = predictions_for(0, split.train);
    auto [p_val, y_val] = predictions_for(split.train, split.val);

    Rng rng(seed);
    const EnsembleHistory eh =
        ensemble_fit(ensemble, p_train, y_train, p_val, y_val, cfg.epochs,
                     cfg.batch_size, cfg.lr, cfg.patience, rng);

    History history;
    for (std::size_t e = 0; e < eh.train_mse.size(); ++e)
      history.epochs.push_back({eh.train_mse[e], eh.val_mse[e]});
    history.best_epoch = eh.best_epoch;
    history.best_val = eh.best_val;
    detail::write_history_csv(dir / "history.csv", history);

    TrainConfig tc = job_train_config(cfg, ModelKind::ensemble, job.target,
                                      seed);
    nlohmann::json cj = train_config_to_json(tc);
    cj["bases"] = base_configs;
    Checkpoint ck;
    ck.config_json = cj.dump();
    ck.best_val_mse = eh.best_val;
    ck.best_epoch = static_cast<std::uint32_t>(eh.best_epoch);
    for (const NamedParam& p : ensemble.checkpoint_tensors())
      ck.tensors.push_back({p.name, p.tensor.clone()});
    ck.save((dir / "checkpoint.bin").string());

    EvalResult eval =
        evaluate_model(ensemble, ds, SplitPart::test, cfg.batch_size);
    detail::write_predictions_csv(dir / "predictions.csv", eval);
    job.original = eval.original;
    job.scaled = eval.scaled;
    job.best_val_mse = eh.best_val;
    job.best_epoch = eh.best_epoch;
    job.epochs_run = eh.train_mse.size();
  } else {
    TrainConfig tc = job_train_config(cfg, job.model, job.target, seed);
    auto [model, result] = train_model(tc, ds);
    detail::write_history_csv(dir / "history.csv", result.history);
    result.checkpoint.save((dir / "checkpoint.bin").string());
    EvalResult eval =
        evaluate_model(*model, ds, SplitPart::test, tc.batch_size);
    detail::write_predictions_csv(dir / "predictions.csv", eval);
    job.original = eval.original;
    job.scaled = eval.scaled;
    job.best_val_mse = result.history.best_val;
    job.best_epoch = result.history.best_epoch;
    job.epochs_run = result.history.epochs.size();
  }

  job.original.model = model_kind_name(job.model);
  job.original.city = job.city;
  job.original.variable = job.target;
  job.scaled.model = model_kind_name(job.model);
  job.scaled.city = job.city;
  job.scaled.variable = job.target;
  job.ok = true;
  job.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
}

// The ten metric columns of a table row, original units then scaled space.
inline std::vector<double> metric_columns(const JobResult& job) {
  return {job.original.mse, job.original.rmse, job.original.mae,
          job.original.r2, job.original.mape, job.scaled.mse,
          job.scaled.rmse, job.scaled.mae, job.scaled.r2, job.scaled.mape};
}

inline const std::vector<std::string>& metric_column_names() {
  static const std::vector<std::string> names = {
      "mse",        "rmse",        "mae",        "r2",        "mape",
      "mse_scaled", "rmse_scaled", "mae_scaled", "r2_scaled", "mape_scaled"};
  return names;
}

// true where larger is better
inline const std::vector<bool>& metric_higher_better() {
  static const std::vector<bool> dir = {false, false, false, true, false,
                                        false, false, false, true, false};
  return dir;
}

// Marks the per-column best within one city block. Returns, per job index
// in `rows`, the set of column indices where that row is the best.
inline std::vector<std::vector<bool>> best_marks(
    const std::vector<const JobResult*>& rows) {
  const std::size_t cols = metric_column_names().size();
  std::vector<std::vector<bool>> marks(rows.size(),
                                       std::vector<bool>(cols, false));
  for (std::size_t c = 0; c < cols; ++c) {
    double best = 0;
    std::size_t best_row = rows.size();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double v = metric_columns(*rows[r])[c];
      if (std::isnan(v)) continue;
      const bool better =
          best_row == rows.size() ||
          (metric_higher_better()[c] ? v > best : v < best);
      if (better) {
        best = v;
        best_row = r;
      }
    }
    if (best_row < rows.size()) marks[best_row][c] = true;
  }
  return marks;
}

inline void write_metrics_tables(const BenchmarkConfig& cfg,
                                 const std::vector<JobResult>& jobs) {
  namespace fs = std::filesystem;
  for (const std::string& target : cfg.targets) {
    // Rows grouped per city, in config order.
    std::vector<std::pair<std::string, std::vector<const JobResult*>>> blocks;
    for (const DatasetSpec& d : cfg.datasets) {
      std::vector<const JobResult*> rows;
      for (ModelKind m : cfg.models)
        for (const JobResult& j : jobs)
          if (j.ok && j.city == d.city && j.target == target && j.model == m)
            rows.push_back(&j);
      if (!rows.empty()) blocks.emplace_back(d.city, std::move(rows));
    }
    if (blocks.empty()) continue;

    const auto& names = metric_column_names();

    std::ofstream csv(fs::path(cfg.output_dir) /
                      ("metrics_" + target + ".csv"));
    csv << "city,model";
    for (const std::string& n : names) csv << "," << n;
    csv << ",best_metrics\n";
    for (const auto& [city, rows] : blocks) {
      const auto marks = best_marks(rows);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        csv << city << "," << model_kind_name(rows[r]->model);
        const auto vals = metric_columns(*rows[r]);
        for (double v : vals) csv << "," << fmt_metric(v);
        csv << ",";
        bool first = true;
        for (std::size_t c = 0; c < names.size(); ++c) {
          if (!marks[r][c]) continue;
          if (!first) csv << ";";
          csv << names[c];
          first = false;
        }
        csv << "\n";
      }
    }
    csv.close();

    // Aligned text twin with the direction arrows in the header and '*'
    // on each per-column best value.
    const std::vector<std::string> headers = {
        "MSE \xE2\x86\x93",  "RMSE \xE2\x86\x93", "MAE \xE2\x86\x93",
        "R2 \xE2\x86\x91",   "MAPE% \xE2\x86\x93", "sMSE \xE2\x86\x93",
        "sRMSE \xE2\x86\x93", "sMAE \xE2\x86\x93", "sR2 \xE2\x86\x91",
        "sMAPE% \xE2\x86\x93"};
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> head = {"City", "Model"};
    for (const std::string& h : headers) head.push_back(h);
    cells.push_back(head);
    for (const auto& [city, rows] : blocks) {
      const auto marks = best_marks(rows);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        std::vector<std::string> row = {city,
                                        model_kind_name(rows[r]->model)};
        const auto vals = metric_columns(*rows[r]);
        for (std::size_t c = 0; c < vals.size(); ++c)
          row.push_back(fmt_metric(vals[c]) + (marks[r][c] ? "*" : ""));
        cells.push_back(std::move(row));
      }
    }
    std::vector<std::size_t> width(cells[0].size(), 0);
    auto display_len = [](const std::string& s) {
      // count UTF-8 code points, not bytes
      std::size_t n = 0;
      for (unsigned char ch : s)
        if ((ch & 0xC0) != 0x80) ++n;
      return n;
    };
    for (const auto& row : cells)
      for (std::size_t c = 0; c < row.size(); ++c)
        width[c] = std::max(width[c], display_len(row[c]));
    std::ofstream txt(fs::path(cfg.output_dir) /
                      ("metrics_" + target + ".txt"));
    txt << "Target: " << target << " (test split; original units, then "
        << "scaled space; * = best per column within a city)\n";
    for (std::size_t r = 0; r < cells.size(); ++r) {
      std::string line;
      for (std::size_t c = 0; c < cells[r].size(); ++c) {
        std::string cell = cells[r][c];
        while (display_len(cell) < width[c]) cell += ' ';
        line += cell;
        if (c + 1 < cells[r].size()) line += "  ";
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      txt << line << "\n";
      if (r == 0) {
        std::size_t total = 0;
        for (std::size_t c = 0; c < width.size(); ++c)
          total += width[c] + (c + 1 < width.size() ? 2 : 0);
        txt << std::string(total, '-') << "\n";
      }
    }
  }
}

inline void write_manifest(const BenchmarkConfig& cfg,
                           const BenchmarkReport& report) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["seed"] = cfg.seed;
  j["config"] = benchmark_config_to_json(cfg);
  j["total_wall_ms"] = report.wall_ms;
  j["jobs"] = nlohmann::json::array();
  for (const JobResult& job : report.jobs) {
    nlohmann::json e;
    e["city"] = job.city;
    e["target"] = job.target;
    e["model"] = model_kind_name(job.model);
    e["ok"] = job.ok;
    if (!job.ok) e["error"] = job.error;
    e["wall_ms"] = job.wall_ms;
    e["epochs_run"] = job.epochs_run;
    e["best_epoch"] = job.best_epoch;
    e["best_val_mse"] = job.best_val_mse;
    j["jobs"].push_back(e);
  }
  std::ofstream os(std::filesystem::path(cfg.output_dir) / "manifest.json");
  os << j.dump(2) << "\n";
}

}  // namespace detail

// Runs the full (city x target x model) matrix: ingest, scale, window,
// split, train, evaluate, and emit tables, series, histories, checkpoints
// and a manifest. Ensemble jobs run after their base models.
inline BenchmarkReport run_benchmark(const BenchmarkConfig& cfg,
                                     bool verbose = false) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();

  const bool wants_ensemble =
      std::find(cfg.models.begin(), cfg.models.end(), ModelKind::ensemble) !=
      cfg.models.end();
  if (wants_ensemble) {
    // Configuration must be rejected before any training starts.
    for (ModelKind base : detail::kEnsembleBases) {
      const bool in_run = std::find(cfg.models.begin(), cfg.models.end(),
                                    base) != cfg.models.end();
      if (in_run) continue;
      for (const DatasetSpec& d : cfg.datasets)
        for (const std::string& target : cfg.targets) {
          const auto path = detail::job_dir(cfg, d.city, target, base) /
                            "checkpoint.bin";
          if (!std::filesystem::exists(path))
            throw ConfigError(
                std::string("Ensemble needs base model ") +
                model_kind_name(base) + " in the run or its checkpoint at " +
                path.string());
        }
    }
  }

  std::filesystem::create_directories(cfg.output_dir);
  BenchmarkData data(cfg);

  BenchmarkReport report;
  for (const DatasetSpec& d : cfg.datasets)
    for (const std::string& target : cfg.targets)
      for (ModelKind m : cfg.models) {
        JobResult job;
        job.city = d.city;
        job.target = target;
        job.model = m;
        report.jobs.push_back(std::move(job));
      }

  std::mutex log_mutex;
  auto run_phase = [&](bool ensemble_phase) {
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < report.jobs.size(); ++i)
      if ((report.jobs[i].model == ModelKind::ensemble) == ensemble_phase)
        pending.push_back(i);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t at = next.fetch_add(1);
        if (at >= pending.size()) return;
        JobResult& job = report.jobs[pending[at]];
        try {
          detail::run_single_job(cfg, data, job);
        } catch (const std::exception& e) {
          job.ok = false;
          job.error = e.what();
        }
        if (verbose) {
          std::lock_guard<std::mutex> lock(log_mutex);
          std::printf("[%s/%s/%s] %s%s\n", job.city.c_str(),
                      job.target.c_str(), model_kind_name(job.model),
                      job.ok ? "done" : "FAILED: ",
                      job.ok ? "" : job.error.c_str());
          std::fflush(stdout);
        }
      }
    };
    const std::size_t n_threads = std::min(cfg.workers, pending.size());
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  };

  run_phase(false);
  if (wants_ensemble) run_phase(true);

  for (const JobResult& job : report.jobs)
    if (!job.ok) report.all_ok = false;

  detail::write_metrics_tables(cfg, report.jobs);
  report.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  detail::write_manifest(cfg, report);
  return report;
}

}  // namespace kanwx
