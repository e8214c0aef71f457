// Acceptance suite: one line per criterion, nonzero exit on any failure.
//
// Criterion 7 needs the real NASA POWER daily CSVs (two cities). Point
// KANWX_DATA_DIR at a directory containing abidjan.csv and kigali.csv to
// enable it; without the files the criterion is reported as SKIP.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "kanwx/benchmark.hpp"
#include "kanwx/data.hpp"
#include "kanwx/ensemble.hpp"
#include "kanwx/metrics.hpp"
#include "kanwx/model.hpp"
#include "kanwx/spline.hpp"
#include "kanwx/train.hpp"

namespace fs = std::filesystem;
using namespace kanwx;

namespace {

struct Outcome {
  enum Status { pass, fail, skip } status = fail;
  std::string detail;
};

Outcome ok(std::string detail) { return {Outcome::pass, std::move(detail)}; }
Outcome bad(std::string detail) { return {Outcome::fail, std::move(detail)}; }
Outcome skipped(std::string detail) {
  return {Outcome::skip, std::move(detail)};
}

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "kanwx_acceptance";
  fs::create_directories(dir);
  return dir;
}

// ---- shared helpers ----

double gradcheck(std::vector<Tensor> inputs,
                 const std::function<Tensor()>& forward, double h = 1e-5) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  std::vector<std::vector<double>> autodiff;
  {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(forward());
  }
  for (Tensor& t : inputs) {
    t.ensure_grad();
    autodiff.push_back(t.grad_copy());
    t.clear_grad();
  }
  double max_rel = 0.0;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = t.data()[i];
      t.data()[i] = orig + h;
      const double fp = forward().value();
      t.data()[i] = orig - h;
      const double fm = forward().value();
      t.data()[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double g = autodiff[ti][i];
      const double rel =
          std::abs(g - fd) / std::max({1.0, std::abs(g), std::abs(fd)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

std::vector<Tensor> random_steps(std::size_t w, std::size_t batch,
                                 std::size_t d, Rng& rng, double lo,
                                 double hi) {
  std::vector<Tensor> steps(w);
  for (std::size_t t = 0; t < w; ++t) {
    steps[t] = Tensor::zeros({batch, d});
    for (std::size_t i = 0; i < steps[t].numel(); ++i)
      steps[t].data()[i] = rng.uniform(lo, hi);
  }
  return steps;
}

// Smooth noiseless daily series whose target is exactly predictable from
// the window.
WeatherSeries sinusoid_series(std::size_t n) {
  WeatherSeries s;
  s.city = "synthetic";
  s.days.resize(n);
  s.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.days[i] = days_from_civil(2015, 1, 1) + static_cast<std::int64_t>(i);
    const double t = static_cast<double>(i);
    for (std::size_t f = 0; f < kFeatureCount; ++f)
      s.values[i][f] = 15.0 + static_cast<double>(f) +
                       6.0 * std::sin(0.19 * t + 0.8 * static_cast<double>(f)) +
                       2.0 * std::sin(0.53 * t);
  }
  return s;
}

WindowedDataset overfit_dataset(ScalingFamily family) {
  const std::size_t window = 14;
  const std::size_t n_samples = 72;  // 64 train + 4 val + 4 test
  WeatherSeries series = sinusoid_series(n_samples + window);
  MinMaxScaler scaler =
      MinMaxScaler::fit(series, scaler_fit_rows(64, window, 1), family);
  WindowedDataset ds(series, scaler, window, 1, 0);
  ds.set_split({64, 4, 4});
  return ds;
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// ---- criteria ----

Outcome criterion_gradients() {
  double worst = 0;
  auto note = [&](double err) { worst = std::max(worst, err); };

  {  // dense layer
    Rng rng(101);
    DenseLayer layer(5, 3, rng);
    Tensor x = Tensor::zeros({4, 5});
    for (std::size_t i = 0; i < x.numel(); ++i)
      x.data()[i] = rng.uniform(-2, 2);
    note(gradcheck({layer.weight(), layer.bias(), x},
                   [&] { return mean(kanwx::tanh(layer.forward(x))); }));
  }
  {  // lstm + gru + bidirectional wrappers through the full model
    for (ModelKind kind : {ModelKind::lstm, ModelKind::gru, ModelKind::bilstm,
                           ModelKind::bigru}) {
      Rng rng(102);
      ModelHParams hp;
      hp.hidden = 4;
      hp.dropout = 0.0;
      auto model = make_model(kind, 2, 3, hp, rng);
      Rng xr(103);
      Batch batch;
      batch.steps = random_steps(3, 2, 2, xr, -1, 1);
      std::vector<Tensor> checked;
      for (auto& p : model->parameters()) checked.push_back(p.tensor);
      note(gradcheck(checked, [&] {
        return mean(model->forward(batch, false, nullptr));
      }));
    }
  }
  {  // KAN layer, all parameter groups plus the input
    Rng rng(104);
    KanLayer layer(3, 2, SplineGrid{}, Activation::silu, rng);
    Tensor x = Tensor::zeros({2, 3});
    for (std::size_t i = 0; i < x.numel(); ++i)
      x.data()[i] = rng.uniform(0.05, 0.95);
    note(gradcheck(
        {layer.coeff(), layer.base_weight(), layer.spline_weight(), x},
        [&] { return sum(mul(layer.forward(x), layer.forward(x))); }));
  }
  {  // TKAN cell including spline coefficients
    Rng rng(105);
    TkanCell cell(2, 3, 3, 2, SplineGrid{}, Activation::silu, rng);
    Tensor x = Tensor::zeros({2, 2});
    for (std::size_t i = 0; i < x.numel(); ++i)
      x.data()[i] = rng.uniform(0.1, 0.9);
    auto state = cell.zero_state(2);
    for (Tensor& s : state.sub)
      for (std::size_t i = 0; i < s.numel(); ++i)
        s.data()[i] = rng.uniform(-0.5, 0.5);
    std::vector<NamedParam> params;
    cell.append_params("c", params);
    std::vector<Tensor> checked = {x};
    for (auto& p : params) checked.push_back(p.tensor);
    note(gradcheck(checked, [&] {
      auto [h, next] = cell.step(x, state);
      return sum(h);
    }));
  }
  {  // ensemble logits
    Rng rng(106);
    Tensor logits = Tensor::zeros({4});
    for (std::size_t i = 0; i < 4; ++i) logits.data()[i] = rng.uniform(-1, 1);
    Tensor p = Tensor::zeros({6, 4});
    Tensor y = Tensor::zeros({6, 1});
    for (std::size_t i = 0; i < p.numel(); ++i) p.data()[i] = rng.uniform(-2, 2);
    for (std::size_t i = 0; i < y.numel(); ++i) y.data()[i] = rng.uniform(-2, 2);
    note(gradcheck({logits}, [&] {
      return mse(matmul(p, reshape(softmax(logits), {4, 1})), y);
    }));
  }

  if (worst < 1e-4) return ok("max relative error " + fmt(worst));
  return bad("max relative error " + fmt(worst) + " >= 1e-4");
}

Outcome criterion_spline() {
  SplineGrid grid{};
  Rng rng(7);
  double worst_pu = 0;
  for (int t = 0; t < 1000; ++t) {
    const double x = rng.uniform(0.0, 1.0);
    const auto b = bspline_basis(grid, x);
    double total = 0;
    for (double v : b) total += v;
    worst_pu = std::max(worst_pu, std::abs(total - 1.0));
  }
  if (worst_pu > 1e-10)
    return bad("partition of unity off by " + fmt(worst_pu));

  // Local support: each cubic basis vanishes outside k+1 knot spans.
  for (std::size_t i = 0; i < grid.basis_count(); ++i) {
    const double lo = grid.knot(i);
    const double hi = grid.knot(i + grid.degree + 1);
    for (int t = 0; t <= 500; ++t) {
      const double x = static_cast<double>(t) / 500.0;
      const double v = bspline_basis(grid, x)[i];
      if ((x < lo - 1e-12 || x > hi + 1e-12) && v != 0.0)
        return bad("basis " + std::to_string(i) + " leaks outside its span");
    }
  }

  // Cardinal cubic values at every knot.
  for (std::size_t j = 0; j <= grid.intervals; ++j) {
    const double x = grid.lo + static_cast<double>(j) * grid.spacing();
    auto b = bspline_basis(grid, x);
    std::vector<double> nz;
    for (double v : b)
      if (std::abs(v) > 1e-14) nz.push_back(v);
    if (nz.size() != 3) return bad("knot " + std::to_string(j) + " support");
    std::sort(nz.begin(), nz.end());
    if (std::abs(nz[0] - 1.0 / 6.0) > 1e-12 ||
        std::abs(nz[1] - 1.0 / 6.0) > 1e-12 ||
        std::abs(nz[2] - 2.0 / 3.0) > 1e-12)
      return bad("cardinal values at knot " + std::to_string(j));
  }
  return ok("partition of unity within " + fmt(worst_pu) +
            "; support and 2/3,1/6 knot values exact");
}

Outcome criterion_pipeline() {
  const fs::path csv = work_dir() / "pipeline5115.csv";
  {
    std::ofstream out(csv);
    out << "DATE";
    for (const char* n : kFeatureNames) out << "," << n;
    out << "\n";
    for (std::size_t i = 0; i < 5115; ++i) {
      out << format_iso_date(days_from_civil(2010, 1, 1) +
                             static_cast<std::int64_t>(i));
      for (std::size_t f = 0; f < kFeatureCount; ++f) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), ",%.6f",
                      10.0 + static_cast<double>(f) +
                          std::sin(0.01 * static_cast<double>(i) +
                                   static_cast<double>(f)));
        out << buf;
      }
      out << "\n";
    }
  }
  const WeatherSeries series =
      ingest_csv(csv.string(), MissingPolicy::reject, "synthetic");
  if (series.size() != 5115) return bad("ingest row count");
  const WindowedDataset ds = build_dataset(series, ScalingFamily::rnn, 14, 1,
                                           feature_index("T2M"));
  if (ds.sample_count() != 5101)
    return bad("got " + std::to_string(ds.sample_count()) + " windows");
  const SplitCounts& s = ds.split();
  if (s.train != 3672 || s.val != 408 || s.test != 1021)
    return bad("split " + std::to_string(s.train) + "/" +
               std::to_string(s.val) + "/" + std::to_string(s.test));

  // Leakage assertions: the guard refuses any training batch touching an
  // index at or past the training boundary, and scaler statistics come from
  // training rows only.
  bool guard_fired = false;
  try {
    make_batch(ds, {s.train}, false, s.train);
  } catch (const ContractError&) {
    guard_fired = true;
  }
  if (!guard_fired) return bad("leakage guard did not fire");
  const std::size_t fit_rows = ds.scaler().fit_rows();
  if (fit_rows != scaler_fit_rows(s.train, 14, 1))
    return bad("scaler saw " + std::to_string(fit_rows) + " rows");
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    double lo = series.values[0][f], hi = series.values[0][f];
    for (std::size_t i = 1; i < fit_rows; ++i) {
      lo = std::min(lo, series.values[i][f]);
      hi = std::max(hi, series.values[i][f]);
    }
    if (lo != ds.scaler().feature_min(f) || hi != ds.scaler().feature_max(f))
      return bad("scaler stats do not match train rows");
  }
  return ok("5115 rows -> 5101 windows -> 3672/408/1021; leakage guard holds");
}

Outcome criterion_metrics() {
  const MetricsReport hand = compute_metrics({2, 4}, {1, 5});
  if (hand.mse != 1.0 || hand.rmse != 1.0 || hand.mae != 1.0 ||
      hand.r2 != 0.0 || hand.mape != 37.5)
    return bad("hand case y=[2,4], yhat=[1,5]");

  Rng rng(99);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.below(300));
    std::vector<double> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.uniform(-100, 100);
      p[i] = y[i] + rng.uniform(-10, 10);
    }
    const MetricsReport r = compute_metrics(y, p);
    // element-loop oracle, one pass per metric
    double se = 0, ae = 0, pe = 0, mean_y = 0;
    for (std::size_t i = 0; i < n; ++i) se += (y[i] - p[i]) * (y[i] - p[i]);
    for (std::size_t i = 0; i < n; ++i) ae += std::abs(y[i] - p[i]);
    for (std::size_t i = 0; i < n; ++i)
      pe += std::abs(y[i] - p[i]) / std::max(std::abs(y[i]), 1e-8);
    for (std::size_t i = 0; i < n; ++i) mean_y += y[i];
    mean_y /= static_cast<double>(n);
    double tot = 0;
    for (std::size_t i = 0; i < n; ++i)
      tot += (y[i] - mean_y) * (y[i] - mean_y);
    auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max(1.0, std::abs(b));
    };
    const double nn = static_cast<double>(n);
    worst = std::max(worst, rel(r.mse, se / nn));
    worst = std::max(worst, rel(r.rmse, std::sqrt(se / nn)));
    worst = std::max(worst, rel(r.mae, ae / nn));
    worst = std::max(worst, rel(r.mape, 100.0 * pe / nn));
    if (tot > 0) worst = std::max(worst, rel(r.r2, 1.0 - se / tot));
  }
  if (worst > 1e-12) return bad("oracle disagreement " + fmt(worst));
  return ok("loop oracle agreement within " + fmt(worst) + "; hand case exact");
}

Outcome criterion_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<ModelKind> kinds = {
      ModelKind::lstm,      ModelKind::gru,   ModelKind::bilstm,
      ModelKind::bigru,     ModelKind::kan,   ModelKind::tkan,
      ModelKind::tkan5,     ModelKind::tkan_gelu, ModelKind::tkan_mish};

  std::string detail;
  std::vector<std::unique_ptr<Model>> rnn_bases(4);
  double worst = 0;
  for (ModelKind kind : kinds) {
    WindowedDataset ds = overfit_dataset(scaling_family(kind));
    TrainConfig cfg;
    cfg.kind = kind;
    cfg.window = 14;
    cfg.epochs = 500;  // batch 16 over 64 samples: 4 optimizer steps/epoch
    cfg.batch_size = 16;
    cfg.lr = 0.02;
    cfg.patience = 500;
    cfg.seed = 404;
    cfg.target = "T2M";
    cfg.hp.hidden = 8;
    cfg.hp.sub_hidden = 8;
    cfg.hp.dropout = 0.0;
    cfg.hp.kan_hidden = {8};
    auto [model, result] = train_model(cfg, ds);
    const double train_mse = eval_split_mse(*model, ds, 0, 64, 64);
    worst = std::max(worst, train_mse);
    if (train_mse >= 1e-3)
      return bad(std::string(model_kind_name(kind)) + " train MSE " +
                 fmt(train_mse) + " after " +
                 std::to_string(result.history.epochs.size()) + " steps");
    switch (kind) {
      case ModelKind::lstm: rnn_bases[0] = std::move(model); break;
      case ModelKind::gru: rnn_bases[1] = std::move(model); break;
      case ModelKind::bilstm: rnn_bases[2] = std::move(model); break;
      case ModelKind::bigru: rnn_bases[3] = std::move(model); break;
      default: break;
    }
  }

  // Tenth variant: the ensemble over the four overfit recurrent bases.
  {
    WindowedDataset ds = overfit_dataset(ScalingFamily::rnn);
    EnsembleModel ensemble(std::move(rnn_bases));
    auto preds = [&](std::size_t start, std::size_t count) {
      std::vector<std::size_t> idx(count);
      for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
      Batch batch = make_batch(ds, idx, false, ds.sample_count());
      return std::make_pair(ensemble.base_predictions(batch), batch.targets);
    };
    auto [p_train, y_train] = preds(0, 64);
    auto [p_val, y_val] = preds(64, 4);
    Rng rng(405);
    ensemble_fit(ensemble, p_train, y_train, p_val, y_val, 500, 16, 0.02, 500,
                 rng);
    Tape::NoGrad no_grad;
    const double train_mse = mse(ensemble.combine(p_train), y_train).value();
    worst = std::max(worst, train_mse);
    if (train_mse >= 1e-3)
      return bad("Ensemble train MSE " + fmt(train_mse));
  }

  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  if (secs >= 300.0)
    return bad("took " + fmt(secs) + " s, budget is 300 s");
  return ok("all 10 variants under 1e-3 (worst " + fmt(worst) + ") in " +
            fmt(secs) + " s");
}

Outcome criterion_kan_sine() {
  Rng rng(606);
  KanNetwork net({1, 1}, SplineGrid{}, Activation::silu, rng);
  Tensor x_train = Tensor::zeros({200, 1});
  Tensor y_train = Tensor::zeros({200, 1});
  for (std::size_t i = 0; i < 200; ++i) {
    const double x = rng.uniform(0.0, 1.0);
    x_train.data()[i] = x;
    y_train.data()[i] = std::sin(6.283185307179586 * x);
  }
  Tensor x_test = Tensor::zeros({50, 1});
  std::vector<double> y_test(50);
  for (std::size_t i = 0; i < 50; ++i) {
    const double x = rng.uniform(0.0, 1.0);
    x_test.data()[i] = x;
    y_test[i] = std::sin(6.283185307179586 * x);
  }

  std::vector<NamedParam> params;
  net.append_params("kan", params);
  Adam opt(params, 0.02);
  for (int step = 0; step < 4000; ++step) {
    Tape tape;
    {
      Tape::Scope scope(tape);
      tape.backward(mse(net.forward(x_train), y_train));
    }
    opt.step();
  }

  Tensor pred = net.forward(x_test);
  std::vector<double> yp(50);
  for (std::size_t i = 0; i < 50; ++i) yp[i] = pred.data()[i];
  const MetricsReport r = compute_metrics(y_test, yp);
  if (r.r2 > 0.999)
    return ok("held-out R2 = " + std::to_string(r.r2));
  return bad("held-out R2 = " + std::to_string(r.r2) + " <= 0.999");
}

Outcome criterion_qualitative() {
  const char* env = std::getenv("KANWX_DATA_DIR");
  fs::path data_dir = env ? fs::path(env) : fs::path("data");
  const fs::path abidjan = data_dir / "abidjan.csv";
  const fs::path kigali = data_dir / "kigali.csv";
  if (!fs::exists(abidjan) || !fs::exists(kigali))
    return skipped("NASA POWER CSVs not found (set KANWX_DATA_DIR to a "
                   "directory with abidjan.csv and kigali.csv)");

  BenchmarkConfig cfg;
  cfg.seed = 2024;
  cfg.output_dir = (work_dir() / "qualitative_out").string();
  cfg.workers = std::max(1u, std::thread::hardware_concurrency());
  cfg.datasets = {{"abidjan", abidjan.string()}, {"kigali", kigali.string()}};
  cfg.targets = {"T2M", "PS"};
  cfg.models = {ModelKind::lstm,  ModelKind::gru,  ModelKind::bilstm,
                ModelKind::bigru, ModelKind::ensemble, ModelKind::kan};
  const BenchmarkReport report = run_benchmark(cfg, true);
  if (!report.all_ok) return bad("some jobs failed; see manifest");

  auto r2_of = [&](const std::string& city, const std::string& target,
                   ModelKind m) {
    for (const JobResult& j : report.jobs)
      if (j.city == city && j.target == target && j.model == m)
        return j.original.r2;
    return std::numeric_limits<double>::quiet_NaN();
  };

  std::string detail;
  for (const std::string& city : {std::string("abidjan"), std::string("kigali")}) {
    const double kan = r2_of(city, "T2M", ModelKind::kan);
    if (!(kan > 0.95))
      return bad(city + " T2M: KAN R2 " + fmt(kan) + " <= 0.95");
    for (ModelKind m : {ModelKind::lstm, ModelKind::gru, ModelKind::bilstm,
                        ModelKind::bigru, ModelKind::ensemble})
      if (!(kan > r2_of(city, "T2M", m)))
        return bad(city + " T2M: KAN does not beat " + model_kind_name(m));
    detail += city + " KAN T2M R2 " + fmt(kan) + "; ";
  }
  for (const std::string& city : {std::string("abidjan"), std::string("kigali")}) {
    const double kan = r2_of(city, "PS", ModelKind::kan);
    bool some_rnn_beats = false;
    for (ModelKind m : {ModelKind::lstm, ModelKind::gru, ModelKind::bilstm,
                        ModelKind::bigru})
      if (r2_of(city, "PS", m) > kan) some_rnn_beats = true;
    if (!some_rnn_beats)
      return bad(city + " PS: no recurrent baseline beats KAN");
  }
  return ok(detail + "pressure favors the recurrent baselines");
}

Outcome criterion_determinism() {
  const fs::path base = work_dir() / "determinism";
  fs::remove_all(base);
  fs::create_directories(base);
  const fs::path csv = base / "city.csv";
  {
    std::ofstream out(csv);
    out << "DATE";
    for (const char* n : kFeatureNames) out << "," << n;
    out << "\n";
    for (std::size_t i = 0; i < 300; ++i) {
      out << format_iso_date(days_from_civil(2012, 1, 1) +
                             static_cast<std::int64_t>(i));
      for (std::size_t f = 0; f < kFeatureCount; ++f) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), ",%.8f",
                      5.0 + static_cast<double>(f) +
                          2.0 * std::sin(0.11 * static_cast<double>(i) +
                                         static_cast<double>(f)));
        out << buf;
      }
      out << "\n";
    }
  }
  BenchmarkConfig cfg;
  cfg.seed = 31337;
  cfg.workers = 2;
  cfg.window = 6;
  cfg.epochs = 3;
  cfg.patience = 3;
  cfg.batch_size = 32;
  cfg.datasets = {{"city", csv.string()}};
  cfg.targets = {"T2M"};
  cfg.models = {ModelKind::gru, ModelKind::kan, ModelKind::tkan};
  cfg.model_overrides["GRU"] = {{"hidden", 6}};
  cfg.model_overrides["KAN"] = {{"kan_hidden", {6}}};
  cfg.model_overrides["TKAN"] = {{"hidden", 5}, {"sub_hidden", 5}};

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
  };
  cfg.output_dir = (base / "out1").string();
  run_benchmark(cfg);
  cfg.output_dir = (base / "out2").string();
  run_benchmark(cfg);

  if (slurp(base / "out1" / "metrics_T2M.csv") !=
      slurp(base / "out2" / "metrics_T2M.csv"))
    return bad("metrics tables differ between identical runs");
  if (slurp(base / "out1" / "metrics_T2M.txt") !=
      slurp(base / "out2" / "metrics_T2M.txt"))
    return bad("text tables differ between identical runs");
  for (const char* model : {"GRU", "KAN", "TKAN"}) {
    const fs::path a = base / "out1" / "city" / "T2M" / model;
    const fs::path b = base / "out2" / "city" / "T2M" / model;
    for (const char* f : {"predictions.csv", "history.csv", "checkpoint.bin"})
      if (slurp(a / f) != slurp(b / f))
        return bad(std::string(model) + "/" + f + " differs between runs");
  }
  return ok("metrics, series, histories and checkpoints byte-identical");
}

Outcome criterion_ensemble() {
  Rng rng(77);
  ModelHParams hp;
  hp.hidden = 3;
  hp.dropout = 0.0;
  std::vector<std::unique_ptr<Model>> bases;
  for (ModelKind k : {ModelKind::lstm, ModelKind::gru, ModelKind::bilstm,
                      ModelKind::bigru})
    bases.push_back(make_model(k, 2, 14, hp, rng));
  EnsembleModel model(std::move(bases));

  double worst_sum = 0;
  for (int trial = 0; trial < 500; ++trial) {
    for (std::size_t i = 0; i < kEnsembleSize; ++i)
      model.logits().data()[i] = rng.uniform(-30, 30);
    const auto c = model.coefficients();
    double total = 0;
    for (double v : c) total += v;
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
  }
  if (worst_sum > 1e-12)
    return bad("coefficient sum off by " + fmt(worst_sum));

  for (std::size_t i = 0; i < kEnsembleSize; ++i)
    model.logits().data()[i] = rng.uniform(-2, 2);
  Tensor p = Tensor::zeros({1000, kEnsembleSize});
  for (std::size_t i = 0; i < p.numel(); ++i)
    p.data()[i] = rng.uniform(-25, 25);
  Tensor out = model.combine(p);
  for (std::size_t r = 0; r < 1000; ++r) {
    double lo = p.at(r, 0), hi = p.at(r, 0);
    for (std::size_t j = 1; j < kEnsembleSize; ++j) {
      lo = std::min(lo, p.at(r, j));
      hi = std::max(hi, p.at(r, j));
    }
    if (out.at(r, 0) < lo - 1e-12 || out.at(r, 0) > hi + 1e-12)
      return bad("prediction escapes the convex hull at row " +
                 std::to_string(r));
  }
  return ok("coefficient sum within " + fmt(worst_sum) +
            "; 1000 hull checks hold");
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient suite (finite differences, all layers)",
       criterion_gradients},
      {2, "spline suite (partition of unity, support, cardinal values)",
       criterion_spline},
      {3, "pipeline arithmetic (5115 rows, splits, leakage)",
       criterion_pipeline},
      {4, "metric oracle (element-loop agreement, hand case)",
       criterion_metrics},
      {5, "overfit capability (10 variants, synthetic sinusoid)",
       criterion_overfit},
      {6, "KAN smooth-fit anchor (sin(2*pi*x), held-out R2)",
       criterion_kan_sine},
      {7, "qualitative reproduction (NASA POWER, best effort)",
       criterion_qualitative},
      {8, "determinism (byte-identical reruns)", criterion_determinism},
      {9, "ensemble properties (simplex weights, convex hull)",
       criterion_ensemble},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = bad(std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    const char* label = outcome.status == Outcome::pass ? "PASS"
                        : outcome.status == Outcome::skip ? "SKIP"
                                                          : "FAIL";
    std::printf("[%s] criterion %d: %s (%.1f s) - %s\n", label, c.id, c.name,
                secs, outcome.detail.c_str());
    std::fflush(stdout);
    if (outcome.status == Outcome::fail) ++failures;
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
