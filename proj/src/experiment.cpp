#include "vfm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "vfm/error.hpp"
#include "vfm/rng.hpp"
#include "vfm/text.hpp"

namespace vfm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed tags, one per random decision in an experiment.
enum SeedTag : std::uint64_t { kTagD1 = 11, kTagSubset = 12, kTagModel = 13, kTagTrain = 14, kTagNoise = 15 };

std::uint64_t seed_for(std::uint64_t master, SeedTag tag, std::uint64_t a, std::uint64_t b = 0) {
  return derive_seed(derive_seed(derive_seed(master, tag), a), b);
}

std::uint64_t kind_id(ModelKind k) { return static_cast<std::uint64_t>(k) + 1; }

template <class F>
void parallel_for(std::size_t n, int jobs, F&& body) {
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) guarded(i);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<double> predict_rows(const Model& model, std::span<const Observation> rows) {
  std::vector<double> out(rows.size());
  if (rows.empty()) return out;
  const auto f = model.features(rows);
  ModelWorkspace ws;
  model.predict_batch(f, ws, out);
  return out;
}

double mae_vs_truth(std::span<const double> pred, std::span<const Observation> rows) {
  if (rows.empty()) return kNaN;
  std::vector<double> truth(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) truth[i] = rows[i].q_true;
  return mae(pred, truth);
}

struct TrainedTrial {
  TrialResult result;
  std::optional<Model> model;
};

TrainedTrial fit_and_score(const ExperimentConfig& cfg, ModelKind kind, int trial, double sigma_assumed,
                           std::span<const Observation> train_rows, std::span<const Observation> val_rows,
                           std::span<const Observation> test_rows) {
  TrainedTrial out;
  auto& r = out.result;
  r.experiment = cfg.experiment;
  r.model = kind;
  r.trial = trial;
  const auto t = static_cast<std::uint64_t>(trial);
  Model model = build(kind, default_context(), cfg.net, seed_for(cfg.master_seed, kTagModel, t, kind_id(kind)));
  TrainConfig tc = cfg.train_config(kind);
  tc.seed = seed_for(cfg.master_seed, kTagTrain, t, kind_id(kind));
  if (!tc.sigma_eps_assumed) tc.sigma_eps_assumed = sigma_assumed;
  if (val_rows.empty()) tc.patience = 0;
  auto [trained, report] = train(std::move(model), train_rows, val_rows, tc);
  r.epochs = report.epochs_run;
  r.best_epoch = report.best_epoch;
  r.diverged = report.diverged;
  r.mae_validation = mae_vs_truth(predict_rows(trained, val_rows), val_rows);
  r.mae_test = mae_vs_truth(predict_rows(trained, test_rows), test_rows);
  if (!std::isfinite(r.mae_test)) r.diverged = true;
  out.model = std::move(trained);
  return out;
}

void sort_trials(std::vector<TrialResult>& trials, const std::vector<ModelKind>& order) {
  auto rank = [&](ModelKind k) { return std::find(order.begin(), order.end(), k) - order.begin(); };
  std::stable_sort(trials.begin(), trials.end(), [&](const TrialResult& a, const TrialResult& b) {
    if (a.model != b.model) return rank(a.model) < rank(b.model);
    if (a.control != b.control) return a.control < b.control;
    return a.trial < b.trial;
  });
}

Dataset d1_for(const ExperimentConfig& cfg) {
  Dataset ds = sample_d1(cfg.d1_size, 0.0, seed_for(cfg.master_seed, kTagD1, 0));
  return split_random(std::move(ds), cfg.d1_test, cfg.val_fraction, seed_for(cfg.master_seed, kTagD1, 1));
}

ExperimentReport run_temporal(const ExperimentConfig& cfg, int which) {
  cfg.validate();
  ExperimentReport rep;
  rep.config = cfg;
  Dataset ds = which == 2 ? generate_d2(cfg.temporal_size, cfg.master_seed)
                          : generate_d3(cfg.temporal_size, cfg.master_seed);
  const auto train_rows = ds.subset(ds.split.train);
  const auto val_rows = ds.subset(ds.split.val);
  const auto test_rows = ds.subset(ds.split.test);

  const std::size_t n_tasks = cfg.models.size() * static_cast<std::size_t>(cfg.trials);
  std::vector<TrialResult> results(n_tasks);
  parallel_for(n_tasks, cfg.jobs, [&](std::size_t i) {
    const ModelKind kind = cfg.models[i % cfg.models.size()];
    const int trial = static_cast<int>(i / cfg.models.size());
    auto tt = fit_and_score(cfg, kind, trial, 1.0, train_rows, val_rows, test_rows);
    tt.result.control = which;
    tt.result.predictions = predict_rows(*tt.model, ds.rows);
    results[i] = std::move(tt.result);
  });
  sort_trials(results, cfg.models);
  rep.trials = std::move(results);
  rep.summary = aggregate(rep.trials, cfg.experiment, cfg.trials);

  MaeTable table;
  for (auto kind : cfg.models) {
    std::vector<const TrialResult*> ok;
    for (const auto& t : rep.trials)
      if (t.model == kind && !t.diverged) ok.push_back(&t);
    table.models.push_back(kind);
    if (ok.empty()) {
      table.mae_validation.push_back(kNaN);
      table.mae_test.push_back(kNaN);
      table.trial.push_back(-1);
      continue;
    }
    std::stable_sort(ok.begin(), ok.end(), [](auto* a, auto* b) { return a->mae_test < b->mae_test; });
    const auto* med = ok[(ok.size() - 1) / 2];
    table.mae_validation.push_back(med->mae_validation);
    table.mae_test.push_back(med->mae_test);
    table.trial.push_back(med->trial);
  }
  rep.table = std::move(table);
  rep.timeline = std::move(ds);
  return rep;
}

void write_stamp(std::ostream& out, const OutputStamp& stamp) {
  out << "# tool=vfm " << stamp.tool_version << " master_seed=" << stamp.master_seed
      << " config=" << stamp.config_digest << '\n';
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

}  // namespace

double mae(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw Error(ErrorCode::InvalidInput, "mae: empty input");
  if (predictions.size() != targets.size()) throw Error(ErrorCode::Shape, "mae: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) s += std::abs(predictions[i] - targets[i]);
  return s / static_cast<double>(predictions.size());
}

QuantileSummary quantiles(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidInput, "quantiles: empty input");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
  };
  return {at(0.25), at(0.5), at(0.75)};
}

TrainConfig ExperimentConfig::train_config(ModelKind kind) const {
  auto it = train_by_model.find(kind);
  return it != train_by_model.end() ? it->second : train;
}

void ExperimentConfig::validate() const {
  if (experiment != "exp1" && experiment != "exp2" && experiment != "exp3" && experiment != "exp4")
    throw Error(ErrorCode::Usage, "unknown experiment '" + experiment + "'");
  if (trials < 1) throw Error(ErrorCode::Usage, "trials must be at least 1");
  if (models.empty()) throw Error(ErrorCode::Usage, "model list is empty");
  net.validate();
  train.validate();
  for (const auto& [k, c] : train_by_model) c.validate();
  if (experiment == "exp1") {
    if (n_grid.empty()) throw Error(ErrorCode::Usage, "exp1 needs a non-empty N grid");
    for (auto n : n_grid)
      if (n < 1 || n > d1_size - d1_test) throw Error(ErrorCode::Usage, "exp1 N outside the D1 training pool");
  }
  if (experiment == "exp2") {
    if (noise_levels.empty()) throw Error(ErrorCode::Usage, "exp2 needs noise levels");
    for (auto s : noise_levels)
      if (!(s > 0)) throw Error(ErrorCode::Usage, "exp2 noise levels must be positive");
  }
}

const CellSummary* ExperimentReport::cell(ModelKind model, double control, const std::string& metric) const {
  for (const auto& c : summary)
    if (c.model == model && c.control == control && c.metric == metric) return &c;
  return nullptr;
}

ExperimentReport run_exp1(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentReport rep;
  rep.config = cfg;
  const Dataset d1 = d1_for(cfg);
  std::vector<std::size_t> pool = d1.split.train;
  pool.insert(pool.end(), d1.split.val.begin(), d1.split.val.end());
  std::sort(pool.begin(), pool.end());
  const auto test_rows = d1.subset(d1.split.test);

  const std::size_t per_trial = cfg.n_grid.size() * cfg.models.size();
  const std::size_t n_tasks = per_trial * static_cast<std::size_t>(cfg.trials);
  std::vector<TrialResult> results(n_tasks);
  parallel_for(n_tasks, cfg.jobs, [&](std::size_t i) {
    const int trial = static_cast<int>(i / per_trial);
    const std::size_t n = cfg.n_grid[(i % per_trial) / cfg.models.size()];
    const ModelKind kind = cfg.models[i % cfg.models.size()];

    // Fresh random subset per (trial, N), shared by all models.
    std::vector<std::size_t> idx = pool;
    CounterRng rng(seed_for(cfg.master_seed, kTagSubset, static_cast<std::uint64_t>(trial), n));
    shuffle(idx, rng);
    idx.resize(n);
    const std::size_t n_val = n < 2 ? 0 : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n))));
    std::vector<std::size_t> val_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    const auto train_rows = d1.subset(train_idx);
    const auto val_rows = d1.subset(val_idx);

    auto tt = fit_and_score(cfg, kind, trial, 1.0, train_rows, val_rows, test_rows);
    tt.result.control = static_cast<double>(n);
    results[i] = std::move(tt.result);
  });
  sort_trials(results, cfg.models);
  rep.trials = std::move(results);
  rep.summary = aggregate(rep.trials, cfg.experiment, cfg.trials);
  return rep;
}

ExperimentReport run_exp2(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentReport rep;
  rep.config = cfg;
  const Dataset d1 = d1_for(cfg);
  const auto test_rows = d1.subset(d1.split.test);

  std::vector<double> levels{0.0};
  levels.insert(levels.end(), cfg.noise_levels.begin(), cfg.noise_levels.end());
  const std::size_t per_trial = levels.size() * cfg.models.size();
  const std::size_t n_tasks = per_trial * static_cast<std::size_t>(cfg.trials);
  std::vector<TrialResult> results(n_tasks);
  parallel_for(n_tasks, cfg.jobs, [&](std::size_t i) {
    const int trial = static_cast<int>(i / per_trial);
    const double sigma = levels[(i % per_trial) / cfg.models.size()];
    const ModelKind kind = cfg.models[i % cfg.models.size()];

    // One standard-normal draw per row and trial, scaled by σ_ε for every level.
    const CounterRng noise(seed_for(cfg.master_seed, kTagNoise, static_cast<std::uint64_t>(trial)));
    auto noisy = [&](const std::vector<std::size_t>& idx) {
      auto rows = d1.subset(idx);
      for (auto& o : rows) o.y = o.q_true + sigma * noise.normal_at(static_cast<std::uint64_t>(o.t));
      return rows;
    };
    const auto train_rows = noisy(d1.split.train);
    const auto val_rows = noisy(d1.split.val);

    auto tt = fit_and_score(cfg, kind, trial, sigma > 0 ? sigma : 1.0, train_rows, val_rows, test_rows);
    tt.result.control = sigma;
    // Validation error reported against the targets the model was selected on.
    if (!val_rows.empty()) {
      std::vector<double> y(val_rows.size());
      for (std::size_t j = 0; j < y.size(); ++j) y[j] = val_rows[j].y;
      tt.result.mae_validation = mae(predict_rows(*tt.model, val_rows), y);
    }
    results[i] = std::move(tt.result);
  });

  // Relative error against the same trial's noise-free run.
  for (auto& r : results) {
    const TrialResult* base = nullptr;
    for (const auto& b : results)
      if (b.model == r.model && b.trial == r.trial && b.control == 0.0) base = &b;
    if (!base || base->diverged || !(base->mae_test > 0)) {
      r.relative_error = kNaN;
      if (r.control != 0.0) r.diverged = r.diverged || (base && base->diverged);
    } else {
      r.relative_error = r.control == 0.0 ? 1.0 : r.mae_test / base->mae_test;
    }
  }
  sort_trials(results, cfg.models);
  rep.trials = std::move(results);
  rep.summary = aggregate(rep.trials, cfg.experiment, cfg.trials);
  return rep;
}

ExperimentReport run_exp3(const ExperimentConfig& cfg) { return run_temporal(cfg, 2); }
ExperimentReport run_exp4(const ExperimentConfig& cfg) { return run_temporal(cfg, 3); }

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == "exp1") return run_exp1(cfg);
  if (cfg.experiment == "exp2") return run_exp2(cfg);
  if (cfg.experiment == "exp3") return run_exp3(cfg);
  if (cfg.experiment == "exp4") return run_exp4(cfg);
  throw Error(ErrorCode::Usage, "unknown experiment '" + cfg.experiment + "'");
}

std::vector<CellSummary> aggregate(const std::vector<TrialResult>& trials, const std::string& experiment,
                                   int expected_trials) {
  std::vector<std::string> metrics{"mae_validation", "mae_test"};
  if (experiment == "exp2") metrics.push_back("relative_error");

  std::vector<std::pair<ModelKind, double>> cells;
  for (const auto& t : trials) {
    const std::pair<ModelKind, double> key{t.model, t.control};
    if (std::find(cells.begin(), cells.end(), key) == cells.end()) cells.push_back(key);
  }
  std::vector<CellSummary> out;
  for (const auto& [model, control] : cells) {
    for (const auto& metric : metrics) {
      if (metric == "relative_error" && control == 0.0) continue;
      CellSummary c;
      c.model = model;
      c.control = control;
      c.metric = metric;
      std::vector<double> values;
      for (const auto& t : trials) {
        if (t.model != model || t.control != control) continue;
        if (t.diverged) {
          ++c.n_diverged;
          continue;
        }
        const double v = metric == "mae_test" ? t.mae_test : metric == "mae_validation" ? t.mae_validation : t.relative_error;
        if (std::isfinite(v)) values.push_back(v);
      }
      c.n_ok = values.size();
      c.q = values.empty() ? QuantileSummary{kNaN, kNaN, kNaN} : quantiles(values);
      c.flagged = static_cast<double>(c.n_ok) < 0.8 * static_cast<double>(expected_trials);
      out.push_back(c);
    }
  }
  return out;
}

void write_quantiles_csv(const std::vector<CellSummary>& summary, const std::string& experiment,
                         const std::filesystem::path& path, const OutputStamp& stamp) {
  std::ostringstream out;
  write_stamp(out, stamp);
  out << "experiment,model,control,metric,p25,p50,p75,n_ok,n_diverged,flagged\n";
  for (const auto& c : summary)
    out << experiment << ',' << model_name(c.model) << ',' << format_double(c.control) << ',' << c.metric << ','
        << format_double(c.q.p25) << ',' << format_double(c.q.p50) << ',' << format_double(c.q.p75) << ','
        << c.n_ok << ',' << c.n_diverged << ',' << (c.flagged ? 1 : 0) << '\n';
  write_file(path, out.str());
}

std::string format_table(const MaeTable& table) {
  std::ostringstream out;
  char buf[64];
  out << "       ";
  for (auto k : table.models) {
    std::snprintf(buf, sizeof buf, "%9s", std::string(model_name(k)).c_str());
    out << buf;
  }
  out << '\n';
  auto row = [&](const char* label, const std::vector<double>& v) {
    std::snprintf(buf, sizeof buf, "%-7s", label);
    out << buf;
    for (double x : v) {
      std::snprintf(buf, sizeof buf, "%9.3f", x);
      out << buf;
    }
    out << '\n';
  };
  row("MAE_v", table.mae_validation);
  row("MAE_t", table.mae_test);
  return out.str();
}

ReportFiles write_report(const ExperimentReport& report, const std::filesystem::path& dir, const OutputStamp& stamp) {
  std::filesystem::create_directories(dir);
  const std::string& exp = report.config.experiment;
  ReportFiles files;
  files.tidy = dir / (exp + "_tidy.csv");
  files.quantiles = dir / (exp + "_quantiles.csv");

  std::ostringstream tidy;
  write_stamp(tidy, stamp);
  tidy << "experiment,model,control,trial,metric,value\n";
  for (const auto& t : report.trials) {
    auto line = [&](const char* metric, double v) {
      tidy << exp << ',' << model_name(t.model) << ',' << format_double(t.control) << ',' << t.trial << ','
           << metric << ',' << format_double(v) << '\n';
    };
    line("mae_validation", t.mae_validation);
    line("mae_test", t.mae_test);
    if (exp == "exp2") line("relative_error", t.relative_error);
    line("epochs", t.epochs);
    line("best_epoch", t.best_epoch);
    line("diverged", t.diverged ? 1.0 : 0.0);
  }
  write_file(files.tidy, tidy.str());
  write_quantiles_csv(report.summary, exp, files.quantiles, stamp);

  if (report.table) {
    files.table = dir / (exp + "_table.csv");
    std::ostringstream tab;
    write_stamp(tab, stamp);
    tab << "metric";
    for (auto k : report.table->models) tab << ',' << model_name(k);
    tab << '\n';
    auto row = [&](const char* label, const std::vector<double>& v) {
      tab << label;
      for (double x : v) tab << ',' << format_double(x);
      tab << '\n';
    };
    row("MAE_v", report.table->mae_validation);
    row("MAE_t", report.table->mae_test);
    tab << "trial";
    for (int t : report.table->trial) tab << ',' << t;
    tab << '\n';
    write_file(*files.table, tab.str());
  }

  if (report.table && report.timeline) {
    files.series = dir / (exp + "_series.csv");
    const auto& ds = *report.timeline;
    std::vector<const char*> role(ds.rows.size(), "none");
    for (auto i : ds.split.train) role[i] = "train";
    for (auto i : ds.split.val) role[i] = "val";
    for (auto i : ds.split.test) role[i] = "test";
    std::ostringstream ser;
    write_stamp(ser, stamp);
    if (!ds.split.val.empty()) ser << "# train_test_boundary_t=" << ds.rows[ds.split.test.front()].t << '\n';
    ser << "model,trial,t,split,q_true,prediction,abs_error\n";
    for (std::size_t m = 0; m < report.table->models.size(); ++m) {
      const int trial = report.table->trial[m];
      const ModelKind kind = report.table->models[m];
      for (const auto& t : report.trials) {
        if (t.model != kind || t.trial != trial) continue;
        for (std::size_t i = 0; i < ds.rows.size() && i < t.predictions.size(); ++i)
          ser << model_name(kind) << ',' << trial << ',' << ds.rows[i].t << ',' << role[i] << ','
              << format_double(ds.rows[i].q_true) << ',' << format_double(t.predictions[i]) << ','
              << format_double(std::abs(t.predictions[i] - ds.rows[i].q_true)) << '\n';
      }
    }
    write_file(*files.series, ser.str());
  }
  return files;
}

std::vector<TidyRow> read_tidy_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<TidyRow> rows;
  std::string line;
  bool header = false;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      if (line != "experiment,model,control,trial,metric,value")
        throw Error(ErrorCode::Io, "unexpected tidy header in " + path.string());
      header = true;
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 6) throw Error(ErrorCode::Io, "tidy row has wrong field count");
    rows.push_back({std::string(fields[0]), std::string(fields[1]), parse_double(fields[2]),
                    static_cast<int>(parse_double(fields[3])), std::string(fields[4]), parse_double(fields[5])});
  }
  if (!header) throw Error(ErrorCode::Io, "tidy file has no header: " + path.string());
  return rows;
}

std::vector<TrialResult> trials_from_tidy(const std::vector<TidyRow>& rows) {
  std::vector<TrialResult> out;
  for (const auto& r : rows) {
    const ModelKind kind = parse_model_kind(r.model);
    auto it = std::find_if(out.begin(), out.end(), [&](const TrialResult& t) {
      return t.model == kind && t.control == r.control && t.trial == r.trial;
    });
    if (it == out.end()) {
      TrialResult t;
      t.experiment = r.experiment;
      t.model = kind;
      t.control = r.control;
      t.trial = r.trial;
      out.push_back(t);
      it = out.end() - 1;
    }
    if (r.metric == "mae_validation") it->mae_validation = r.value;
    else if (r.metric == "mae_test") it->mae_test = r.value;
    else if (r.metric == "relative_error") it->relative_error = r.value;
    else if (r.metric == "epochs") it->epochs = static_cast<int>(r.value);
    else if (r.metric == "best_epoch") it->best_epoch = static_cast<int>(r.value);
    else if (r.metric == "diverged") it->diverged = r.value != 0.0;
  }
  return out;
}

}  // namespace vfm
