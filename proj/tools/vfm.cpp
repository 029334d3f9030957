// vfm: dataset generation, single-model training and experiment runs.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vfm/config.hpp"
#include "vfm/dataset.hpp"
#include "vfm/error.hpp"
#include "vfm/experiment.hpp"
#include "vfm/model.hpp"
#include "vfm/rng.hpp"
#include "vfm/text.hpp"
#include "vfm/trainer.hpp"

namespace {

using namespace vfm;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::string stamp_line(const OutputStamp& s) {
  return "tool=vfm " + s.tool_version + " master_seed=" + std::to_string(s.master_seed) + " config=" + s.config_digest;
}

struct GenArgs {
  std::string set;
  std::size_t n = kD1Size;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::string out = ".";
};

int cmd_gen_data(const GenArgs& a) {
  if (a.n < 1) throw Error(ErrorCode::Usage, "--n must be at least 1");
  if (!(a.sigma >= 0)) throw Error(ErrorCode::Usage, "--sigma must be non-negative");
  Dataset ds;
  if (a.set == "d1") {
    ds = sample_d1(a.n, a.sigma, a.seed);
  } else {
    ds = a.set == "d2" ? generate_d2(a.n, a.seed) : generate_d3(a.n, a.seed);
    if (a.sigma > 0) {
      const NoiseSpec noise{a.sigma, derive_seed(a.seed, 2)};
      for (auto& o : ds.rows) o.y = add_noise(o.q_true, noise, static_cast<std::uint64_t>(o.t));
      ds.provenance.sigma_eps = a.sigma;
    }
  }
  fs::path path = a.out;
  if (fs::is_directory(path) || a.out.empty() || a.out.back() == '/') {
    fs::create_directories(path);
    path /= dataset_file_name(ds.provenance);
  }
  const nlohmann::json args{{"set", a.set}, {"n", a.n}, {"sigma", a.sigma}, {"seed", a.seed}};
  const OutputStamp stamp{VFM_VERSION, a.seed, fnv1a_hex(args.dump())};
  write_dataset_csv(ds, path, {stamp_line(stamp)});
  double mean = 0.0;
  for (const auto& o : ds.rows) mean += o.q_true;
  mean /= static_cast<double>(ds.rows.size());
  std::printf("wrote %s\n", path.string().c_str());
  std::printf("generator=%s n=%zu sigma=%s seed=%llu redraws=%zu train=%zu val=%zu test=%zu mean_q=%.4f\n",
              ds.provenance.generator.c_str(), ds.rows.size(), format_double(a.sigma).c_str(),
              static_cast<unsigned long long>(a.seed), ds.provenance.redraws, ds.split.train.size(),
              ds.split.val.size(), ds.split.test.size(), mean);
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string model;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

double truth_mae(const Model& m, const std::vector<Observation>& rows) {
  if (rows.empty()) return std::nan("");
  const auto f = m.features(rows);
  ModelWorkspace ws;
  std::vector<double> pred(rows.size()), truth(rows.size());
  m.predict_batch(f, ws, pred);
  for (std::size_t i = 0; i < rows.size(); ++i) truth[i] = rows[i].q_true;
  return mae(pred, truth);
}

int cmd_train(const TrainArgs& a) {
  ModelKind kind;
  try {
    kind = parse_model_kind(a.model);
  } catch (const Error& e) {
    throw Error(ErrorCode::Usage, e.what());
  }
  RunConfig rc;
  if (!a.config.empty()) rc = load_run_config(a.config);
  if (!fs::exists(a.data)) throw Error(ErrorCode::Usage, "dataset file not found: " + a.data);
  const Dataset ds = read_dataset_csv(a.data);
  if (ds.split.train.empty()) throw Error(ErrorCode::Usage, "dataset has an empty training split");

  TrainConfig tc = rc.experiment.train_config(kind);
  const std::uint64_t seed = a.seed.value_or(rc.experiment.master_seed);
  tc.seed = derive_seed(seed, 1);
  if (ds.split.val.empty()) tc.patience = 0;
  Model model = build(kind, default_context(), rc.experiment.net, derive_seed(seed, 2));
  auto [trained, report] = train(std::move(model), ds, tc);

  const OutputStamp stamp{VFM_VERSION, seed, config_digest(tc, rc.experiment.net)};
  fs::create_directories(a.out);
  const std::string base = std::string(model_name(kind)) == "M*" ? "Mstar" : std::string(model_name(kind));
  const fs::path ckpt = fs::path(a.out) / (base + "_checkpoint.json");
  const fs::path curve = fs::path(a.out) / (base + "_loss.csv");

  auto record = nlohmann::json::parse(checkpoint(trained));
  record["stamp"] = {{"tool_version", stamp.tool_version},
                     {"master_seed", stamp.master_seed},
                     {"config_digest", stamp.config_digest},
                     {"data", fs::path(a.data).filename().string()}};
  std::ofstream(ckpt, std::ios::binary) << record.dump(2) << '\n';

  std::ofstream lc(curve, std::ios::binary);
  lc << "# " << stamp_line(stamp) << '\n' << "epoch,train_loss,val_mse\n";
  for (std::size_t i = 0; i < report.train_loss.size(); ++i)
    lc << i + 1 << ',' << format_double(report.train_loss[i]) << ',' << format_double(report.val_loss[i]) << '\n';
  if (!lc) throw Error(ErrorCode::Io, "cannot write " + curve.string());

  const double mae_v = truth_mae(trained, ds.subset(ds.split.val));
  const double mae_t = truth_mae(trained, ds.subset(ds.split.test));
  std::printf("model=%s epochs=%d best_epoch=%d\n", std::string(model_name(kind)).c_str(), report.epochs_run,
              report.best_epoch);
  std::printf("mae_validation=%.6g mae_test=%.6g\n", mae_v, mae_t);
  std::printf("wrote %s\nwrote %s\n", ckpt.string().c_str(), curve.string().c_str());
  if (report.diverged) {
    std::fprintf(stderr, "training diverged: %s\n", report.message.c_str());
    return kExitRuntime;
  }
  return kExitOk;
}

struct RunArgs {
  std::string config;
  std::optional<int> trials;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void print_summary(const ExperimentReport& rep) {
  const auto& exp = rep.config.experiment;
  if (rep.table) {
    std::printf("%s", format_table(*rep.table).c_str());
    return;
  }
  const char* metric = exp == "exp2" ? "relative_error" : "mae_test";
  std::printf("%-5s %10s %10s %10s %10s %5s\n", "model", exp == "exp2" ? "sigma" : "N", "p25", "p50", "p75", "ok");
  for (const auto& c : rep.summary) {
    if (c.metric != metric) continue;
    std::printf("%-5s %10s %10.4g %10.4g %10.4g %5zu%s\n", std::string(model_name(c.model)).c_str(),
                format_double(c.control).c_str(), c.q.p25, c.q.p50, c.q.p75, c.n_ok, c.flagged ? " *" : "");
  }
}

int cmd_run_exp(const RunArgs& a) {
  if (!fs::exists(a.config)) throw Error(ErrorCode::Usage, "config file not found: " + a.config);
  RunConfig rc = load_run_config(a.config);
  if (a.trials) rc.experiment.trials = *a.trials;
  if (a.jobs) rc.experiment.jobs = *a.jobs;
  if (a.seed) rc.experiment.master_seed = *a.seed;
  if (!a.out.empty()) rc.output_dir = a.out;
  if (rc.experiment.jobs < 1) throw Error(ErrorCode::Usage, "--jobs must be at least 1");
  try {
    rc.experiment.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Usage, e.what());
  }

  const auto rep = run_experiment(rc.experiment);
  const OutputStamp stamp{VFM_VERSION, rc.experiment.master_seed, config_digest(rc)};
  const auto files = write_report(rep, rc.output_dir, stamp);
  print_summary(rep);
  std::printf("wrote %s\nwrote %s\n", files.tidy.string().c_str(), files.quantiles.string().c_str());
  if (files.table) std::printf("wrote %s\n", files.table->string().c_str());
  if (files.series) std::printf("wrote %s\n", files.series->string().c_str());

  std::size_t diverged = 0;
  for (const auto& t : rep.trials) diverged += t.diverged ? 1 : 0;
  for (const auto& c : rep.summary)
    if (c.flagged) std::fprintf(stderr, "warning: cell %s/%s/%s has only %zu surviving trials\n",
                                std::string(model_name(c.model)).c_str(), format_double(c.control).c_str(),
                                c.metric.c_str(), c.n_ok);
  if (!rep.trials.empty() && diverged == rep.trials.size()) {
    std::fprintf(stderr, "every trial diverged\n");
    return kExitRuntime;
  }
  return kExitOk;
}

struct ReportArgs {
  std::string tidy;
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  if (!fs::exists(a.tidy)) throw Error(ErrorCode::Usage, "tidy file not found: " + a.tidy);
  const auto rows = read_tidy_csv(a.tidy);
  if (rows.empty()) throw Error(ErrorCode::Usage, "tidy file has no rows");
  const auto trials = trials_from_tidy(rows);
  int max_trial = 0;
  for (const auto& t : trials) max_trial = std::max(max_trial, t.trial + 1);
  const std::string exp = rows.front().experiment;

  // Carry the original run's stamp through.
  OutputStamp stamp{VFM_VERSION, 0, "unknown"};
  std::ifstream f(a.tidy);
  std::string first;
  std::getline(f, first);
  if (first.rfind("# tool=vfm ", 0) == 0) {
    std::istringstream in(first.substr(2));
    std::string tok;
    while (in >> tok) {
      if (tok.rfind("master_seed=", 0) == 0) stamp.master_seed = std::stoull(tok.substr(12));
      if (tok.rfind("config=", 0) == 0) stamp.config_digest = tok.substr(7);
    }
  }
  const auto summary = aggregate(trials, exp, max_trial);
  const fs::path out = a.out.empty() ? fs::path(a.tidy).parent_path() / (exp + "_quantiles.csv") : fs::path(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_quantiles_csv(summary, exp, out, stamp);
  std::printf("aggregated %zu trials into %zu cells\nwrote %s\n", trials.size(), summary.size(),
              out.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual flow metering: data generation, training and experiments"};
  app.set_version_flag("--version", std::string("vfm ") + VFM_VERSION);
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic dataset file");
  g->add_option("--set", gen.set, "Dataset generator")->required()->check(CLI::IsMember({"d1", "d2", "d3"}));
  g->add_option("--n", gen.n, "Number of rows");
  g->add_option("--sigma", gen.sigma, "Measurement noise standard deviation");
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--out", gen.out, "Output file, or a directory for the default file name");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one model on a dataset file");
  t->add_option("--data", tr.data, "Dataset file")->required();
  t->add_option("--model", tr.model, "Model kind: M, M*, D, H-E, H-A")->required();
  t->add_option("--config", tr.config, "Run configuration file (train and net sections are used)");
  t->add_option("--seed", tr.seed, "Seed for initialization and shuffling");
  t->add_option("--out", tr.out, "Output directory");

  RunArgs run;
  auto* r = app.add_subcommand("run-exp", "Run an experiment from a configuration file");
  r->add_option("--config", run.config, "Run configuration file")->required();
  r->add_option("--trials", run.trials, "Override the trial count");
  r->add_option("--jobs", run.jobs, "Maximum parallel training runs");
  r->add_option("--seed", run.seed, "Override the master seed");
  r->add_option("--out", run.out, "Override the output directory");

  ReportArgs rep;
  auto* p = app.add_subcommand("report", "Re-aggregate an existing tidy results file");
  p->add_option("--tidy", rep.tidy, "Tidy results file")->required();
  p->add_option("--out", rep.out, "Quantile file to write (default: next to the tidy file)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return cmd_gen_data(gen);
    if (*t) return cmd_train(tr);
    if (*r) return cmd_run_exp(run);
    if (*p) return cmd_report(rep);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == ErrorCode::Usage ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
