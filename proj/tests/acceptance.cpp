// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//
// Usage: vfm_acceptance [--jobs N] [--only 1,2,...] [--expect-fail 2,5]
// Exit status is 0 when every criterion outside --expect-fail passes and
// every criterion inside it fails; an unexpected pass is also an error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "vfm/choke.hpp"
#include "vfm/dataset.hpp"
#include "vfm/experiment.hpp"
#include "vfm/model.hpp"
#include "vfm/process.hpp"
#include "vfm/rng.hpp"
#include "vfm/trainer.hpp"

using namespace vfm;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kMaster = 20240601;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double mean_truth(std::span<const Observation> rows) {
  double s = 0;
  for (const auto& o : rows) s += o.q_true;
  return s / static_cast<double>(rows.size());
}

double test_mae(const Model& m, const std::vector<Observation>& rows) {
  const auto f = m.features(rows);
  ModelWorkspace ws;
  std::vector<double> pred(rows.size()), truth(rows.size());
  m.predict_batch(f, ws, pred);
  for (std::size_t i = 0; i < rows.size(); ++i) truth[i] = rows[i].q_true;
  return mae(pred, truth);
}

// 1. Oracle recovery on the standard D1 split (6400 train + 1600 validation).
Outcome oracle_recovery() {
  const Dataset ds = sample_d1(kD1Size, 0.0, derive_seed(kMaster, 1));
  const auto test = ds.subset(ds.split.test);
  const double mu = mean_truth(test);
  auto [mstar, r1] = train(build(ModelKind::MechOracle, default_context(), std::nullopt, 1), ds, TrainConfig{});
  auto [mech, r2] = train(build(ModelKind::MechPlain, default_context(), std::nullopt, 1), ds, TrainConfig{});
  const double a = test_mae(mstar, test) / mu, b = test_mae(mech, test) / mu;
  return {a < 0.01 && b > 0.05,
          "M* MAE/mean=" + fmt("%.5f", a) + " (<0.01), M MAE/mean=" + fmt("%.4f", b) + " (>0.05)"};
}

ExperimentConfig base_config(const std::string& exp, int trials, int jobs) {
  ExperimentConfig c;
  c.experiment = exp;
  c.trials = trials;
  c.jobs = jobs;
  c.master_seed = kMaster;
  return c;
}

double d1_test_mean(const ExperimentConfig& c) {
  // Same D1 draw and split as the experiment runner.
  const auto rep_seed = derive_seed(derive_seed(derive_seed(c.master_seed, 11), 0), 0);
  Dataset ds = sample_d1(c.d1_size, 0.0, rep_seed);
  ds = split_random(std::move(ds), c.d1_test, c.val_fraction, derive_seed(derive_seed(derive_seed(c.master_seed, 11), 1), 0));
  return mean_truth(ds.subset(ds.split.test));
}

// 2. Small-data ordering.
Outcome small_data(int jobs) {
  auto c = base_config("exp1", 10, jobs);
  c.n_grid = {8, 80, 800};
  const auto rep = run_exp1(c);
  const double mu = d1_test_mean(c);
  auto p50 = [&](ModelKind k, double n) {
    const auto* cell = rep.cell(k, n, "mae_test");
    return cell ? cell->q.p50 : std::numeric_limits<double>::quiet_NaN();
  };
  const double d8 = p50(ModelKind::DataDriven, 8), ha8 = p50(ModelKind::HybridArea, 8);
  bool ok = d8 > ha8;
  std::string detail = "N=8 p50: D=" + fmt("%.3f", d8) + " H-A=" + fmt("%.3f", ha8) + "; N=800 p50/mean:";
  for (auto k : {ModelKind::DataDriven, ModelKind::HybridError, ModelKind::HybridArea, ModelKind::MechOracle}) {
    const double r = p50(k, 800) / mu;
    ok = ok && r < 0.01;
    detail += " " + std::string(model_name(k)) + "=" + fmt("%.4f", r);
  }
  return {ok, detail + " (each <0.01)"};
}

// 3. Noise robustness.
Outcome noise(int jobs) {
  auto c = base_config("exp2", 10, jobs);
  c.models = {ModelKind::MechOracle, ModelKind::MechPlain, ModelKind::DataDriven};
  const auto rep = run_exp2(c);
  bool ok = true;
  std::string detail;
  for (auto k : {ModelKind::MechPlain, ModelKind::MechOracle}) {
    double lo = 1e300, hi = -1e300;
    for (double s : c.noise_levels) {
      const auto* cell = rep.cell(k, s, "relative_error");
      const double v = cell ? cell->q.p50 : std::numeric_limits<double>::quiet_NaN();
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ok = ok && v >= 0.8 && v <= 1.5;
    }
    detail += std::string(model_name(k)) + " p50 ratio in [" + fmt("%.3g", lo) + ", " + fmt("%.3g", hi) + "]; ";
  }
  const auto* d1 = rep.cell(ModelKind::DataDriven, 1, "relative_error");
  const auto* d10 = rep.cell(ModelKind::DataDriven, 10, "relative_error");
  const double r1 = d1 ? d1->q.p50 : std::nan(""), r10 = d10 ? d10->q.p50 : std::nan("");
  ok = ok && r10 > r1;
  detail += "D p50 ratio sigma=1 " + fmt("%.3f", r1) + ", sigma=10 " + fmt("%.3f", r10);
  return {ok, detail + " (M, M* within [0.8, 1.5]; D rising)"};
}

std::string table_text(const MaeTable& t) {
  std::string s;
  for (std::size_t i = 0; i < t.models.size(); ++i)
    s += std::string(i ? " " : "") + std::string(model_name(t.models[i])) + "=" + fmt("%.3f", t.mae_validation[i]) + "/" +
         fmt("%.3f", t.mae_test[i]);
  return s + " (MAE_v/MAE_t)";
}

double table_value(const MaeTable& t, ModelKind k, bool test) {
  const auto i = static_cast<std::size_t>(std::find(t.models.begin(), t.models.end(), k) - t.models.begin());
  return test ? t.mae_test[i] : t.mae_validation[i];
}

// 4. Exp 3 orderings.
Outcome exp3(int jobs) {
  const auto rep = run_exp3(base_config("exp3", 5, jobs));
  const auto& t = *rep.table;
  const double mx = *std::max_element(t.mae_test.begin(), t.mae_test.end());
  const double mn = *std::min_element(t.mae_test.begin(), t.mae_test.end());
  const bool m_max = table_value(t, ModelKind::MechPlain, true) == mx;
  const bool star_min = table_value(t, ModelKind::MechOracle, true) == mn;
  const double best_h = std::min(table_value(t, ModelKind::HybridArea, true), table_value(t, ModelKind::HybridError, true));
  const bool hybrid = best_h <= 1.2 * table_value(t, ModelKind::DataDriven, true);
  return {m_max && star_min && hybrid, table_text(t)};
}

// 5. Exp 4 orderings.
Outcome exp4(int jobs) {
  const auto rep = run_exp4(base_config("exp4", 5, jobs));
  const auto& t = *rep.table;
  const double star = table_value(t, ModelKind::MechOracle, true), mech = table_value(t, ModelKind::MechPlain, true),
               data = table_value(t, ModelKind::DataDriven, true);
  const bool order = star < mech && mech < data;
  const std::vector<ModelKind> pool{ModelKind::MechPlain, ModelKind::HybridArea, ModelKind::HybridError,
                                    ModelKind::DataDriven};
  auto best = [&](bool test) {
    return *std::min_element(pool.begin(), pool.end(),
                             [&](ModelKind a, ModelKind b) { return table_value(t, a, test) < table_value(t, b, test); });
  };
  const bool select = best(false) == best(true);
  return {order && select, table_text(t) + "; validation-best " + std::string(model_name(best(false))) +
                               ", test-best " + std::string(model_name(best(true)))};
}

// 6. Numerical property suite.
double g_ref(double y, double x, double vg1, double vl, double k, double n) {
  const double vg2 = vg1 * std::pow(y, -1.0 / k);
  const double a1 = (1 - x) * vl / (x * vg1), a2 = (1 - x) * vl / (x * vg2), kk = k / (k - 1);
  return (kk + a1 * (1 - y)) / (kk + n / 2 + n * a2 + n / 2 * a2 * a2);
}

Outcome properties() {
  std::mt19937_64 gen(kMaster);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const FluidSpec fluid;
  std::string detail;
  bool all = true;
  auto record = [&](const char* tag, bool ok, const std::string& what) {
    all = all && ok;
    detail += std::string(detail.empty() ? "" : "; ") + tag + (ok ? " ok" : " FAIL") + " (" + what + ")";
  };

  // (a) model gradients against central differences.
  {
    const auto train_rows = sample_d1(300, 0.0, 5).rows;
    const auto points = sample_d1(50, 0.0, 6).rows;
    double worst = 0;
    std::size_t checked = 0, kinks = 0;
    for (auto kind : kAllModels) {
      Model m = build(kind, default_context(), default_net_spec(), 3);
      m.set_normalization(fit_normalization(train_rows, kind));
      std::normal_distribution<double> nd(0.0, 0.3);
      for (std::size_t i = m.physics_count(); i < m.params().size(); ++i) m.params().values[i] = nd(gen);
      for (const auto& o : points) {
        const auto f = m.features(std::span<const Inputs>(&o.x, 1));
        ModelWorkspace ws;
        double y = 0, up = 0, dn = 0;
        const double one = 1.0;
        m.predict_batch(f, ws, std::span<double>(&y, 1));
        std::vector<double> g(m.params().size(), 0.0);
        m.accumulate_gradient(f, ws, std::span<const double>(&one, 1), g);
        auto& v = m.params().values;
        for (std::size_t i = 0; i < v.size(); ++i) {
          const double orig = v[i], h = i < m.physics_count() ? 1e-6 * std::abs(orig) : 1e-5;
          v[i] = orig + h;
          m.predict_batch(f, ws, std::span<double>(&up, 1));
          v[i] = orig - h;
          m.predict_batch(f, ws, std::span<double>(&dn, 1));
          v[i] = orig;
          const double fd = (up - dn) / (2 * h);
          // A ReLU kink inside [orig - h, orig + h] shows up as disagreeing one-sided slopes.
          const double floor = 1e-6 * std::max(1.0, std::abs(y));
          if (std::abs((up - y) - (y - dn)) / h > 1e-3 * std::max({std::abs(fd), floor})) {
            ++kinks;
            continue;
          }
          worst = std::max(worst, std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), floor}));
          ++checked;
        }
      }
    }
    record("a", worst <= 1e-4 && kinks * 100 < checked,
           "worst rel " + fmt("%.2e", worst) + " over " + std::to_string(checked) + " entries, " +
               std::to_string(kinks) + " kink straddles skipped");
  }
  // (b) y_c against bisection.
  {
    double worst = 0;
    for (int i = 0; i < 2000; ++i) {
      const double x = 1e-4 + (1 - 1e-4) * u01(gen);
      const double vg1 = gas_specific_volume((20 + 60 * u01(gen)) * 1e5, 280 + 80 * u01(gen), fluid);
      const double vl = 1.0 / (850 + 150 * u01(gen));
      const double n = polytropic_exponent(x, fluid);
      double lo = 1e-12, hi = 1.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mid - g_ref(mid, x, vg1, vl, fluid.k, n) < 0 ? lo : hi) = mid;
      }
      worst = std::max(worst, std::abs(critical_pressure_ratio(x, vg1, vl, fluid.k, n) - 0.5 * (lo + hi)));
    }
    record("b", worst <= 1e-6, "max |dy| " + fmt("%.2e", worst));
  }
  // (c) phase split mass conservation.
  {
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
      const double eo = 0.8 * u01(gen), ew = 0.2 * u01(gen), m = 100 * u01(gen) + 1e-3;
      const auto q = split_volumetric(m, {eo, 1 - eo - ew, ew}, fluid);
      const double back = fluid.rho_oil_sc * q.q_oil + fluid.rho_gas_sc * q.q_gas + fluid.rho_water_sc * q.q_water;
      worst = std::max(worst, std::abs(back - m) / m);
    }
    record("c", worst <= 1e-9, "max rel " + fmt("%.2e", worst));
  }
  // (d) critical plateau: d(mdot)/d(p2) = 0 below y_c.
  {
    int bad = 0;
    ChokeParams p;
    p.slip_enabled = true;
    for (int i = 0; i < 2000; ++i) {
      const double eo = 0.6 * u01(gen), ew = 0.1;
      const PhaseFractions fr{eo, 1 - eo - ew, ew};
      const double p1 = (30 + 40 * u01(gen)) * 1e5, t1 = 313 + 20 * u01(gen);
      const double x = fr.eta_gas;
      const double yc = critical_pressure_ratio(x, gas_specific_volume(p1, t1, fluid), 1.0 / liquid_density(fr, fluid),
                                                fluid.k, polytropic_exponent(x, fluid));
      const double r = (yc - 1e-3) * u01(gen);
      const double h = 1e-3 * p1;
      const double a = sachdeva_mass_flow({p1, std::max(r * p1 - h, 1.0), t1, 50}, fr, fluid, p, 1e-4);
      const double b = sachdeva_mass_flow({p1, std::max(r * p1, 1.0) + 0.0, t1, 50}, fr, fluid, p, 1e-4);
      if (r * p1 - h > 0 && a != b) ++bad;
    }
    record("d", bad == 0, std::to_string(bad) + " non-flat pairs");
  }
  // (e) epoch decomposition of the MAP objective.
  {
    const auto rows = sample_d1(1000, 2.0, 4).rows;
    double worst = 0;
    for (auto kind : kAllModels) {
      Model m = build(kind, default_context(), default_net_spec(), 2);
      m.set_normalization(fit_normalization(rows, kind));
      for (auto& v : m.params().values) v += 0.01;
      const double full = map_loss(m, rows, 2.0);
      double summed = 0;
      for (std::size_t s = 0; s < rows.size(); s += 64)
        summed += map_loss(m, std::span<const Observation>(rows).subspan(s, std::min<std::size_t>(64, rows.size() - s)),
                           2.0, rows.size());
      worst = std::max(worst, std::abs(summed - full) / full);
    }
    record("e", worst <= 1e-9, "max rel " + fmt("%.2e", worst));
  }
  // (f) convex surrogate against the closed-form ridge solution.
  {
    auto rows = sample_d1(400, 0.0, 10).rows;
    Model m = build(ModelKind::MechPlain, default_context(), std::nullopt, 1);
    auto& p = m.params();
    p.lower[1] = p.upper[1] = p.values[1];
    p.values[0] = 1.0;
    const auto f = m.features(rows);
    ModelWorkspace ws;
    std::vector<double> s(rows.size());
    m.predict_batch(f, ws, s);
    p.values[0] = p.priors[0].mean;
    const double sigma = 5.0;
    std::normal_distribution<double> nd(0.0, sigma);
    double sy = 0, ss = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      rows[i].y = 1.1 * s[i] + nd(gen);
      sy += rows[i].y * s[i];
      ss += s[i] * s[i];
    }
    const double mu = p.priors[0].mean, tau = p.priors[0].sd;
    const double ridge = (sy / (sigma * sigma) + mu / (tau * tau)) / (ss / (sigma * sigma) + 1 / (tau * tau));
    TrainConfig c;
    c.sigma_eps_assumed = sigma;
    c.patience = 0;
    c.batch_size = rows.size();
    c.max_epochs = 4000;
    c.learning_rate_phys = 1e-3;
    auto [fit, rep] = train(m, rows, {}, c);
    const double rel = std::abs(fit.params().values[0] - ridge) / std::abs(ridge);
    record("f", rel <= 1e-3, "rel " + fmt("%.2e", rel));
  }
  return {all, detail};
}

// 7. Byte-identical tidy files from two runs with the same master seed.
Outcome reproducibility(int jobs) {
  auto c = base_config("exp1", 3, 1);
  c.n_grid = {8, 80};
  const fs::path root = fs::temp_directory_path() / "vfm_acceptance_repro";
  fs::remove_all(root);
  const OutputStamp stamp{VFM_VERSION, c.master_seed, "acceptance"};
  const auto a = write_report(run_experiment(c), root / "a", stamp);
  c.jobs = std::max(jobs, 2);
  const auto b = write_report(run_experiment(c), root / "b", stamp);
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
  };
  const std::string ta = slurp(a.tidy), tb = slurp(b.tidy);
  fs::remove_all(root);
  return {!ta.empty() && ta == tb, std::to_string(ta.size()) + " bytes, serial vs " + std::to_string(c.jobs) +
                                       " workers " + (ta == tb ? "identical" : "differ")};
}

// 8. Calibrated mean flow on a fresh D1 draw.
Outcome calibration() {
  const auto xs = sample_d1_inputs(kD1Size, derive_seed(kMaster, 8));
  double s = 0;
  for (const auto& x : xs) s += evaluate_process(default_process(), x);
  const double mean = s / static_cast<double>(xs.size());
  return {mean >= 40.7 && mean <= 42.7, "mean noise-free flow " + fmt("%.3f", mean) + " (in [40.7, 42.7])"};
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ','))
    if (!tok.empty()) out.insert(std::stoi(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vfm acceptance suite"};
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string only, expect_fail;
  app.add_option("--jobs", jobs, "Parallel training runs");
  app.add_option("--only", only, "Comma-separated criteria to run");
  app.add_option("--expect-fail", expect_fail, "Comma-separated criteria known not to hold");
  CLI11_PARSE(app, argc, argv);
  const auto selected = parse_list(only);
  const auto xfail = parse_list(expect_fail);

  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"oracle recovery", oracle_recovery}},
      {2, {"small-data ordering", [&] { return small_data(jobs); }}},
      {3, {"noise robustness", [&] { return noise(jobs); }}},
      {4, {"exp3 orderings", [&] { return exp3(jobs); }}},
      {5, {"exp4 orderings", [&] { return exp4(jobs); }}},
      {6, {"numerical properties", properties}},
      {7, {"reproducibility", [&] { return reproducibility(jobs); }}},
      {8, {"calibration", calibration}},
  };

  int unexpected = 0;
  for (const auto& [id, entry] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = entry.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool expected = xfail.count(id) ? !o.pass : o.pass;
    unexpected += expected ? 0 : 1;
    std::printf("%s criterion %d (%s): %s [%.0f s]%s\n", o.pass ? "PASS" : "FAIL", id, entry.first, o.detail.c_str(),
                secs, xfail.count(id) ? (o.pass ? " [unexpected pass]" : " [known]") : "");
    std::fflush(stdout);
  }
  return unexpected == 0 ? 0 : 1;
}
