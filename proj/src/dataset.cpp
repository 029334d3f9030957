#include "vfm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "vfm/error.hpp"
#include "vfm/rng.hpp"
#include "vfm/text.hpp"

namespace vfm {

namespace {

// Sub-stream ids under a dataset seed.
constexpr std::uint64_t kInputStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kSplitStream = 3;

constexpr double kD2P2 = 22.0;
constexpr double kD2T1 = 50.0;
constexpr double kD2EtaOil = 0.85;
constexpr double kD2EtaWater = 0.02;
constexpr double kD3EtaWater = 0.02;

Observation make_row(std::int64_t t, const Inputs& x, const ProcessSpec& process) {
  Observation o;
  o.t = t;
  o.x = x;
  o.eta_gas = 1.0 - x.eta_oil - x.eta_water;
  o.q_true = evaluate_process(process, x);
  o.y = o.q_true;
  return o;
}

const char* kColumns[] = {"t", "p1_bar", "p2_bar", "T1_C", "u_pct", "eta_oil",
                          "eta_gas", "eta_water", "q_true", "y", "split"};

// 2000 test / 600 validation; the same 40 % / 12 % proportions for short series.
Dataset split_temporal_default(Dataset ds) {
  const std::size_t n = ds.rows.size();
  if (n > kTemporalTest + kTemporalVal) return split_temporal(std::move(ds), kTemporalTest, kTemporalVal);
  const auto n_test = static_cast<std::size_t>(0.4 * static_cast<double>(n));
  const auto n_val = static_cast<std::size_t>(0.12 * static_cast<double>(n));
  return split_temporal(std::move(ds), n_test, n_val);
}

}  // namespace

std::vector<Observation> Dataset::subset(const std::vector<std::size_t>& idx) const {
  std::vector<Observation> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(rows.at(i));
  return out;
}

std::vector<Inputs> sample_d1_inputs(std::size_t n, std::uint64_t seed, std::size_t* redraws) {
  CounterRng rng(seed, kInputStream);
  std::vector<Inputs> out;
  out.reserve(n);
  std::size_t redrawn = 0;
  while (out.size() < n) {
    Inputs x;
    x.p1_bar = rng.uniform(30.0, 70.0);
    x.p2_bar = rng.normal(22.0, 0.5);
    x.t1_c = rng.normal(50.0, 2.0);
    x.u_pct = rng.uniform(0.0, 100.0);
    x.eta_oil = rng.uniform(0.0, 0.8);
    x.eta_water = rng.uniform(0.0, 0.2);
    if (x.p2_bar <= 0.0 || x.t1_c + kKelvinOffset <= 0.0) {
      ++redrawn;
      continue;
    }
    out.push_back(x);
  }
  if (redraws) *redraws = redrawn;
  return out;
}

Dataset sample_d1(std::size_t n, double sigma_eps, std::uint64_t seed, const ProcessSpec& process) {
  if (n < 1) throw Error(ErrorCode::InvalidInput, "sample_d1: n must be at least 1");
  if (sigma_eps < 0) throw Error(ErrorCode::InvalidInput, "sample_d1: sigma must be non-negative");
  Dataset ds;
  ds.provenance = {"d1", n, sigma_eps, seed, 0};
  const auto inputs = sample_d1_inputs(n, seed, &ds.provenance.redraws);
  const NoiseSpec noise{sigma_eps, derive_seed(seed, kNoiseStream)};
  ds.rows.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    Observation o = make_row(static_cast<std::int64_t>(t), inputs[t], process);
    o.y = add_noise(o.q_true, noise, t);
    ds.rows.push_back(o);
  }
  const std::size_t n_test = n > kD1Test ? kD1Test : n / 5;
  return split_random(std::move(ds), n_test, kD1ValFraction, derive_seed(seed, kSplitStream));
}

double d2_upstream_pressure(std::size_t t, std::size_t n) {
  return 30.0 + 40.0 * std::exp(-3.0 * static_cast<double>(t) / static_cast<double>(n));
}

double d2_opening(std::size_t t, std::size_t n) {
  const std::size_t period = std::max<std::size_t>(n / 33, 1);
  return std::min(100.0, 20.0 + 2.5 * static_cast<double>(t / period));
}

double d3_gor(std::size_t t, std::size_t n) {
  if (n < 2) return 200.0;
  return 200.0 + 800.0 * static_cast<double>(t) / static_cast<double>(n - 1);
}

Dataset generate_d2(std::size_t n, std::uint64_t seed, const ProcessSpec& process) {
  if (n < 1) throw Error(ErrorCode::InvalidInput, "generate_d2: n must be at least 1");
  Dataset ds;
  ds.provenance = {"d2", n, 0.0, seed, 0};
  ds.rows.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    Inputs x{d2_upstream_pressure(t, n), kD2P2, kD2T1, d2_opening(t, n), kD2EtaOil, kD2EtaWater};
    ds.rows.push_back(make_row(static_cast<std::int64_t>(t), x, process));
  }
  return split_temporal_default(std::move(ds));
}

Dataset generate_d3(std::size_t n, std::uint64_t seed, const ProcessSpec& process) {
  if (n < 1) throw Error(ErrorCode::InvalidInput, "generate_d3: n must be at least 1");
  Dataset ds;
  ds.provenance = {"d3", n, 0.0, seed, 0};
  ds.rows.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto fr = gor_to_fractions(d3_gor(t, n), kD3EtaWater, process.fluid);
    Inputs x{d2_upstream_pressure(t, n), kD2P2, kD2T1, 100.0, fr.eta_oil, kD3EtaWater};
    ds.rows.push_back(make_row(static_cast<std::int64_t>(t), x, process));
  }
  return split_temporal_default(std::move(ds));
}

OilGasFractions gor_to_fractions(double gor, double eta_water, const FluidSpec& fluid) {
  if (gor < 0) throw Error(ErrorCode::InvalidInput, "gor_to_fractions: negative GOR");
  if (!(eta_water >= 0 && eta_water < 1)) throw Error(ErrorCode::InvalidInput, "gor_to_fractions: eta_water outside [0,1)");
  const double r = gor * fluid.rho_gas_sc / fluid.rho_oil_sc;
  const double hc = 1.0 - eta_water;
  return {hc / (1.0 + r), hc * r / (1.0 + r)};
}

Dataset split_random(Dataset ds, std::size_t n_test, double val_frac, std::uint64_t seed) {
  const std::size_t n = ds.rows.size();
  if (n_test >= n) throw Error(ErrorCode::InvalidInput, "split_random: n_test must be smaller than the dataset");
  if (!(val_frac >= 0 && val_frac < 1)) throw Error(ErrorCode::InvalidInput, "split_random: val_frac outside [0,1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  CounterRng rng(seed, 0);
  shuffle(idx, rng);
  const std::size_t remaining = n - n_test;
  const auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(remaining)));
  Split s;
  s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test),
               idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), idx.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  ds.split = std::move(s);
  return ds;
}

Dataset split_temporal(Dataset ds, std::size_t n_test, std::size_t n_val) {
  const std::size_t n = ds.rows.size();
  if (n_test + n_val >= n) throw Error(ErrorCode::InvalidInput, "split_temporal: test + validation must be smaller than the dataset");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ds.rows[a].t < ds.rows[b].t; });
  const std::size_t n_train = n - n_test - n_val;
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  ds.split = std::move(s);
  return ds;
}

std::string dataset_file_name(const Provenance& p) {
  return p.generator + "_n" + std::to_string(p.n) + "_sigma" + format_double(p.sigma_eps) + "_seed" +
         std::to_string(p.seed) + ".csv";
}

void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path,
                       const std::vector<std::string>& comments) {
  std::vector<const char*> role(ds.rows.size(), "none");
  for (auto i : ds.split.train) role.at(i) = "train";
  for (auto i : ds.split.val) role.at(i) = "val";
  for (auto i : ds.split.test) role.at(i) = "test";

  std::ostringstream out;
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "# generator=" << ds.provenance.generator << " n=" << ds.provenance.n
      << " sigma=" << format_double(ds.provenance.sigma_eps) << " seed=" << ds.provenance.seed
      << " redraws=" << ds.provenance.redraws << '\n';
  for (std::size_t c = 0; c < std::size(kColumns); ++c) out << (c ? "," : "") << kColumns[c];
  out << '\n';
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    const auto& o = ds.rows[i];
    out << o.t << ',' << format_double(o.x.p1_bar) << ',' << format_double(o.x.p2_bar) << ','
        << format_double(o.x.t1_c) << ',' << format_double(o.x.u_pct) << ',' << format_double(o.x.eta_oil)
        << ',' << format_double(o.eta_gas) << ',' << format_double(o.x.eta_water) << ','
        << format_double(o.q_true) << ',' << format_double(o.y) << ',' << role[i] << '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f << out.str();
  if (!f) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
  Dataset ds;
  std::string line;
  std::map<std::string, std::size_t, std::less<>> col;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream meta(line.substr(1));
      std::string kv;
      while (meta >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const auto key = kv.substr(0, eq);
        const auto val = kv.substr(eq + 1);
        if (key == "generator") ds.provenance.generator = val;
        else if (key == "n") ds.provenance.n = std::stoull(val);
        else if (key == "sigma") ds.provenance.sigma_eps = parse_double(val);
        else if (key == "seed") ds.provenance.seed = std::stoull(val);
        else if (key == "redraws") ds.provenance.redraws = std::stoull(val);
      }
      continue;
    }
    if (col.empty()) {
      const auto names = split_fields(line);
      for (std::size_t c = 0; c < names.size(); ++c) col.emplace(std::string(names[c]), c);
      for (const char* name : kColumns)
        if (!col.contains(name)) throw Error(ErrorCode::Io, std::string("dataset file lacks column ") + name);
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != col.size()) throw Error(ErrorCode::Io, "dataset row has wrong field count");
    auto num = [&](const char* name) { return parse_double(fields[col.find(name)->second]); };
    Observation o;
    o.t = static_cast<std::int64_t>(num("t"));
    o.x = {num("p1_bar"), num("p2_bar"), num("T1_C"), num("u_pct"), num("eta_oil"), num("eta_water")};
    o.eta_gas = num("eta_gas");
    o.q_true = num("q_true");
    o.y = num("y");
    const std::string_view role = fields[col.find("split")->second];
    const std::size_t i = ds.rows.size();
    if (role == "train") ds.split.train.push_back(i);
    else if (role == "val") ds.split.val.push_back(i);
    else if (role == "test") ds.split.test.push_back(i);
    else if (role != "none") throw Error(ErrorCode::Io, "unknown split label '" + std::string(role) + "'");
    ds.rows.push_back(o);
  }
  if (col.empty()) throw Error(ErrorCode::Io, "dataset file has no header: " + path.string());
  if (ds.provenance.n == 0) ds.provenance.n = ds.rows.size();
  return ds;
}

}  // namespace vfm
