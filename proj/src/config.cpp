#include "vfm/config.hpp"

#include <fstream>
#include <set>

#include "vfm/error.hpp"
#include "vfm/text.hpp"

namespace vfm {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::Usage, where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw Error(ErrorCode::Usage, "unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Usage, std::string("bad value for '") + key + "': " + e.what());
  }
}

NetSpec parse_net(const json& j, NetSpec net) {
  check_keys(j, {"hidden"}, "net");
  if (j.contains("hidden")) {
    std::vector<int> hidden;
    read(j, "hidden", hidden);
    net.layer_sizes = {net.input_width()};
    net.layer_sizes.insert(net.layer_sizes.end(), hidden.begin(), hidden.end());
    net.layer_sizes.push_back(1);
  }
  return net;
}

json net_to_json(const NetSpec& net) {
  return {{"hidden", std::vector<int>(net.layer_sizes.begin() + 1, net.layer_sizes.end() - 1)}};
}

json canonical(const RunConfig& c) {
  json j = run_config_to_json(c);
  j.erase("output_dir");
  j.erase("jobs");
  return j;
}

}  // namespace

TrainConfig parse_train_config(const json& j, TrainConfig c) {
  check_keys(j, {"learning_rate_net", "learning_rate_phys", "batch_size", "max_epochs", "patience",
                 "sigma_eps_assumed", "seed"},
             "train");
  read(j, "learning_rate_net", c.learning_rate_net);
  read(j, "learning_rate_phys", c.learning_rate_phys);
  read(j, "batch_size", c.batch_size);
  read(j, "max_epochs", c.max_epochs);
  read(j, "patience", c.patience);
  read(j, "seed", c.seed);
  if (j.contains("sigma_eps_assumed")) {
    if (j.at("sigma_eps_assumed").is_null()) c.sigma_eps_assumed.reset();
    else {
      double s = 0;
      read(j, "sigma_eps_assumed", s);
      c.sigma_eps_assumed = s;
    }
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Usage, e.what());
  }
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  json j{{"learning_rate_net", c.learning_rate_net},
         {"learning_rate_phys", c.learning_rate_phys},
         {"batch_size", c.batch_size},
         {"max_epochs", c.max_epochs},
         {"patience", c.patience},
         {"seed", c.seed}};
  j["sigma_eps_assumed"] = c.sigma_eps_assumed ? json(*c.sigma_eps_assumed) : json(nullptr);
  return j;
}

RunConfig parse_run_config(const json& j) {
  check_keys(j, {"experiment", "models", "trials", "master_seed", "jobs", "output_dir", "dataset", "net", "train",
                 "train_by_model"},
             "config");
  RunConfig rc;
  auto& e = rc.experiment;
  read(j, "experiment", e.experiment);
  read(j, "trials", e.trials);
  read(j, "master_seed", e.master_seed);
  read(j, "jobs", e.jobs);
  if (j.contains("output_dir")) {
    std::string dir;
    read(j, "output_dir", dir);
    rc.output_dir = dir;
  }
  if (j.contains("models")) {
    std::vector<std::string> names;
    read(j, "models", names);
    e.models.clear();
    for (const auto& n : names) {
      try {
        e.models.push_back(parse_model_kind(n));
      } catch (const Error& err) {
        throw Error(ErrorCode::Usage, err.what());
      }
    }
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, {"d1_size", "d1_test", "val_fraction", "temporal_size", "n_grid", "noise_levels"}, "dataset");
    read(d, "d1_size", e.d1_size);
    read(d, "d1_test", e.d1_test);
    read(d, "val_fraction", e.val_fraction);
    read(d, "temporal_size", e.temporal_size);
    read(d, "n_grid", e.n_grid);
    read(d, "noise_levels", e.noise_levels);
  }
  if (j.contains("net")) e.net = parse_net(j.at("net"), e.net);
  if (j.contains("train")) e.train = parse_train_config(j.at("train"), e.train);
  if (j.contains("train_by_model")) {
    const auto& t = j.at("train_by_model");
    if (!t.is_object()) throw Error(ErrorCode::Usage, "train_by_model must be an object");
    for (const auto& [name, over] : t.items()) {
      ModelKind kind;
      try {
        kind = parse_model_kind(name);
      } catch (const Error& err) {
        throw Error(ErrorCode::Usage, err.what());
      }
      e.train_by_model[kind] = parse_train_config(over, e.train);
    }
  }
  if (e.jobs < 1) throw Error(ErrorCode::Usage, "jobs must be at least 1");
  try {
    e.validate();
  } catch (const Error& err) {
    throw Error(ErrorCode::Usage, err.what());
  }
  return rc;
}

json run_config_to_json(const RunConfig& c) {
  const auto& e = c.experiment;
  json models = json::array();
  for (auto k : e.models) models.push_back(std::string(model_name(k)));
  json by_model = json::object();
  for (const auto& [k, t] : e.train_by_model) by_model[std::string(model_name(k))] = train_config_to_json(t);
  return {{"experiment", e.experiment},
          {"models", models},
          {"trials", e.trials},
          {"master_seed", e.master_seed},
          {"jobs", e.jobs},
          {"output_dir", c.output_dir.generic_string()},
          {"dataset",
           {{"d1_size", e.d1_size},
            {"d1_test", e.d1_test},
            {"val_fraction", e.val_fraction},
            {"temporal_size", e.temporal_size},
            {"n_grid", e.n_grid},
            {"noise_levels", e.noise_levels}}},
          {"net", net_to_json(e.net)},
          {"train", train_config_to_json(e.train)},
          {"train_by_model", by_model}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::Usage, "cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(f, nullptr, true, true);  // comments allowed
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Usage, "malformed config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

std::string config_digest(const RunConfig& c) { return fnv1a_hex(canonical(c).dump()); }

std::string config_digest(const TrainConfig& c, const NetSpec& net) {
  return fnv1a_hex(json{{"train", train_config_to_json(c)}, {"net", net_to_json(net)}}.dump());
}

}  // namespace vfm
