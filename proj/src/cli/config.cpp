// Copyright 2026 The cp-distill Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cpd/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cpd::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& v,
                            const char* expected) {
  throw ConfigError("config key '" + key + "': '" + v + "' is not " + expected);
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty())
    bad_value(key, v, "an integer");
  return out;
}

int to_int32(const std::string& key, const std::string& v) {
  const long long x = to_int(key, v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    bad_value(key, v, "a 32-bit integer");
  return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty())
    bad_value(key, v, "an unsigned 64-bit integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty())
    bad_value(key, v, "a number");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int32(key, trim(item)));
  if (out.empty()) bad_value(key, v, "a comma-separated integer list");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

std::string fmt_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Key {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define CPD_INT_KEY(name, field)                                             \
  Key { name, [](const RunConfig& c) { return std::to_string(c.field); },   \
        [](RunConfig& c, const std::string& k, const std::string& v) {       \
          c.field = to_int32(k, v);                                          \
        } }
#define CPD_U64_KEY(name, field)                                             \
  Key { name, [](const RunConfig& c) { return std::to_string(c.field); },   \
        [](RunConfig& c, const std::string& k, const std::string& v) {       \
          c.field = to_u64(k, v);                                            \
        } }
#define CPD_REAL_KEY(name, field)                                            \
  Key { name, [](const RunConfig& c) { return fmt(static_cast<double>(c.field)); }, \
        [](RunConfig& c, const std::string& k, const std::string& v) {       \
          c.field = to_double(k, v);                                         \
        } }
#define CPD_BOOL_KEY(name, field)                                            \
  Key { name, [](const RunConfig& c) { return fmt(c.field); },              \
        [](RunConfig& c, const std::string& k, const std::string& v) {       \
          c.field = to_bool(k, v);                                           \
        } }

// Adam and schedule keys shared by the two training loops.
#define CPD_TRAIN_KEYS(prefix, field)                                        \
  CPD_INT_KEY(prefix ".steps", field.steps),                                 \
  CPD_INT_KEY(prefix ".batch", field.batch),                                 \
  CPD_REAL_KEY(prefix ".lr", field.adam.learning_rate),                      \
  CPD_REAL_KEY(prefix ".beta1", field.adam.beta1),                           \
  CPD_REAL_KEY(prefix ".beta2", field.adam.beta2),                           \
  CPD_REAL_KEY(prefix ".eps", field.adam.epsilon),                           \
  CPD_BOOL_KEY(prefix ".cosine_decay", field.cosine_decay),                  \
  CPD_REAL_KEY(prefix ".final_lr_fraction", field.final_lr_fraction)

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      CPD_U64_KEY("seed", seed),
      Key{"out", [](const RunConfig& c) { return c.out; },
          [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; }},
      Key{"task", [](const RunConfig& c) { return to_string(c.task); },
          [](RunConfig& c, const std::string&, const std::string& v) {
            c.task = parse_task(v);
          }},
      CPD_INT_KEY("task.horizon", horizons.horizon),
      CPD_INT_KEY("task.exec_horizon", horizons.exec_horizon),
      CPD_INT_KEY("data.episodes", data_episodes),
      CPD_REAL_KEY("data.action_noise", data_action_noise),
      CPD_REAL_KEY("schedule.t_min", schedule.t_min),
      CPD_REAL_KEY("schedule.t_max", schedule.t_max),
      CPD_REAL_KEY("schedule.rho", schedule.rho),
      CPD_INT_KEY("schedule.size", schedule.size),
      Key{"schedule.sigma_data",
          [](const RunConfig& c) {
            return c.sigma_data_auto ? std::string("auto") : fmt(c.schedule.sigma_data);
          },
          [](RunConfig& c, const std::string& k, const std::string& v) {
            c.sigma_data_auto = v == "auto";
            if (!c.sigma_data_auto) c.schedule.sigma_data = to_double(k, v);
          }},
      Key{"net.hidden", [](const RunConfig& c) { return fmt_list(c.net.hidden); },
          [](RunConfig& c, const std::string& k, const std::string& v) {
            c.net.hidden = to_int_list(k, v);
          }},
      CPD_INT_KEY("net.time_embed", net.time_embed),
      CPD_INT_KEY("net.cond_embed", net.cond_embed),
      CPD_REAL_KEY("net.max_frequency", net.max_frequency),
      CPD_REAL_KEY("net.dropout", net.dropout),
      CPD_BOOL_KEY("net.obs_input", net.obs_input),
      CPD_TRAIN_KEYS("teacher", teacher),
      Key{"teacher.dsm_weighting",
          [](const RunConfig& c) { return to_string(c.teacher.dsm_weighting); },
          [](RunConfig& c, const std::string&, const std::string& v) {
            c.teacher.dsm_weighting = parse_dsm_weighting(v);
          }},
      CPD_TRAIN_KEYS("distill", distill_train),
      CPD_REAL_KEY("distill.alpha", distill.alpha),
      CPD_REAL_KEY("distill.beta", distill.beta),
      Key{"distill.variant", [](const RunConfig& c) { return to_string(c.distill.variant); },
          [](RunConfig& c, const std::string&, const std::string& v) {
            c.distill.variant = parse_variant(v);
          }},
      CPD_INT_KEY("distill.max_span", distill.max_span),
      CPD_BOOL_KEY("distill.dropout_s_to_0", distill.dropout_s_to_0),
      CPD_INT_KEY("distill.target_refresh", distill.target_refresh),
      CPD_REAL_KEY("sampler.sigma_init", sampler.sigma_init),
      CPD_INT_KEY("sampler.k", sampler.steps),
      Key{"sampler.mode", [](const RunConfig& c) { return to_string(c.sampler.mode); },
          [](RunConfig& c, const std::string&, const std::string& v) {
            c.sampler.mode = parse_chain_mode(v);
          }},
      CPD_INT_KEY("eval.episodes", eval_episodes),
      CPD_U64_KEY("eval.seed", eval_seed),
      CPD_INT_KEY("bench.repetitions", bench_repetitions),
      CPD_INT_KEY("bench.warmup", bench_warmup),
      CPD_INT_KEY("ablate.episodes", ablate_episodes),
      CPD_REAL_KEY("ablate.dropout", ablate_dropout),
  };
  return keys;
}

#undef CPD_TRAIN_KEYS
#undef CPD_BOOL_KEY
#undef CPD_REAL_KEY
#undef CPD_U64_KEY
#undef CPD_INT_KEY

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void flatten(const nlohmann::json& j, const std::string& prefix,
             std::vector<std::pair<std::string, std::string>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    // {"task": {"id": ..., "horizon": ...}} flattens to task.id, which
    // RunConfig::set treats as an alias for "task".
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    const auto& v = it.value();
    if (v.is_object()) {
      flatten(v, key, out);
    } else if (v.is_string()) {
      out.emplace_back(key, v.get<std::string>());
    } else if (v.is_boolean()) {
      out.emplace_back(key, v.get<bool>() ? "true" : "false");
    } else if (v.is_number_integer()) {
      out.emplace_back(key, v.dump());
    } else if (v.is_number()) {
      out.emplace_back(key, fmt(v.get<double>()));
    } else if (v.is_array()) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number_integer())
          throw ConfigError("config key '" + key + "': arrays must hold integers");
        s += (i ? "," : "") + v[i].dump();
      }
      out.emplace_back(key, s);
    } else {
      throw ConfigError("config key '" + key + "': unsupported JSON value");
    }
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> RunConfig::keys() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : registry()) out.emplace_back(k.name, k.get(*this));
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string name = key == "task.id" ? "task" : key;
  for (const auto& k : registry())
    if (name == k.name) {
      k.set(*this, key, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  cpd::validate(schedule);
  if (!sigma_data_auto && !(schedule.sigma_data > 0))
    throw ConfigError("schedule.sigma_data must be > 0 or auto");
  if (schedule.size < 3) throw ConfigError("schedule.size must be >= 3 for distillation");
  if (horizons.horizon < 1 || horizons.exec_horizon < 1 ||
      horizons.exec_horizon > horizons.horizon)
    throw ConfigError("need 1 <= task.exec_horizon <= task.horizon");
  if (data_episodes < 1) throw ConfigError("data.episodes must be >= 1");
  if (!(data_action_noise >= 0.0)) throw ConfigError("data.action_noise must be >= 0");
  if (net.hidden.empty()) throw ConfigError("net.hidden needs at least one layer");
  for (int h : net.hidden)
    if (h < 1) throw ConfigError("net.hidden widths must be >= 1");
  if (net.time_embed < 2 || net.time_embed % 2 != 0)
    throw ConfigError("net.time_embed must be even and >= 2");
  if (net.cond_embed < 1) throw ConfigError("net.cond_embed must be >= 1");
  if (!(net.max_frequency > 0)) throw ConfigError("net.max_frequency must be > 0");
  if (!(net.dropout >= 0 && net.dropout < 1))
    throw ConfigError("net.dropout must lie in [0, 1)");
  for (const auto* t : {&teacher, &distill_train}) {
    if (t->steps < 1 || t->batch < 1)
      throw ConfigError("training steps and batch must be >= 1");
    if (!(t->adam.learning_rate > 0) || !(t->adam.beta1 >= 0 && t->adam.beta1 < 1) ||
        !(t->adam.beta2 >= 0 && t->adam.beta2 < 1) || !(t->adam.epsilon > 0))
      throw ConfigError("invalid optimizer hyperparameters");
    if (!(t->final_lr_fraction > 0 && t->final_lr_fraction <= 1))
      throw ConfigError("final_lr_fraction must lie in (0, 1]");
  }
  cpd::validate(distill, true);
  cpd::validate(sampler);
  if (sampler.steps > schedule.size - 1)
    throw ConfigError("sampler.k exceeds the number of mesh steps");
  if (eval_episodes < 2) throw ConfigError("eval.episodes must be >= 2");
  if (ablate_episodes < 2) throw ConfigError("ablate.episodes must be >= 2");
  if (!(ablate_dropout >= 0.0 && ablate_dropout < 1.0))
    throw ConfigError("ablate.dropout must be in [0, 1)");
  if (bench_repetitions < 1 || bench_warmup < 0)
    throw ConfigError("bench.repetitions must be >= 1 and bench.warmup >= 0");
  if (out.empty()) throw ConfigError("out must not be empty");
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto& [k, v] : keys()) s += k + " = " + v + "\n";
  return s;
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second)
      throw ConfigError(where + ": duplicate key '" + key + "'");
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig parse_config_json(const std::string& text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(origin + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(origin + ": JSON config must be an object");
  std::vector<std::pair<std::string, std::string>> flat;
  flatten(j, "", flat);
  RunConfig cfg;
  for (const auto& [k, v] : flat) {
    try {
      cfg.set(k, v);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{')
    return parse_config_json(text, path.string());
  return parse_config_text(text, path.string());
}

}  // namespace cpd::cli
