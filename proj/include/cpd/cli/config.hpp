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

#ifndef CPD_CLI_CONFIG_HPP_
#define CPD_CLI_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cpd/diffusion/train.hpp"
#include "cpd/distillation/ctm.hpp"
#include "cpd/sampler/sampler.hpp"
#include "cpd/tasks/env.hpp"

namespace cpd::cli {

// Everything a run needs. Text form is one `section.key = value` per line,
// `#` starts a comment; see RunConfig::keys() for the full list.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/default";

  TaskId task = TaskId::multimodal_reach;
  Horizons horizons;
  int data_episodes = 200;
  double data_action_noise = 0.0;  // expert execution noise, env units

  ScheduleParams schedule;
  bool sigma_data_auto = true;  // estimate from the normalized dataset
  NetSpec net;

  TrainConfig teacher;
  TrainConfig distill_train{4000, 256, {}, true, 0.1};
  DistillConfig distill;

  SamplerConfig sampler;
  int eval_episodes = 200;
  std::uint64_t eval_seed = 0;

  int bench_repetitions = 200;
  int bench_warmup = 10;

  int ablate_episodes = 200;
  double ablate_dropout = 0.2;  // student dropout rate in the dropout study

  // Every settable key with its current value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> keys() const;
  void set(const std::string& key, const std::string& value);
  void validate() const;
  std::string to_text() const;
};

// Key=value text; duplicate or unknown keys are errors naming the line.
RunConfig parse_config_text(const std::string& text, const std::string& origin);
// JSON object; nested objects flatten to dotted keys.
RunConfig parse_config_json(const std::string& text, const std::string& origin);
// Dispatches on content: a leading '{' means JSON.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace cpd::cli

#endif  // CPD_CLI_CONFIG_HPP_
