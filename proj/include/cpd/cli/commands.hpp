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

#ifndef CPD_CLI_COMMANDS_HPP_
#define CPD_CLI_COMMANDS_HPP_

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cpd/cli/artifacts.hpp"
#include "cpd/cli/config.hpp"
#include "cpd/distillation/distill.hpp"
#include "cpd/sampler/bench.hpp"
#include "cpd/tasks/evaluate.hpp"

namespace cpd::cli {

// Artifact layout under the output directory.
struct Paths {
  fs::path out;
  fs::path dataset() const { return out / "dataset.bin"; }
  fs::path teacher() const { return out / "teacher.ckpt"; }
  fs::path teacher_stage(int percent) const;  // 100 -> teacher()
  fs::path student() const { return out / "student.ckpt"; }
  fs::path ablate_dir() const { return out / "ablate"; }
};

// Random stream ids; every command derives its generator from the run
// seed and one of these.
enum Stream : std::uint64_t { kTeacherStream = 11, kDistillStream = 12 };

// Model builders shared by the commands, the ablation harness and tests.
NetSpec net_spec_for(const RunConfig& cfg, const Dataset& data);
ScheduleParams schedule_for(const RunConfig& cfg, const Dataset& data);

using SnapshotFn = std::function<void(int percent, const Teacher<float>&)>;
Teacher<float> train_teacher_model(const RunConfig& cfg, const Dataset& data,
                                   std::vector<TrainRecord>* log = nullptr,
                                   const SnapshotFn& snapshot = {},
                                   CsvLog* csv = nullptr);

Student<float> distill_model(const RunConfig& cfg, const Teacher<float>* teacher,
                             const Dataset& data, const DistillConfig& dcfg,
                             std::vector<DistillRecord>* log = nullptr,
                             CsvLog* csv = nullptr,
                             std::optional<double> student_dropout = std::nullopt);

std::unique_ptr<Env> env_for(const RunConfig& cfg);

struct EvalRequest {
  std::optional<fs::path> checkpoint;  // defaults to the student
  std::optional<int> k;
  std::optional<ChainMode> mode;
};

void cmd_gen_data(const RunConfig& cfg, std::ostream& log);
void cmd_train_teacher(const RunConfig& cfg, std::ostream& log);
void cmd_distill(const RunConfig& cfg, const std::optional<fs::path>& teacher,
                 std::ostream& log);
EvalSummary cmd_eval(const RunConfig& cfg, const EvalRequest& req, std::ostream& log);
void cmd_bench(const RunConfig& cfg, const std::optional<fs::path>& student,
               std::ostream& log);

inline const std::vector<std::string>& ablation_studies() {
  static const std::vector<std::string> s = {
      "objective", "init-variance", "chaining",
      "teacher-quality", "dropout", "consistency-training"};
  return s;
}
void cmd_ablate(const RunConfig& cfg, const std::string& study, std::ostream& log);

// Full command-line entry point. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cpd::cli

#endif  // CPD_CLI_COMMANDS_HPP_
