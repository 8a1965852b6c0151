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

// Ablation harness. Each study distills the students it needs (cached under
// <out>/ablate/cache, keyed by every setting that affects training), evaluates
// them on the same seeds and writes <out>/ablate/<study>.csv.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cpd/cli/commands.hpp"

namespace cpd::cli {
namespace {

struct StudentRun {
  std::optional<Student<float>> student;
  double ms_per_step = 0;
  double final_ctm = 0;     // mean over the last tenth of training
  double final_dist = 0;
};

struct Row {
  std::string variant;
  int k = 1;
  double sigma_init = 1;
  EvalSummary eval;
  double ms_per_step = 0;
  std::optional<EvalSummary> teacher;
  double final_ctm = 0, final_dist = 0;
};

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

class Study {
 public:
  Study(const RunConfig& cfg, std::ostream& log)
      : cfg_(cfg), paths_{cfg.out}, env_(env_for(cfg)), log_(log) {
    require_artifact(paths_.dataset(), "dataset (run gen-data)");
    data_ = load_dataset(paths_.dataset());
    if (data_.task != to_string(cfg.task))
      throw ConfigError("dataset task '" + data_.task + "' does not match config task '" +
                        to_string(cfg.task) + "'");
    fs::create_directories(paths_.ablate_dir() / "cache");
  }

  const Teacher<float>& teacher(int stage) {
    auto it = teachers_.find(stage);
    if (it != teachers_.end()) return it->second;
    const fs::path path = paths_.teacher_stage(stage);
    require_artifact(path, "teacher checkpoint at " + std::to_string(stage) +
                               "% of training (run train-teacher)");
    return teachers_.emplace(stage, teacher_from(load_checkpoint(path), path.string()))
        .first->second;
  }

  StudentRun student(int stage, const DistillConfig& dcfg,
                     std::optional<double> dropout = std::nullopt) {
    const bool needs_teacher = dcfg.variant != Variant::ct;
    std::string name = to_string(dcfg.variant);
    for (auto& c : name) c = c == '-' ? '_' : static_cast<char>(std::tolower(c));
    name += (needs_teacher ? "_stage" + std::to_string(stage) : std::string()) +
            (dcfg.dropout_s_to_0 ? "_drop" : "_nodrop") +
            (dropout ? "_p" + std::to_string(static_cast<int>(std::lround(*dropout * 100))) : "");
    const fs::path ckpt = paths_.ablate_dir() / "cache" / (name + ".ckpt");
    const fs::path meta = paths_.ablate_dir() / "cache" / (name + ".json");

    nlohmann::json key = {
        {"seed", cfg_.seed},
        {"teacher_sha256",
         needs_teacher ? sha256_file(paths_.teacher_stage(stage)) : std::string("none")},
        {"dataset_sha256", sha256_file(paths_.dataset())},
        {"alpha", dcfg.alpha},
        {"beta", dcfg.beta},
        {"variant", to_string(dcfg.variant)},
        {"max_span", dcfg.max_span},
        {"dropout_s_to_0", dcfg.dropout_s_to_0},
        {"target_refresh", dcfg.target_refresh},
        {"student_dropout", dropout ? nlohmann::json(*dropout) : nlohmann::json()},
        {"config", cfg_.to_text()}};
    StudentRun run;
    if (fs::exists(ckpt) && fs::exists(meta)) {
      std::ifstream in(meta);
      const auto j = nlohmann::json::parse(in, nullptr, false);
      if (!j.is_discarded() && j.value("key", nlohmann::json()) == key) {
        run.student.emplace(student_from(load_checkpoint(ckpt), ckpt.string()));
        run.ms_per_step = j.at("ms_per_step").get<double>();
        run.final_ctm = j.at("final_loss_ctm").get<double>();
        run.final_dist = j.at("final_dist_at_s").get<double>();
        log_ << "  reusing " << ckpt.string() << "\n";
        return run;
      }
    }
    if (needs_teacher) teacher(stage);  // prerequisite check before training
    log_ << "  distilling " << name << " (" << cfg_.distill_train.steps << " steps)\n";
    std::vector<DistillRecord> records;
    run.student.emplace(distill_model(cfg_, needs_teacher ? &teacher(stage) : nullptr,
                                      data_, dcfg, &records, nullptr, dropout));
    const std::size_t tail = std::max<std::size_t>(1, records.size() / 10);
    double ms = 0;
    for (const auto& r : records) ms += r.wall_ms;
    for (std::size_t i = records.size() - tail; i < records.size(); ++i) {
      run.final_ctm += records[i].loss_ctm / static_cast<double>(tail);
      run.final_dist += records[i].dist_at_s / static_cast<double>(tail);
    }
    run.ms_per_step = ms / static_cast<double>(std::max<std::size_t>(1, records.size()));
    save_student(*run.student, dcfg, ckpt);
    nlohmann::json j = {{"key", key},
                        {"ms_per_step", run.ms_per_step},
                        {"final_loss_ctm", run.final_ctm},
                        {"final_dist_at_s", run.final_dist}};
    write_text_atomic(meta, j.dump(2) + "\n");
    return run;
  }

  EvalSummary eval_student(const Student<float>& s, const SamplerConfig& sc) {
    chain_indices(s.schedule(), sc.steps, sc.mode);
    return evaluate(*env_, student_policy(s, data_, sc), cfg_.ablate_episodes,
                    cfg_.eval_seed, worker_threads());
  }

  EvalSummary eval_teacher(const Teacher<float>& t) {
    return evaluate(*env_, teacher_policy(t, data_, t.schedule().t_max()),
                    cfg_.ablate_episodes, cfg_.eval_seed, worker_threads());
  }

  Row student_row(const std::string& variant, int stage, const DistillConfig& dcfg,
                  const SamplerConfig& sc, std::optional<double> dropout = std::nullopt) {
    StudentRun r = student(stage, dcfg, dropout);
    Row row;
    row.variant = variant;
    row.k = sc.steps;
    row.sigma_init = sc.sigma_init;
    row.eval = eval_student(*r.student, sc);
    row.ms_per_step = r.ms_per_step;
    row.final_ctm = r.final_ctm;
    row.final_dist = r.final_dist;
    log_ << "  " << variant << ": success " << num(row.eval.success_rate) << " +- "
         << num(row.eval.stderr_) << "\n";
    return row;
  }

  void write(const std::string& study, const std::vector<Row>& rows) {
    const fs::path path = paths_.ablate_dir() / (study + ".csv");
    CsvLog csv(path,
               "study,variant,k,sigma_init,episodes,success,stderr,ci_low,ci_high,nfe,"
               "train_ms_per_step,decision_ms,teacher_success,teacher_stderr,"
               "final_loss_ctm,final_dist_at_s");
    for (const auto& r : rows) {
      const double p = r.eval.success_rate, se = r.eval.stderr_;
      std::string line = study + "," + r.variant + "," + std::to_string(r.k) + "," +
                         num(r.sigma_init) + "," + std::to_string(r.eval.episodes) + "," +
                         num(p) + "," + num(se) + "," + num(std::max(0.0, p - 1.96 * se)) +
                         "," + num(std::min(1.0, p + 1.96 * se)) + "," +
                         num(r.eval.mean_nfe) + "," + num(r.ms_per_step) + "," +
                         num(r.eval.mean_decision_ms) + ",";
      if (r.teacher) line += num(r.teacher->success_rate) + "," + num(r.teacher->stderr_);
      else line += ",";
      line += "," + num(r.final_ctm) + "," + num(r.final_dist);
      csv.row(line);
    }
    log_ << "ablate " << study << ": " << rows.size() << " rows -> " << path.string() << "\n";
  }

  // Reports a - b with a 95% normal-approximation interval; never asserted.
  void compare(const std::string& what, const Row& a, const Row& b) {
    const double diff = a.eval.success_rate - b.eval.success_rate;
    const double se = std::hypot(a.eval.stderr_, b.eval.stderr_);
    log_ << "  finding: " << what << ": " << a.variant << " - " << b.variant << " = "
         << num(diff) << " (95% CI [" << num(diff - 1.96 * se) << ", "
         << num(diff + 1.96 * se) << "])\n";
  }

  const RunConfig& cfg() const { return cfg_; }

 private:
  const RunConfig& cfg_;
  Paths paths_;
  Dataset data_;
  std::unique_ptr<Env> env_;
  std::map<int, Teacher<float>> teachers_;
  std::ostream& log_;
};

}  // namespace

void cmd_ablate(const RunConfig& cfg, const std::string& study, std::ostream& log) {
  const auto& known = ablation_studies();
  if (std::find(known.begin(), known.end(), study) == known.end())
    throw ConfigError("unknown ablation study '" + study +
                      "' (expected objective, init-variance, chaining, teacher-quality, "
                      "dropout, consistency-training or all)");
  fs::create_directories(cfg.out);
  log << "ablate " << study << "\n";
  Study s(cfg, log);
  const DistillConfig base = cfg.distill;
  const SamplerConfig sc = cfg.sampler;
  std::vector<Row> rows;

  if (study == "objective") {
    for (Variant v : {Variant::cd, Variant::ctm, Variant::ctm_local}) {
      DistillConfig d = base;
      d.variant = v;
      rows.push_back(s.student_row(to_string(v), 100, d, sc));
    }
    s.compare("objective", rows[2], rows[0]);
    log << "  finding: CTM / CTM-local training time per step = "
        << num(rows[1].ms_per_step / rows[2].ms_per_step) << "\n";
  } else if (study == "init-variance") {
    DistillConfig d = base;
    d.variant = Variant::ctm_local;
    const auto& t = s.teacher(100);
    for (double sigma : {1.0, static_cast<double>(t.schedule().t_max())}) {
      SamplerConfig c = sc;
      c.sigma_init = sigma;
      rows.push_back(s.student_row("sigma_init=" + num(sigma), 100, d, c));
    }
    s.compare("initial variance", rows[0], rows[1]);
  } else if (study == "chaining") {
    DistillConfig d = base;
    d.variant = Variant::ctm_local;
    for (ChainMode m : {ChainMode::discretized, ChainMode::continuous}) {
      SamplerConfig c = sc;
      c.steps = sc.steps >= 2 ? sc.steps : 3;
      c.mode = m;
      rows.push_back(s.student_row(to_string(m), 100, d, c));
    }
    s.compare("chaining mode", rows[0], rows[1]);
  } else if (study == "teacher-quality") {
    DistillConfig d = base;
    d.variant = Variant::ctm_local;
    for (int stage : {25, 50, 100}) {
      Row r = s.student_row("teacher_" + std::to_string(stage) + "pct", stage, d, sc);
      r.teacher = s.eval_teacher(s.teacher(stage));
      log << "    teacher at " << stage << "%: success " << num(r.teacher->success_rate)
          << "\n";
      rows.push_back(std::move(r));
    }
  } else if (study == "dropout") {
    // Both arms train the student at ablate.dropout; only the s->0 passes differ.
    log << "  student dropout rate " << num(cfg.ablate_dropout) << "\n";
    for (bool on : {true, false}) {
      DistillConfig d = base;
      d.variant = Variant::ctm_local;
      d.dropout_s_to_0 = on;
      rows.push_back(
          s.student_row(on ? "dropout_on" : "dropout_off", 100, d, sc, cfg.ablate_dropout));
    }
    s.compare("s->0 dropout", rows[0], rows[1]);
    for (const auto& r : rows)
      log << "  diagnostic: " << r.variant << " distance at s / at 0 = "
          << num(r.final_ctm > 0 ? r.final_dist / r.final_ctm : 0.0) << "\n";
  } else {  // consistency-training
    DistillConfig d = base;
    d.variant = Variant::ctm_local;
    rows.push_back(s.student_row("CTM-local", 100, d, sc));
    d.variant = Variant::ct;
    rows.push_back(s.student_row("CT", 100, d, sc));
    s.compare("teacher jump vs Monte Carlo", rows[0], rows[1]);
  }
  s.write(study, rows);
  write_manifest(cfg.out, "ablate " + study);
}

}  // namespace cpd::cli
