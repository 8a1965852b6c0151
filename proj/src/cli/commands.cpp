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

#include "cpd/cli/commands.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

namespace cpd::cli {
namespace {

// Values stored in checkpoints go through f32; rounding them up front makes
// a reloaded model identical to the one that was trained.
double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string num(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

void prepare_out(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  write_text_atomic(fs::path(cfg.out) / "config.txt", cfg.to_text());
}

Dataset load_required_dataset(const Paths& p, const RunConfig& cfg) {
  require_artifact(p.dataset(), "dataset (run gen-data)");
  Dataset d = load_dataset(p.dataset());
  if (d.task != to_string(cfg.task))
    throw ConfigError("dataset " + p.dataset().string() + " was generated for task '" +
                      d.task + "' but the config names '" + to_string(cfg.task) + "'");
  return d;
}

Checkpoint load_required(const fs::path& path, const std::string& what) {
  require_artifact(path, what);
  return load_checkpoint(path);
}

void check_compatible(const Dataset& d, const NetSpec& net, const std::string& origin) {
  if (net.action_dim != d.sequence_dim() || net.obs_dim != d.obs_dim())
    throw DimensionError(origin + " expects " + std::to_string(net.action_dim) +
                         "-dim actions and " + std::to_string(net.obs_dim) +
                         "-dim observations; the dataset has " +
                         std::to_string(d.sequence_dim()) + " and " +
                         std::to_string(d.obs_dim()));
}

std::string eval_stem(const fs::path& ckpt) { return ckpt.stem().string(); }

}  // namespace

fs::path Paths::teacher_stage(int percent) const {
  if (percent == 100) return teacher();
  return out / ("teacher_stage" + std::to_string(percent) + ".ckpt");
}

std::unique_ptr<Env> env_for(const RunConfig& cfg) {
  return make_env(cfg.task, cfg.horizons);
}

NetSpec net_spec_for(const RunConfig& cfg, const Dataset& data) {
  NetSpec n = cfg.net;
  n.action_dim = data.sequence_dim();
  n.obs_dim = data.obs_dim();
  n.max_frequency = f32(n.max_frequency);
  n.dropout = f32(n.dropout);
  return n;
}

ScheduleParams schedule_for(const RunConfig& cfg, const Dataset& data) {
  ScheduleParams s = cfg.schedule;
  if (cfg.sigma_data_auto) s.sigma_data = data.action_std();
  if (!(s.sigma_data > 0))
    throw ConfigError("estimated sigma_data is zero: the dataset actions are constant");
  s.t_min = f32(s.t_min);
  s.t_max = f32(s.t_max);
  s.rho = f32(s.rho);
  s.sigma_data = f32(s.sigma_data);
  validate(s);
  return s;
}

Teacher<float> train_teacher_model(const RunConfig& cfg, const Dataset& data,
                                   std::vector<TrainRecord>* log,
                                   const SnapshotFn& snapshot, CsvLog* csv) {
  Teacher<float> teacher(net_spec_for(cfg, data), schedule_for(cfg, data));
  Rng rng = Rng::derive(cfg.seed, kTeacherStream);
  teacher.init(rng);
  const int steps = cfg.teacher.steps;
  const int at25 = std::max(1, (steps + 2) / 4), at50 = std::max(1, (steps + 1) / 2);
  auto hook = [&](const TrainRecord& r, const Teacher<float>& t) {
    if (csv)
      csv->row(std::to_string(r.step) + "," + num(r.loss, 8) + "," +
               num(r.grad_norm, 8) + "," + num(learning_rate_at(cfg.teacher, r.step), 8) +
               "," + num(r.wall_ms, 5));
    if (snapshot) {
      if (r.step + 1 == at25) snapshot(25, t);
      if (r.step + 1 == at50) snapshot(50, t);
    }
  };
  auto records = train_teacher<float>(teacher, data.actions, data.obs, cfg.teacher,
                                      rng, hook);
  if (log) *log = std::move(records);
  return teacher;
}

Student<float> distill_model(const RunConfig& cfg, const Teacher<float>* teacher,
                             const Dataset& data, const DistillConfig& dcfg,
                             std::vector<DistillRecord>* log, CsvLog* csv,
                             std::optional<double> student_dropout) {
  Rng rng = Rng::derive(cfg.seed, kDistillStream);
  std::optional<Student<float>> student;
  NetSpec spec = teacher ? teacher->spec() : net_spec_for(cfg, data);
  if (student_dropout) spec.dropout = *student_dropout;
  if (teacher) {
    student.emplace(warm_start<float>(*teacher, rng, spec));
  } else {
    // Teacher-free training starts from scratch with the stop branch zeroed
    // like the warm start, so both paths share one initialization rule.
    student.emplace(spec, schedule_for(cfg, data));
    student->init(rng);
    student->net().zero_branch_film(student->params(), kStopBranch);
  }
  auto hook = [&](const DistillRecord& r, const Student<float>&) {
    if (csv)
      csv->row(std::to_string(r.step) + "," + num(r.loss, 8) + "," + num(r.loss_ctm, 8) +
               "," + num(r.loss_dsm, 8) + "," + num(r.dist_at_s, 8) + "," +
               num(r.grad_norm, 8) + "," +
               num(learning_rate_at(cfg.distill_train, r.step), 8) + "," +
               std::to_string(r.teacher_nfe) + "," + num(r.wall_ms, 5));
  };
  auto records = distill<float>(*student, teacher, data.actions, data.obs, dcfg,
                                cfg.distill_train, rng, hook);
  if (log) *log = std::move(records);
  return std::move(*student);
}

void cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  prepare_out(cfg);
  const Paths p{cfg.out};
  auto env = env_for(cfg);
  std::vector<ExpertEpisode> episodes;
  const Dataset d = generate_dataset(*env, cfg.data_episodes, cfg.seed, &episodes,
                                     cfg.data_action_noise);
  save_dataset(d, p.dataset());
  int ok = 0, plus = 0, minus = 0;
  for (const auto& e : episodes) {
    ok += e.success ? 1 : 0;
    plus += e.mode > 0 ? 1 : 0;
    minus += e.mode < 0 ? 1 : 0;
  }
  nlohmann::json j = {{"task", d.task},
                      {"episodes", cfg.data_episodes},
                      {"pairs", d.size()},
                      {"horizon", d.horizon},
                      {"action_dim", d.action_dim},
                      {"obs_dim", d.obs_dim()},
                      {"expert_success_rate", static_cast<double>(ok) / cfg.data_episodes},
                      {"mode_positive", plus},
                      {"mode_negative", minus},
                      {"action_std", d.action_std()}};
  write_text_atomic(fs::path(cfg.out) / "dataset_summary.json", j.dump(2) + "\n");
  write_manifest(cfg.out, "gen-data");
  log << "gen-data: " << d.size() << " pairs from " << cfg.data_episodes
      << " episodes, expert success " << num(static_cast<double>(ok) / cfg.data_episodes)
      << " -> " << p.dataset().string() << "\n";
}

void cmd_train_teacher(const RunConfig& cfg, std::ostream& log) {
  prepare_out(cfg);
  const Paths p{cfg.out};
  const Dataset d = load_required_dataset(p, cfg);
  CsvLog csv(fs::path(cfg.out) / "teacher_metrics.csv", "step,loss,grad_norm,lr,wall_ms");
  std::vector<TrainRecord> records;
  const Teacher<float> teacher = train_teacher_model(
      cfg, d, &records,
      [&](int pct, const Teacher<float>& t) { save_teacher(t, p.teacher_stage(pct)); },
      &csv);
  save_teacher(teacher, p.teacher());
  write_manifest(cfg.out, "train-teacher");
  log << "train-teacher: " << records.size() << " steps, final DSM loss "
      << num(records.empty() ? 0.0 : records.back().loss) << " -> "
      << p.teacher().string() << "\n";
}

void cmd_distill(const RunConfig& cfg, const std::optional<fs::path>& teacher_path,
                 std::ostream& log) {
  prepare_out(cfg);
  const Paths p{cfg.out};
  const Dataset d = load_required_dataset(p, cfg);
  std::optional<Teacher<float>> teacher;
  if (cfg.distill.variant != Variant::ct) {
    const fs::path tp = teacher_path.value_or(p.teacher());
    teacher.emplace(teacher_from(load_required(tp, "teacher checkpoint (run train-teacher)"),
                                 tp.string()));
    check_compatible(d, teacher->spec(), tp.string());
  }
  CsvLog csv(fs::path(cfg.out) / "distill_metrics.csv",
             "step,loss,loss_ctm,loss_dsm,dist_at_s,grad_norm,lr,teacher_nfe,wall_ms");
  std::vector<DistillRecord> records;
  const Student<float> student =
      distill_model(cfg, teacher ? &*teacher : nullptr, d, cfg.distill, &records, &csv);
  save_student(student, cfg.distill, p.student());
  write_manifest(cfg.out, "distill");
  log << "distill: " << to_string(cfg.distill.variant) << ", " << records.size()
      << " steps, final consistency loss "
      << num(records.empty() ? 0.0 : records.back().loss_ctm) << " -> "
      << p.student().string() << "\n";
}

EvalSummary cmd_eval(const RunConfig& cfg, const EvalRequest& req, std::ostream& log) {
  prepare_out(cfg);
  const Paths p{cfg.out};
  const Dataset d = load_required_dataset(p, cfg);
  const fs::path ckpt_path = req.checkpoint.value_or(p.student());
  const Checkpoint ckpt = load_required(ckpt_path, "checkpoint to evaluate");
  auto env = env_for(cfg);
  SamplerConfig sc = cfg.sampler;
  if (req.k) sc.steps = *req.k;
  if (req.mode) sc.mode = *req.mode;
  validate(sc);

  std::optional<Teacher<float>> teacher;
  std::optional<Student<float>> student;
  Policy policy;
  std::string mode_label;
  double sigma = sc.sigma_init;
  if (checkpoint_kind(ckpt) == ModelKind::teacher) {
    teacher.emplace(teacher_from(ckpt, ckpt_path.string()));
    check_compatible(d, teacher->spec(), ckpt_path.string());
    sigma = teacher->schedule().t_max();
    policy = teacher_policy(*teacher, d, sigma);
    mode_label = "heun";
    sc.steps = teacher->schedule().size() - 1;
  } else {
    student.emplace(student_from(ckpt, ckpt_path.string()));
    check_compatible(d, student->spec(), ckpt_path.string());
    chain_indices(student->schedule(), sc.steps, sc.mode);  // validates k
    policy = student_policy(*student, d, sc);
    mode_label = to_string(sc.mode);
  }
  EvalSummary s = evaluate(*env, policy, cfg.eval_episodes, cfg.eval_seed, worker_threads());

  const std::string stem = eval_stem(ckpt_path);
  CsvLog csv(fs::path(cfg.out) / ("eval_" + stem + ".csv"), inference_csv_header());
  for (std::size_t i = 0; i < s.results.size(); ++i) {
    const auto& r = s.results[i];
    for (const auto& dec : r.decisions) {
      InferenceRow row{to_string(cfg.task), cfg.eval_seed + i, sc.steps, mode_label,
                       sigma, dec.nfe, dec.net_ms, dec.total_ms, r.success ? 1.0 : 0.0};
      std::ostringstream os;
      os << row;
      csv.row(os.str());
    }
  }
  nlohmann::json j = {{"checkpoint", ckpt_path.string()},
                      {"task", to_string(cfg.task)},
                      {"episodes", s.episodes},
                      {"success_rate", s.success_rate},
                      {"stderr", s.stderr_},
                      {"k", sc.steps},
                      {"mode", mode_label},
                      {"sigma_init", sigma},
                      {"nfe_per_decision", s.mean_nfe},
                      {"mean_decision_ms", s.mean_decision_ms},
                      {"mean_net_ms", s.mean_net_ms},
                      {"mode_positive", s.mode_positive},
                      {"mode_negative", s.mode_negative}};
  write_text_atomic(fs::path(cfg.out) / ("eval_" + stem + ".json"), j.dump(2) + "\n");
  write_manifest(cfg.out, "eval");
  log << "eval " << stem << ": success " << num(s.success_rate, 4) << " +- "
      << num(s.stderr_, 3) << " over " << s.episodes << " episodes, NFE "
      << num(s.mean_nfe) << " per decision\n";
  return s;
}

void cmd_bench(const RunConfig& cfg, const std::optional<fs::path>& student_path,
               std::ostream& log) {
  prepare_out(cfg);
  const Paths p{cfg.out};
  const Dataset d = load_required_dataset(p, cfg);
  const fs::path sp = student_path.value_or(p.student());
  const Student<float> student =
      student_from(load_required(sp, "student checkpoint (run distill)"), sp.string());
  const Teacher<float> teacher = teacher_from(
      load_required(p.teacher(), "teacher checkpoint (run train-teacher)"),
      p.teacher().string());
  check_compatible(d, student.spec(), sp.string());
  const MatrixXf obs = d.obs.col(0);
  Rng rng(cfg.seed);

  struct Case {
    std::string name;
    int k;
    InferenceFn fn;
  };
  std::vector<Case> cases;
  for (int k : {1, 3}) {
    if (k > student.schedule().size() - 1) continue;
    SamplerConfig sc = cfg.sampler;
    sc.steps = k;
    cases.push_back({"student", k, [&, sc] { return multi_step<float>(student, obs, sc, rng); }});
  }
  cases.push_back({"teacher", teacher.schedule().size() - 1, [&] {
                     return teacher_sample<float>(teacher, obs, teacher.schedule().t_max(), rng);
                   }});

  CsvLog csv(fs::path(cfg.out) / "bench.csv",
             "model,k,nfe,repetitions,total_median_ms,total_p10_ms,total_p90_ms,"
             "net_median_ms,net_p10_ms,net_p90_ms,overhead_median_ms,overhead_p10_ms,"
             "overhead_p90_ms");
  double student_net = 0, teacher_net = 0;
  for (const auto& c : cases) {
    const LatencyStats s = bench(c.fn, cfg.bench_repetitions, cfg.bench_warmup);
    csv.row(c.name + "," + std::to_string(c.k) + "," + std::to_string(s.nfe) + "," +
            std::to_string(s.repetitions) + "," + num(s.total_ms.median) + "," +
            num(s.total_ms.p10) + "," + num(s.total_ms.p90) + "," + num(s.net_ms.median) +
            "," + num(s.net_ms.p10) + "," + num(s.net_ms.p90) + "," +
            num(s.overhead_ms.median) + "," + num(s.overhead_ms.p10) + "," +
            num(s.overhead_ms.p90));
    log << "bench " << c.name << " NFE " << s.nfe << ": network " << num(s.net_ms.median)
        << " ms, total " << num(s.total_ms.median) << " ms (median)\n";
    if (c.name == "student" && c.k == 1) student_net = s.net_ms.median;
    if (c.name == "teacher") teacher_net = s.net_ms.median;
  }
  if (student_net > 0)
    log << "bench: teacher/student network-time ratio " << num(teacher_net / student_net, 4)
        << "\n";
  write_manifest(cfg.out, "bench");
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train diffusion policy teachers, distill consistency students, evaluate them."};
  app.set_help_flag("-h,--help", "Show usage");
  std::string command, config_path, out_dir, checkpoint, mode, study;
  std::uint64_t seed = 0;
  int k = 0;
  std::vector<std::string> overrides;
  app.add_option("command", command,
                 "gen-data | train-teacher | distill | eval | bench | ablate")
      ->required()
      ->check(CLI::IsMember({"gen-data", "train-teacher", "distill", "eval", "bench", "ablate"}));
  app.add_option("--config", config_path, "Config file (key = value text or JSON)")
      ->required();
  auto* seed_opt = app.add_option("--seed", seed, "Override the run seed");
  auto* out_opt = app.add_option("--out", out_dir, "Override the output directory");
  auto* ckpt_opt = app.add_option("--checkpoint", checkpoint,
                                  "Checkpoint: teacher for distill, model for eval/bench");
  auto* k_opt = app.add_option("--k", k, "Student sampling steps (eval)");
  auto* mode_opt = app.add_option("--mode", mode, "Chaining mode: discretized | continuous");
  auto* study_opt = app.add_option("--study", study, "Ablation study, or 'all'");
  app.add_option("--set", overrides, "Extra key=value config overrides");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    RunConfig cfg = load_config(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (*seed_opt) cfg.seed = seed;
    if (*out_opt) cfg.out = out_dir;
    cfg.validate();
    const std::optional<fs::path> ckpt =
        *ckpt_opt ? std::optional<fs::path>(checkpoint) : std::nullopt;
    if (command == "gen-data") {
      cmd_gen_data(cfg, out);
    } else if (command == "train-teacher") {
      cmd_train_teacher(cfg, out);
    } else if (command == "distill") {
      cmd_distill(cfg, ckpt, out);
    } else if (command == "eval") {
      EvalRequest req{ckpt, std::nullopt, std::nullopt};
      if (*k_opt) req.k = k;
      if (*mode_opt) req.mode = parse_chain_mode(mode);
      cmd_eval(cfg, req, out);
    } else if (command == "bench") {
      cmd_bench(cfg, ckpt, out);
    } else {
      if (!*study_opt) throw ConfigError("ablate needs --study (or --study all)");
      if (study == "all") {
        for (const auto& s : ablation_studies()) cmd_ablate(cfg, s, out);
      } else {
        cmd_ablate(cfg, study, out);
      }
    }
  } catch (const std::exception& e) {
    err << "cp-distill " << command << ": error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace cpd::cli
