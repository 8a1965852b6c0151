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

#include "cpd/cli/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

namespace cpd::cli {
namespace {

void put_schedule(Checkpoint& c, const ScheduleParams& s) {
  c.meta["meta.schedule.t_min"] = static_cast<float>(s.t_min);
  c.meta["meta.schedule.t_max"] = static_cast<float>(s.t_max);
  c.meta["meta.schedule.rho"] = static_cast<float>(s.rho);
  c.meta["meta.schedule.size"] = static_cast<float>(s.size);
  c.meta["meta.schedule.sigma_data"] = static_cast<float>(s.sigma_data);
}

void put_net(Checkpoint& c, const NetSpec& n) {
  c.meta["meta.net.action_dim"] = static_cast<float>(n.action_dim);
  c.meta["meta.net.obs_dim"] = static_cast<float>(n.obs_dim);
  c.meta["meta.net.layers"] = static_cast<float>(n.hidden.size());
  for (std::size_t i = 0; i < n.hidden.size(); ++i)
    c.meta["meta.net.hidden." + std::to_string(i)] = static_cast<float>(n.hidden[i]);
  c.meta["meta.net.time_embed"] = static_cast<float>(n.time_embed);
  c.meta["meta.net.cond_embed"] = static_cast<float>(n.cond_embed);
  c.meta["meta.net.max_frequency"] = static_cast<float>(n.max_frequency);
  c.meta["meta.net.dropout"] = static_cast<float>(n.dropout);
  c.meta["meta.net.obs_input"] = n.obs_input ? 1.0f : 0.0f;
}

int as_int(const Checkpoint& c, const std::string& key) {
  const float v = c.meta_at(key);
  if (v != std::round(v) || v < 0 || v > 1e8f)
    throw FormatError("checkpoint metadata '" + key + "' is not a count");
  return static_cast<int>(v);
}

ScheduleParams get_schedule(const Checkpoint& c) {
  ScheduleParams s;
  s.t_min = c.meta_at("meta.schedule.t_min");
  s.t_max = c.meta_at("meta.schedule.t_max");
  s.rho = c.meta_at("meta.schedule.rho");
  s.size = as_int(c, "meta.schedule.size");
  s.sigma_data = c.meta_at("meta.schedule.sigma_data");
  return s;
}

NetSpec get_net(const Checkpoint& c) {
  NetSpec n;
  n.action_dim = as_int(c, "meta.net.action_dim");
  n.obs_dim = as_int(c, "meta.net.obs_dim");
  n.hidden.resize(static_cast<std::size_t>(as_int(c, "meta.net.layers")));
  for (std::size_t i = 0; i < n.hidden.size(); ++i)
    n.hidden[i] = as_int(c, "meta.net.hidden." + std::to_string(i));
  n.time_embed = as_int(c, "meta.net.time_embed");
  n.cond_embed = as_int(c, "meta.net.cond_embed");
  n.max_frequency = c.meta_at("meta.net.max_frequency");
  n.dropout = c.meta_at("meta.net.dropout");
  n.obs_input = c.meta_at("meta.net.obs_input") != 0.0f;
  return n;
}

std::string hex(const unsigned char* d, unsigned n) {
  std::ostringstream os;
  for (unsigned i = 0; i < n; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(d[i]);
  return os.str();
}

}  // namespace

void save_teacher(const Teacher<float>& teacher, const fs::path& path) {
  Checkpoint c;
  c.params = teacher.params();
  c.meta["meta.kind"] = static_cast<float>(ModelKind::teacher);
  put_schedule(c, teacher.schedule().params());
  put_net(c, teacher.spec());
  save_checkpoint(c, path);
}

void save_student(const Student<float>& student, const DistillConfig& cfg,
                  const fs::path& path) {
  Checkpoint c;
  c.params = student.params();
  c.meta["meta.kind"] = static_cast<float>(ModelKind::student);
  put_schedule(c, student.schedule().params());
  put_net(c, student.spec());
  c.meta["meta.distill.alpha"] = static_cast<float>(cfg.alpha);
  c.meta["meta.distill.beta"] = static_cast<float>(cfg.beta);
  c.meta["meta.distill.variant"] = static_cast<float>(cfg.variant);
  c.meta["meta.distill.max_span"] = static_cast<float>(cfg.max_span);
  c.meta["meta.distill.dropout_s_to_0"] = cfg.dropout_s_to_0 ? 1.0f : 0.0f;
  c.meta["meta.distill.target_refresh"] = static_cast<float>(cfg.target_refresh);
  save_checkpoint(c, path);
}

ModelKind checkpoint_kind(const Checkpoint& ckpt) {
  const int k = as_int(ckpt, "meta.kind");
  if (k != 0 && k != 1) throw FormatError("checkpoint has unknown model kind");
  return static_cast<ModelKind>(k);
}

Teacher<float> teacher_from(const Checkpoint& ckpt, const std::string& origin) {
  if (checkpoint_kind(ckpt) != ModelKind::teacher)
    throw FormatError(origin + " is a student checkpoint, expected a teacher");
  Teacher<float> t(get_net(ckpt), get_schedule(ckpt));
  Rng rng(0);
  t.init(rng);
  t.set_params(load_into(t.params(), ckpt.params));
  return t;
}

Student<float> student_from(const Checkpoint& ckpt, const std::string& origin) {
  if (checkpoint_kind(ckpt) != ModelKind::student)
    throw FormatError(origin + " is a teacher checkpoint, expected a student");
  Student<float> s(get_net(ckpt), get_schedule(ckpt));
  Rng rng(0);
  s.init(rng);
  s.set_params(load_into(s.params(), ckpt.params));
  return s;
}

DistillConfig distill_config_from(const Checkpoint& ckpt) {
  DistillConfig d;
  d.alpha = ckpt.meta_at("meta.distill.alpha");
  d.beta = ckpt.meta_at("meta.distill.beta");
  const int v = as_int(ckpt, "meta.distill.variant");
  if (v > static_cast<int>(Variant::ct))
    throw FormatError("checkpoint has unknown distillation variant");
  d.variant = static_cast<Variant>(v);
  d.max_span = as_int(ckpt, "meta.distill.max_span");
  d.dropout_s_to_0 = ckpt.meta_at("meta.distill.dropout_s_to_0") != 0.0f;
  d.target_refresh = as_int(ckpt, "meta.distill.target_refresh");
  return d;
}

void require_artifact(const fs::path& path, const std::string& what) {
  if (!fs::exists(path))
    throw ConfigError("missing " + what + ": " + path.string() +
                      " does not exist (run the producing command first)");
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256: digest initialization failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0)
      EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  return hex(digest, len);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_manifest(const fs::path& out, const std::string& command) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), out);
    if (rel == "manifest.json" || rel.extension() == ".tmp") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  nlohmann::json j;
  j["last_command"] = command;
  j["artifacts"] = nlohmann::json::array();
  for (const auto& rel : files) {
    const fs::path full = out / rel;
    j["artifacts"].push_back({{"path", rel.generic_string()},
                              {"bytes", fs::file_size(full)},
                              {"sha256", sha256_file(full)}});
  }
  write_text_atomic(out / "manifest.json", j.dump(2) + "\n");
}

CsvLog::CsvLog(const fs::path& path, const std::string& header)
    : out_(path, std::ios::trunc) {
  if (!out_) throw Error("cannot write " + path.string());
  row(header);
}

void CsvLog::row(const std::string& line) {
  const std::string full = line + "\n";
  out_.write(full.data(), static_cast<std::streamsize>(full.size()));
  out_.flush();
  if (!out_) throw Error("CSV write failed");
}

}  // namespace cpd::cli
