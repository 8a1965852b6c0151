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

#ifndef CPD_CLI_ARTIFACTS_HPP_
#define CPD_CLI_ARTIFACTS_HPP_

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "cpd/distillation/ctm.hpp"
#include "cpd/numerics/checkpoint.hpp"

namespace cpd::cli {

namespace fs = std::filesystem;

enum class ModelKind { teacher = 0, student = 1 };

// Checkpoint metadata: schedule, architecture, kind, and for students the
// distillation settings.
void save_teacher(const Teacher<float>& teacher, const fs::path& path);
void save_student(const Student<float>& student, const DistillConfig& cfg,
                  const fs::path& path);

ModelKind checkpoint_kind(const Checkpoint& ckpt);
Teacher<float> teacher_from(const Checkpoint& ckpt, const std::string& origin);
Student<float> student_from(const Checkpoint& ckpt, const std::string& origin);
DistillConfig distill_config_from(const Checkpoint& ckpt);

// Throws naming the artifact when it is absent.
void require_artifact(const fs::path& path, const std::string& what);

// Lower-case hex SHA-256 of a file.
std::string sha256_file(const fs::path& path);

// Rewrites <out>/manifest.json listing every file under `out` with size and
// hash, sorted by relative path.
void write_manifest(const fs::path& out, const std::string& command);

// Writes `text` to `path` through a temporary file and rename.
void write_text_atomic(const fs::path& path, const std::string& text);

// Append-only CSV: the header is written on open, each row is written and
// flushed as one unit.
class CsvLog {
 public:
  CsvLog(const fs::path& path, const std::string& header);
  void row(const std::string& line);

 private:
  std::ofstream out_;
};

}  // namespace cpd::cli

#endif  // CPD_CLI_ARTIFACTS_HPP_
