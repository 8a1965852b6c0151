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

#ifndef CPD_SAMPLER_BENCH_HPP_
#define CPD_SAMPLER_BENCH_HPP_

#include <algorithm>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "cpd/sampler/sampler.hpp"

namespace cpd {

struct Quantiles {
  double median = 0, p10 = 0, p90 = 0;
};

// Linear-interpolated quantiles of an unsorted sample.
inline Quantiles quantiles(std::vector<double> v) {
  Quantiles q;
  if (v.empty()) return q;
  std::sort(v.begin(), v.end());
  auto at = [&](double f) {
    const double pos = f * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  q.median = at(0.5);
  q.p10 = at(0.1);
  q.p90 = at(0.9);
  return q;
}

struct LatencyStats {
  int repetitions = 0;
  int nfe = 0;
  Quantiles total_ms, net_ms, overhead_ms;
};

// One timed inference. Must report the network share separately.
using InferenceFn = std::function<InferenceReport<float>()>;

// Runs `warmup` untimed calls, then `repetitions` measured ones. Network and
// overhead time are both taken from the same report, so teacher and student
// share one measurement path.
inline LatencyStats bench(const InferenceFn& fn, int repetitions, int warmup = 3) {
  if (repetitions < 1) throw ConfigError("bench: repetitions must be >= 1");
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> total, net, overhead;
  LatencyStats s;
  s.repetitions = repetitions;
  for (int i = 0; i < repetitions; ++i) {
    const auto r = fn();
    if (i == 0) s.nfe = r.nfe;
    else if (r.nfe != s.nfe)
      throw Error("bench: NFE changed between repetitions");
    total.push_back(r.total_ms);
    net.push_back(r.net_ms);
    overhead.push_back(std::max(0.0, r.total_ms - r.net_ms));
  }
  s.total_ms = quantiles(total);
  s.net_ms = quantiles(net);
  s.overhead_ms = quantiles(overhead);
  return s;
}

// CSV row: task, seed, k, mode, sigma_init, nfe, net_ms, total_ms, success.
struct InferenceRow {
  std::string task;
  std::uint64_t seed = 0;
  int k = 1;
  std::string mode;
  double sigma_init = 1;
  int nfe = 0;
  double net_ms = 0, total_ms = 0;
  double success = 0;
};

inline const char* inference_csv_header() {
  return "task,seed,k,mode,sigma_init,nfe,net_ms,total_ms,success";
}

inline std::ostream& operator<<(std::ostream& os, const InferenceRow& r) {
  return os << r.task << ',' << r.seed << ',' << r.k << ',' << r.mode << ','
            << r.sigma_init << ',' << r.nfe << ',' << r.net_ms << ','
            << r.total_ms << ',' << r.success;
}

}  // namespace cpd

#endif  // CPD_SAMPLER_BENCH_HPP_
