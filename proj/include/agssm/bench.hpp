#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace agssm {

// Forward-pass scaling probe: the selective scan against a full attention
// baseline of the same width, both single-threaded.
struct BenchConfig {
  std::vector<std::size_t> lengths;  // strictly ascending
  std::size_t reps = 5;
  std::size_t d_model = 64;
  std::size_t state_dim = 16;
  std::uint64_t seed = 0;
  void validate() const;
};

struct BenchRow {
  std::string op;  // ag_ssm | attention
  std::size_t length = 0;
  double median_ms = -1.0;
  std::vector<double> times_ms;
  std::string status = "ok";  // ok | oom
};

// One row per (op, length). Allocation failures for a length are recorded as
// status "oom" and the sweep moves on.
std::vector<BenchRow> run_bench(const BenchConfig& cfg);

}  // namespace agssm
