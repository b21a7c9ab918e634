#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agssm/tensor.hpp"

namespace agssm {

// Full training snapshot: parameters, optimizer moments, the weight average,
// RNG state and progress counters. Everything needed so a resumed run is
// bit-identical to one that never stopped.
struct Checkpoint {
  std::string config_text;         // training config as written by the dumper
  std::vector<std::string> names;  // parameter order, matched on load
  std::vector<Tensor> params;
  std::vector<Tensor> adam_m, adam_v;
  std::uint64_t adam_step = 0;
  std::vector<Tensor> swa_avg;  // empty until the first snapshot
  std::uint64_t swa_n_models = 0;
  std::string rng_state;
  std::uint64_t epochs_done = 0;
  double best_metric = -1.0;
  std::uint64_t best_epoch = 0;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
// Throws io::VersionError on an unknown version, io::IntegrityError on a
// hash mismatch, io::FormatError otherwise.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace agssm
