#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agssm/tensor.hpp"

namespace agssm {
class KvBinder;
}

namespace agssm::synth {

// Compact storage for generated data; values are exactly representable in
// 32 bits so container round-trips are bit-exact.
struct F32Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;
  std::size_t size() const { return data.size(); }
  Tensor to_f64() const;
  static F32Tensor from_f64(const Tensor& t);
};

struct SynthConfig {
  std::size_t frames = 256;  // T per sequence
  std::size_t num_sequences = 16;
  std::size_t classes = 12;
  // Per-class positive rates; empty means geometric interpolation from
  // prevalence_head down to prevalence_tail.
  std::vector<double> prevalence;
  double prevalence_head = 0.3;
  double prevalence_tail = 0.1;
  double mean_active_len = 12.0;  // expected frames per active run

  std::size_t audio_lag = 2;    // burst onset precedes label onset by this
  std::size_t burst_len = 3;    // frames per audio burst
  double burst_amp = 3.0;
  double visual_amp = 6.0;      // plateau amplitude of the planted patch signal
  double visual_ramp = 2.0;     // frames from onset to full visual amplitude
  double noise_std = 0.5;

  std::size_t grid_h = 16, grid_w = 16;
  std::size_t d_v = 64;
  std::size_t d_a = 32;
  double frame_h = 224.0, frame_w = 224.0;
  double landmark_jitter = 2.0;  // stddev in pixels
  std::uint64_t seed = 0;

  void bind(KvBinder& b);
  // Fills prevalence if empty, then checks feasibility.
  void finalize();
  void validate() const;
};

struct SynthSample {
  F32Tensor patch_tokens;  // [T, N_v, D_v]
  F32Tensor landmarks;     // [T, 68, 2]
  F32Tensor audio_feats;   // [T, D_a]
  F32Tensor labels;        // [T, C]
};

struct Dataset {
  SynthConfig config;
  std::vector<SynthSample> samples;
};

// Deterministic in config.seed; sequences use independent derived streams so
// the result does not depend on generation order.
Dataset generate(const SynthConfig& cfg);

// Versioned container: magic + version, JSON manifest, little-endian f32
// payloads, integrity hash. Round-trip is bit-exact.
void export_dataset(const Dataset& data, const std::string& path);
Dataset import_dataset(const std::string& path);

// Empirical per-class positive rate across all sequences.
std::vector<double> empirical_prevalence(const Dataset& data);

}  // namespace agssm::synth
