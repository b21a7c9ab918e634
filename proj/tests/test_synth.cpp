#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "agssm/hga.hpp"
#include "agssm/serialize.hpp"
#include "agssm/synth.hpp"
#include "doctest.h"

using namespace agssm;
using synth::Dataset;
using synth::SynthConfig;

namespace {

SynthConfig tiny_config() {
  SynthConfig cfg;
  cfg.frames = 96;
  cfg.num_sequences = 3;
  cfg.classes = 4;
  cfg.grid_h = 4;
  cfg.grid_w = 4;
  cfg.d_v = 8;
  cfg.d_a = 6;
  cfg.prevalence = {0.3, 0.2, 0.1, 0.05};
  cfg.seed = 5;
  return cfg;
}

bool samples_equal(const synth::SynthSample& a, const synth::SynthSample& b) {
  return a.patch_tokens.data == b.patch_tokens.data && a.landmarks.data == b.landmarks.data &&
         a.audio_feats.data == b.audio_feats.data && a.labels.data == b.labels.data &&
         a.patch_tokens.shape == b.patch_tokens.shape;
}

void patch_u64_le(std::vector<std::uint8_t>& bytes, std::size_t off, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes[off + (std::size_t)i] = (std::uint8_t)(v >> (8 * i));
}

// Closed-form linear probe for one class: fit the difference-of-means
// direction on the first half of the frames, score the second half.
double probe_f1(const Dataset& data, std::size_t cls, bool zero_roi) {
  const SynthConfig& cfg = data.config;
  const RoiSpec roi = RoiSpec::default_face68();
  const std::size_t region = cls % roi.count();
  const std::size_t d_v = cfg.d_v, n_v = cfg.grid_h * cfg.grid_w;

  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  for (const synth::SynthSample& s : data.samples) {
    const std::size_t t_len = s.labels.shape[0];
    for (std::size_t t = 0; t < t_len; ++t) {
      LandmarkSet lm;
      lm.frame_h = cfg.frame_h;
      lm.frame_w = cfg.frame_w;
      lm.points = Tensor({68, 2});
      for (std::size_t i = 0; i < 68 * 2; ++i)
        lm.points[i] = s.landmarks.data[t * 68 * 2 + i];
      const auto sets =
          map_landmarks_to_patches(lm, roi, cfg.grid_h, cfg.grid_w, cfg.frame_h, cfg.frame_w);
      std::vector<double> x(d_v, 0.0);
      if (!zero_roi) {
        for (int id : sets[region])
          for (std::size_t j = 0; j < d_v; ++j)
            x[j] += s.patch_tokens.data[(t * n_v + (std::size_t)id) * d_v + j];
        for (double& v : x) v /= (double)sets[region].size();
      }
      feats.push_back(std::move(x));
      labels.push_back((int)s.labels.data[t * cfg.classes + cls]);
    }
  }

  const std::size_t half = feats.size() / 2;
  std::vector<double> mu_pos(d_v, 0.0), mu_neg(d_v, 0.0);
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < half; ++i) {
    auto& mu = labels[i] ? mu_pos : mu_neg;
    (labels[i] ? n_pos : n_neg)++;
    for (std::size_t j = 0; j < d_v; ++j) mu[j] += feats[i][j];
  }
  REQUIRE(n_pos > 0);
  REQUIRE(n_neg > 0);
  for (std::size_t j = 0; j < d_v; ++j) {
    mu_pos[j] /= (double)n_pos;
    mu_neg[j] /= (double)n_neg;
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = half; i < feats.size(); ++i) {
    double score = 0.0;
    for (std::size_t j = 0; j < d_v; ++j)
      score += (feats[i][j] - 0.5 * (mu_pos[j] + mu_neg[j])) * (mu_pos[j] - mu_neg[j]);
    const bool pred = score > 0.0;
    if (pred && labels[i]) ++tp;
    if (pred && !labels[i]) ++fp;
    if (!pred && labels[i]) ++fn;
  }
  return 2.0 * (double)tp / std::max<std::size_t>(1, 2 * tp + fp + fn);
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("same seed is bit-identical, different seed is not") {
  SynthConfig cfg = tiny_config();
  Dataset a = synth::generate(cfg);
  Dataset b = synth::generate(cfg);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t s = 0; s < a.samples.size(); ++s)
    CHECK(samples_equal(a.samples[s], b.samples[s]));
  cfg.seed = 6;
  Dataset c = synth::generate(cfg);
  CHECK(!samples_equal(a.samples[0], c.samples[0]));
}

TEST_CASE("shapes and binary labels") {
  SynthConfig cfg = tiny_config();
  Dataset d = synth::generate(cfg);
  REQUIRE(d.samples.size() == cfg.num_sequences);
  for (const auto& s : d.samples) {
    CHECK(s.patch_tokens.shape ==
          std::vector<std::size_t>{cfg.frames, cfg.grid_h * cfg.grid_w, cfg.d_v});
    CHECK(s.landmarks.shape == std::vector<std::size_t>{cfg.frames, 68, 2});
    CHECK(s.audio_feats.shape == std::vector<std::size_t>{cfg.frames, cfg.d_a});
    CHECK(s.labels.shape == std::vector<std::size_t>{cfg.frames, cfg.classes});
    for (float v : s.labels.data) CHECK((v == 0.0f || v == 1.0f));
  }
}

TEST_CASE("geometric prevalence fill hits head and tail") {
  SynthConfig cfg;
  cfg.classes = 12;
  cfg.prevalence_head = 0.3;
  cfg.prevalence_tail = 0.02;
  cfg.finalize();
  REQUIRE(cfg.prevalence.size() == 12);
  CHECK(cfg.prevalence.front() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(cfg.prevalence.back() == doctest::Approx(0.02).epsilon(1e-12));
  for (std::size_t c = 1; c < 12; ++c) CHECK(cfg.prevalence[c] < cfg.prevalence[c - 1]);
  // Geometric: constant ratio between neighbors.
  const double r0 = cfg.prevalence[1] / cfg.prevalence[0];
  for (std::size_t c = 2; c < 12; ++c)
    CHECK(cfg.prevalence[c] / cfg.prevalence[c - 1] == doctest::Approx(r0).epsilon(1e-10));
}

TEST_CASE("infeasible configs are rejected") {
  SynthConfig cfg = tiny_config();
  cfg.prevalence = {0.3, 0.2, 0.1, 1.5};
  CHECK_THROWS(synth::generate(cfg));
  cfg = tiny_config();
  cfg.frames = 2;  // < audio_lag + 1
  CHECK_THROWS(synth::generate(cfg));
  cfg = tiny_config();
  cfg.mean_active_len = 0.5;
  CHECK_THROWS(synth::generate(cfg));
}

TEST_CASE("empirical prevalence within 20% of target over 1e5 frames") {
  SynthConfig cfg;
  cfg.frames = 512;
  cfg.num_sequences = 200;  // 102400 frames
  cfg.classes = 12;
  cfg.grid_h = 2;
  cfg.grid_w = 2;
  cfg.d_v = 4;
  cfg.d_a = 2;
  cfg.landmark_jitter = 0.0;
  cfg.seed = 9;
  Dataset d = synth::generate(cfg);
  const auto rate = synth::empirical_prevalence(d);
  REQUIRE(rate.size() == 12);
  for (std::size_t c = 0; c < 12; ++c) {
    const double target = d.config.prevalence[c];
    CHECK(std::fabs(rate[c] - target) / target < 0.20);
  }
}

TEST_CASE("audio bursts precede onsets by exactly audio_lag") {
  // Detect bursts by per-frame audio energy; with burst_len = 1 the
  // cross-correlation with the onset indicator has a unique peak.
  SynthConfig cfg;
  cfg.frames = 4096;
  cfg.num_sequences = 2;
  cfg.classes = 3;
  cfg.prevalence = {0.1, 0.1, 0.1};
  cfg.grid_h = 2;
  cfg.grid_w = 2;
  cfg.d_v = 4;
  cfg.d_a = 16;
  cfg.audio_lag = 2;
  cfg.burst_len = 1;
  cfg.burst_amp = 6.0;
  cfg.seed = 21;
  Dataset d = synth::generate(cfg);
  const std::size_t max_lag = 6;
  std::vector<double> corr(max_lag + 1, 0.0);
  for (const auto& s : d.samples) {
    const std::size_t t_len = s.labels.shape[0];
    std::vector<double> energy(t_len, 0.0);
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t j = 0; j < cfg.d_a; ++j) {
        const double v = s.audio_feats.data[t * cfg.d_a + j];
        energy[t] += v * v;
      }
    for (std::size_t t = 1; t < t_len; ++t) {
      bool onset = false;
      for (std::size_t c = 0; c < cfg.classes; ++c)
        if (s.labels.data[t * cfg.classes + c] == 1.0f &&
            s.labels.data[(t - 1) * cfg.classes + c] == 0.0f)
          onset = true;
      if (!onset) continue;
      for (std::size_t lag = 0; lag <= max_lag; ++lag)
        if (t >= lag) corr[lag] += energy[t - lag];
    }
  }
  for (std::size_t lag = 0; lag <= max_lag; ++lag) {
    if (lag == cfg.audio_lag) continue;
    CHECK(corr[cfg.audio_lag] > corr[lag]);
  }
}

TEST_CASE("signal lives only in the assigned roi patches") {
  SynthConfig cfg;
  cfg.frames = 512;
  cfg.num_sequences = 4;
  cfg.classes = 4;
  cfg.prevalence = {0.3, 0.25, 0.2, 0.15};
  cfg.grid_h = 8;
  cfg.grid_w = 8;
  cfg.d_v = 16;
  cfg.d_a = 8;
  cfg.visual_amp = 3.0;
  cfg.visual_ramp = 1.0;
  cfg.seed = 31;
  Dataset d = synth::generate(cfg);
  const double with_signal = probe_f1(d, 0, false);
  const double without = probe_f1(d, 0, true);
  // The probe reads the class's own region pool: strong with the planted
  // signal, chance-level once those patches are erased.
  CHECK(with_signal > 0.8);
  CHECK(without < 0.55);
  CHECK(with_signal - without > 0.3);
}

TEST_CASE("container round-trip is bit-exact") {
  SynthConfig cfg = tiny_config();
  Dataset d = synth::generate(cfg);
  const std::string path = "synth_probe.ds";
  synth::export_dataset(d, path);
  Dataset back = synth::import_dataset(path);
  REQUIRE(back.samples.size() == d.samples.size());
  for (std::size_t s = 0; s < d.samples.size(); ++s)
    CHECK(samples_equal(d.samples[s], back.samples[s]));
  CHECK(back.config.frames == cfg.frames);
  CHECK(back.config.classes == cfg.classes);
  CHECK(back.config.prevalence == d.config.prevalence);
  // Re-export of the imported data is byte-identical.
  const std::string path2 = "synth_probe2.ds";
  synth::export_dataset(back, path2);
  CHECK(io::read_file(path) == io::read_file(path2));
  std::remove(path2.c_str());
  std::remove(path.c_str());
}

TEST_CASE("corruption, truncation and version mismatch are distinct errors") {
  SynthConfig cfg = tiny_config();
  Dataset d = synth::generate(cfg);
  const std::string path = "synth_err_probe.ds";
  synth::export_dataset(d, path);
  std::vector<std::uint8_t> bytes = io::read_file(path);
  std::remove(path.c_str());

  SUBCASE("flipped payload byte -> integrity error") {
    std::vector<std::uint8_t> bad = bytes;
    bad[bad.size() / 2] ^= 0x20;
    io::write_file(path, bad);
    CHECK_THROWS_AS(synth::import_dataset(path), io::IntegrityError);
    std::remove(path.c_str());
  }
  SUBCASE("truncation -> error, never partial data") {
    std::vector<std::uint8_t> bad(bytes.begin(), bytes.begin() + (long)bytes.size() / 2);
    io::write_file(path, bad);
    CHECK_THROWS_AS(synth::import_dataset(path), io::FormatError);
    std::remove(path.c_str());
    io::write_file(path, std::vector<std::uint8_t>{'A', 'G'});
    CHECK_THROWS_AS(synth::import_dataset(path), io::FormatError);
    std::remove(path.c_str());
  }
  SUBCASE("future format version -> version error") {
    std::vector<std::uint8_t> bad = bytes;
    bad[8] = 99;  // u32 version sits after the 8-byte magic
    const std::uint64_t h = io::fnv1a(bad.data(), bad.size() - 8);
    patch_u64_le(bad, bad.size() - 8, h);
    io::write_file(path, bad);
    CHECK_THROWS_AS(synth::import_dataset(path), io::VersionError);
    std::remove(path.c_str());
  }
  SUBCASE("wrong magic -> format error") {
    std::vector<std::uint8_t> bad = bytes;
    bad[0] = 'X';
    const std::uint64_t h = io::fnv1a(bad.data(), bad.size() - 8);
    patch_u64_le(bad, bad.size() - 8, h);
    io::write_file(path, bad);
    CHECK_THROWS_AS(synth::import_dataset(path), io::FormatError);
    std::remove(path.c_str());
  }
}

TEST_CASE("f32 round-trip through f64 is exact") {
  synth::F32Tensor t;
  t.shape = {2, 2};
  t.data = {0.1f, -3.5f, 1e-20f, 4096.25f};
  Tensor w = t.to_f64();
  synth::F32Tensor back = synth::F32Tensor::from_f64(w);
  CHECK(back.data == t.data);
}

}
