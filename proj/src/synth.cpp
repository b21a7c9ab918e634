#include "agssm/synth.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "agssm/config.hpp"
#include "agssm/hga.hpp"
#include "agssm/rng.hpp"
#include "agssm/serialize.hpp"

namespace agssm::synth {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'A', 'G', 'S', 'S', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kFormatVersion = 1;

// Derived-stream ids; sequence index s uses stream s directly.
constexpr std::uint64_t kAudioDirStream = 0x100000000ull;
constexpr std::uint64_t kVisualDirStream = 0x200000000ull;

// Unit direction planted for one class.
std::vector<double> class_direction(std::uint64_t seed, std::uint64_t stream, std::size_t dim) {
  Rng rng(Rng::derive_seed(seed, stream));
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

// Fixed 68-point template in fractions of the frame, iBUG-style layout:
// jaw 0-16, brows 17-26, nose 27-35, eyes 36-47, mouth 48-67.
std::vector<std::pair<double, double>> landmark_template() {
  std::vector<std::pair<double, double>> pts(68);
  const double cx = 0.5, cy = 0.54;
  const double pi = std::numbers::pi;
  for (int i = 0; i <= 16; ++i) {  // jaw arc, left ear to right ear via chin
    const double a = pi * i / 16.0;
    pts[i] = {cx - 0.32 * std::cos(a), cy + 0.36 * std::sin(a)};
  }
  for (int i = 0; i < 5; ++i) {  // right eyebrow (image left)
    pts[17 + i] = {cx - 0.25 + 0.045 * i, cy - 0.20 - 0.012 * std::sin(pi * i / 4.0)};
  }
  for (int i = 0; i < 5; ++i) {  // left eyebrow
    pts[22 + i] = {cx + 0.07 + 0.045 * i, cy - 0.20 - 0.012 * std::sin(pi * i / 4.0)};
  }
  for (int i = 0; i < 4; ++i) {  // nose bridge
    pts[27 + i] = {cx, cy - 0.16 + 0.045 * i};
  }
  for (int i = 0; i < 5; ++i) {  // nostril line
    pts[31 + i] = {cx - 0.05 + 0.025 * i, cy + 0.02};
  }
  for (int i = 0; i < 6; ++i) {  // right eye hexagon
    const double a = pi - i * pi / 3.0;
    pts[36 + i] = {cx - 0.14 + 0.055 * std::cos(a), cy - 0.13 - 0.025 * std::sin(a)};
  }
  for (int i = 0; i < 6; ++i) {  // left eye hexagon
    const double a = pi - i * pi / 3.0;
    pts[42 + i] = {cx + 0.14 + 0.055 * std::cos(a), cy - 0.13 - 0.025 * std::sin(a)};
  }
  for (int i = 0; i < 12; ++i) {  // outer lip
    const double a = pi - i * pi / 6.0;
    pts[48 + i] = {cx + 0.11 * std::cos(a), cy + 0.20 - 0.055 * std::sin(a)};
  }
  for (int i = 0; i < 8; ++i) {  // inner lip
    const double a = pi - i * pi / 4.0;
    pts[60 + i] = {cx + 0.065 * std::cos(a), cy + 0.20 - 0.03 * std::sin(a)};
  }
  return pts;
}

F32Tensor quantize(const std::vector<std::size_t>& shape, const std::vector<double>& buf) {
  F32Tensor t;
  t.shape = shape;
  t.data.resize(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) t.data[i] = (float)buf[i];
  return t;
}

SynthSample generate_sequence(const SynthConfig& cfg, const RoiSpec& roi,
                              const std::vector<std::vector<double>>& audio_dirs,
                              const std::vector<std::vector<double>>& visual_dirs,
                              std::uint64_t seq_index) {
  Rng rng(Rng::derive_seed(cfg.seed, seq_index));
  const std::size_t t_len = cfg.frames, c_num = cfg.classes;
  const std::size_t n_v = cfg.grid_h * cfg.grid_w, d_v = cfg.d_v, d_a = cfg.d_a;

  // Two-state Markov chain per class: leave-active rate fixed by the mean
  // run length, enter rate solved from the stationary prevalence.
  std::vector<double> labels(t_len * c_num);
  const double p10 = 1.0 / cfg.mean_active_len;
  for (std::size_t c = 0; c < c_num; ++c) {
    const double pi_c = cfg.prevalence[c];
    const double p01 = p10 * pi_c / (1.0 - pi_c);
    int state = rng.uniform() < pi_c ? 1 : 0;
    for (std::size_t t = 0; t < t_len; ++t) {
      if (t > 0) {
        const double u = rng.uniform();
        state = state ? (u < p10 ? 0 : 1) : (u < p01 ? 1 : 0);
      }
      labels[t * c_num + c] = state;
    }
  }

  const auto tmpl = landmark_template();
  std::vector<double> landmarks(t_len * 68 * 2);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t k = 0; k < 68; ++k) {
      landmarks[(t * 68 + k) * 2 + 0] =
          tmpl[k].first * cfg.frame_w + rng.normal(0.0, cfg.landmark_jitter);
      landmarks[(t * 68 + k) * 2 + 1] =
          tmpl[k].second * cfg.frame_h + rng.normal(0.0, cfg.landmark_jitter);
    }
  }

  std::vector<double> audio(t_len * d_a);
  for (double& x : audio) x = rng.normal(0.0, cfg.noise_std);
  for (std::size_t c = 0; c < c_num; ++c) {
    for (std::size_t t = 1; t < t_len; ++t) {
      if (labels[t * c_num + c] != 1.0 || labels[(t - 1) * c_num + c] != 0.0) continue;
      // Burst leads the onset; what falls before frame 0 is dropped.
      const long start = (long)t - (long)cfg.audio_lag;
      for (long k = start; k < start + (long)cfg.burst_len; ++k) {
        if (k < 0 || k >= (long)t_len) continue;
        for (std::size_t j = 0; j < d_a; ++j)
          audio[(std::size_t)k * d_a + j] += cfg.burst_amp * audio_dirs[c][j];
      }
    }
  }

  std::vector<double> patches(t_len * n_v * d_v);
  for (double& x : patches) x = rng.normal(0.0, cfg.noise_std);
  for (std::size_t t = 0; t < t_len; ++t) {
    LandmarkSet lm;
    lm.points = Tensor({68, 2});
    for (std::size_t i = 0; i < 68 * 2; ++i) lm.points[i] = landmarks[t * 68 * 2 + i];
    lm.frame_h = cfg.frame_h;
    lm.frame_w = cfg.frame_w;
    const auto sets =
        map_landmarks_to_patches(lm, roi, cfg.grid_h, cfg.grid_w, cfg.frame_h, cfg.frame_w);
    for (std::size_t c = 0; c < c_num; ++c) {
      if (labels[t * c_num + c] != 1.0) continue;
      // Amplitude ramps over the first visual_ramp frames of the run, so the
      // audio burst is the sharp cue and vision confirms with a lag.
      std::size_t run = 0;
      while (run < t && labels[(t - run - 1) * c_num + c] == 1.0) ++run;
      const double ramp =
          cfg.visual_ramp > 0.0 ? std::min(1.0, (double)(run + 1) / cfg.visual_ramp) : 1.0;
      const double amp = cfg.visual_amp * ramp;
      const auto& patch_ids = sets[c % roi.count()];
      for (int id : patch_ids) {
        double* row = patches.data() + (t * n_v + (std::size_t)id) * d_v;
        for (std::size_t j = 0; j < d_v; ++j) row[j] += amp * visual_dirs[c][j];
      }
    }
  }

  SynthSample sample;
  sample.patch_tokens = quantize({t_len, n_v, d_v}, patches);
  sample.landmarks = quantize({t_len, 68, 2}, landmarks);
  sample.audio_feats = quantize({t_len, d_a}, audio);
  sample.labels = quantize({t_len, c_num}, labels);
  return sample;
}

}  // namespace

Tensor F32Tensor::to_f64() const {
  Tensor t(shape);
  for (std::size_t i = 0; i < data.size(); ++i) t[i] = data[i];
  return t;
}

F32Tensor F32Tensor::from_f64(const Tensor& t) {
  F32Tensor out;
  out.shape = t.shape();
  out.data.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out.data[i] = (float)t[i];
  return out;
}

void SynthConfig::bind(KvBinder& b) {
  b.field("frames", frames);
  b.field("num_sequences", num_sequences);
  b.field("classes", classes);
  b.field("prevalence", prevalence);
  b.field("prevalence_head", prevalence_head);
  b.field("prevalence_tail", prevalence_tail);
  b.field("mean_active_len", mean_active_len);
  b.field("audio_lag", audio_lag);
  b.field("burst_len", burst_len);
  b.field("burst_amp", burst_amp);
  b.field("visual_amp", visual_amp);
  b.field("visual_ramp", visual_ramp);
  b.field("noise_std", noise_std);
  b.field("grid_h", grid_h);
  b.field("grid_w", grid_w);
  b.field("d_v", d_v);
  b.field("d_a", d_a);
  b.field("frame_h", frame_h);
  b.field("frame_w", frame_w);
  b.field("landmark_jitter", landmark_jitter);
  b.field("seed", seed);
}

void SynthConfig::finalize() {
  if (prevalence.empty()) {
    prevalence.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      const double frac = classes == 1 ? 0.0 : (double)c / (double)(classes - 1);
      prevalence[c] =
          prevalence_head * std::pow(prevalence_tail / prevalence_head, frac);
    }
  }
  validate();
}

void SynthConfig::validate() const {
  if (frames == 0 || num_sequences == 0 || classes == 0 || grid_h == 0 || grid_w == 0 ||
      d_v == 0 || d_a == 0)
    throw std::invalid_argument("SynthConfig: dims must be positive");
  if (frames < audio_lag + 1)
    throw std::invalid_argument("SynthConfig: want frames >= audio_lag + 1");
  if (prevalence.size() != classes)
    throw std::invalid_argument("SynthConfig: prevalence length != classes");
  if (!(mean_active_len >= 1.0))
    throw std::invalid_argument("SynthConfig: want mean_active_len >= 1");
  if (!(noise_std >= 0.0) || !(frame_h > 0.0) || !(frame_w > 0.0))
    throw std::invalid_argument("SynthConfig: bad noise/frame values");
  const double p10 = 1.0 / mean_active_len;
  for (double pi_c : prevalence) {
    if (!(pi_c > 0.0) || !(pi_c < 1.0))
      throw std::invalid_argument("SynthConfig: prevalence entries must lie in (0,1)");
    const double p01 = p10 * pi_c / (1.0 - pi_c);
    if (!(p01 > 0.0) || !(p01 < 1.0))
      throw std::invalid_argument("SynthConfig: infeasible Markov calibration for prevalence " +
                                  std::to_string(pi_c));
  }
}

Dataset generate(const SynthConfig& raw_cfg) {
  SynthConfig cfg = raw_cfg;
  cfg.finalize();
  const RoiSpec roi = RoiSpec::default_face68();
  std::vector<std::vector<double>> audio_dirs(cfg.classes), visual_dirs(cfg.classes);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    audio_dirs[c] = class_direction(cfg.seed, kAudioDirStream + c, cfg.d_a);
    visual_dirs[c] = class_direction(cfg.seed, kVisualDirStream + c, cfg.d_v);
  }
  Dataset data;
  data.config = cfg;
  data.samples.reserve(cfg.num_sequences);
  for (std::size_t s = 0; s < cfg.num_sequences; ++s)
    data.samples.push_back(generate_sequence(cfg, roi, audio_dirs, visual_dirs, s));
  return data;
}

namespace {

struct TensorEntry {
  std::string name;
  const F32Tensor* tensor;
};

std::vector<TensorEntry> tensor_entries(const Dataset& data) {
  std::vector<TensorEntry> entries;
  for (std::size_t s = 0; s < data.samples.size(); ++s) {
    const std::string prefix = "seq" + std::to_string(s) + "/";
    const SynthSample& sample = data.samples[s];
    entries.push_back({prefix + "patch_tokens", &sample.patch_tokens});
    entries.push_back({prefix + "landmarks", &sample.landmarks});
    entries.push_back({prefix + "audio_feats", &sample.audio_feats});
    entries.push_back({prefix + "labels", &sample.labels});
  }
  return entries;
}

}  // namespace

void export_dataset(const Dataset& data, const std::string& path) {
  json manifest;
  manifest["config_text"] = dump_config(data.config);
  manifest["num_sequences"] = data.samples.size();
  json tensors = json::array();
  for (const TensorEntry& e : tensor_entries(data)) {
    json t;
    t["name"] = e.name;
    t["shape"] = e.tensor->shape;
    t["dtype"] = "f32";
    tensors.push_back(std::move(t));
  }
  manifest["tensors"] = std::move(tensors);

  io::ByteWriter w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kFormatVersion);
  w.str(manifest.dump());
  for (const TensorEntry& e : tensor_entries(data)) {
    w.u32((std::uint32_t)e.tensor->shape.size());
    for (std::size_t d : e.tensor->shape) w.u64(d);
    for (float v : e.tensor->data) w.f32(v);
  }
  io::ByteWriter out = std::move(w);
  const std::uint64_t hash = io::fnv1a(out.data().data(), out.data().size());
  out.u64(hash);
  io::write_file(path, out.data());
}

Dataset import_dataset(const std::string& path) {
  const std::vector<std::uint8_t> bytes = io::read_file(path);
  if (bytes.size() < sizeof(kMagic) + 4 + 8) throw io::FormatError("dataset file too short");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw io::FormatError("not a dataset file (bad magic)");
  const std::size_t payload_len = bytes.size() - 8;
  io::ByteReader trailer(bytes.data() + payload_len, 8);
  const std::uint64_t stored_hash = trailer.u64();
  if (io::fnv1a(bytes.data(), payload_len) != stored_hash)
    throw io::IntegrityError("dataset hash mismatch (corrupt or truncated)");

  io::ByteReader r(bytes.data(), payload_len);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw io::VersionError("unsupported dataset format version " + std::to_string(version) +
                           " (expected " + std::to_string(kFormatVersion) + ")");
  json manifest;
  try {
    manifest = json::parse(r.str());
  } catch (const json::exception& e) {
    throw io::FormatError(std::string("bad dataset manifest: ") + e.what());
  }

  Dataset data;
  data.config = load_config_text<SynthConfig>(manifest.at("config_text").get<std::string>());
  data.config.finalize();
  const std::size_t num_sequences = manifest.at("num_sequences").get<std::size_t>();
  const json& tensors = manifest.at("tensors");
  if (tensors.size() != num_sequences * 4)
    throw io::FormatError("dataset manifest: tensor count mismatch");

  data.samples.resize(num_sequences);
  std::size_t idx = 0;
  for (std::size_t s = 0; s < num_sequences; ++s) {
    for (F32Tensor* dst : {&data.samples[s].patch_tokens, &data.samples[s].landmarks,
                           &data.samples[s].audio_feats, &data.samples[s].labels}) {
      const json& meta = tensors.at(idx++);
      const std::uint32_t rank = r.u32();
      if (rank > 8) throw io::FormatError("dataset tensor: implausible rank");
      std::vector<std::size_t> shape(rank);
      std::size_t numel = 1;
      for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = r.u64();
        numel *= shape[i];
      }
      if (meta.at("shape").get<std::vector<std::size_t>>() != shape)
        throw io::FormatError("dataset tensor '" + meta.at("name").get<std::string>() +
                              "': shape disagrees with manifest");
      dst->shape = std::move(shape);
      dst->data.resize(numel);
      for (std::size_t i = 0; i < numel; ++i) dst->data[i] = r.f32();
    }
  }
  if (r.remaining() != 0) throw io::FormatError("dataset file has trailing bytes");
  return data;
}

std::vector<double> empirical_prevalence(const Dataset& data) {
  const std::size_t c_num = data.config.classes;
  std::vector<double> rate(c_num, 0.0);
  std::size_t frames = 0;
  for (const SynthSample& s : data.samples) {
    const std::size_t t_len = s.labels.shape.at(0);
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t c = 0; c < c_num; ++c) rate[c] += s.labels.data[t * c_num + c];
    frames += t_len;
  }
  for (double& x : rate) x /= (double)frames;
  return rate;
}

}  // namespace agssm::synth
