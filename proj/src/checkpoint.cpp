#include "agssm/checkpoint.hpp"

#include <cstring>

#include "agssm/serialize.hpp"

namespace agssm {

namespace {
constexpr char kMagic[8] = {'A', 'G', 'S', 'S', 'M', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  if (c.names.size() != c.params.size() || c.names.size() != c.adam_m.size() ||
      c.names.size() != c.adam_v.size()) {
    throw std::invalid_argument("checkpoint tensor lists out of step");
  }
  if (!c.swa_avg.empty() && c.swa_avg.size() != c.names.size()) {
    throw std::invalid_argument("swa average list out of step");
  }
  io::ByteWriter w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.str(c.config_text);
  w.str(c.rng_state);
  w.u64(c.epochs_done);
  w.f64(c.best_metric);
  w.u64(c.best_epoch);
  w.u64(c.adam_step);
  w.u64(c.swa_n_models);
  w.u64(c.names.size());
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    w.str(c.names[i]);
    w.tensor_f64(c.params[i]);
    w.tensor_f64(c.adam_m[i]);
    w.tensor_f64(c.adam_v[i]);
  }
  w.u8(c.swa_avg.empty() ? 0 : 1);
  for (const Tensor& t : c.swa_avg) w.tensor_f64(t);

  std::uint64_t hash = io::fnv1a(w.data().data(), w.data().size());
  w.u64(hash);
  io::write_file(path, w.data());
}

Checkpoint load_checkpoint(const std::string& path) {
  auto bytes = io::read_file(path);
  if (bytes.size() < sizeof(kMagic) + 12) throw io::FormatError(path + ": too short");
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  std::uint64_t computed = io::fnv1a(bytes.data(), bytes.size() - 8);
  if (stored != computed) throw io::IntegrityError(path + ": checksum mismatch");

  io::ByteReader r(bytes.data(), bytes.size() - 8);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw io::FormatError(path + ": not a checkpoint");
  std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw io::VersionError(path + ": checkpoint version " + std::to_string(version) +
                           ", expected " + std::to_string(kVersion));
  }
  Checkpoint c;
  c.config_text = r.str();
  c.rng_state = r.str();
  c.epochs_done = r.u64();
  c.best_metric = r.f64();
  c.best_epoch = r.u64();
  c.adam_step = r.u64();
  c.swa_n_models = r.u64();
  std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    c.names.push_back(r.str());
    c.params.push_back(r.tensor_f64());
    c.adam_m.push_back(r.tensor_f64());
    c.adam_v.push_back(r.tensor_f64());
  }
  if (r.u8() != 0) {
    for (std::uint64_t i = 0; i < n; ++i) c.swa_avg.push_back(r.tensor_f64());
  }
  if (r.remaining() != 0) throw io::FormatError(path + ": trailing bytes");
  return c;
}

}  // namespace agssm
