#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace agssm {

// Flat "key = value" config text, '#' comments. One bind() per config struct
// drives both directions: loading fills fields and rejects unknown keys,
// dumping emits canonical text in bind order (doubles round-trip exactly).
class KvBinder {
 public:
  static KvBinder loader(const std::string& text);
  static KvBinder dumper();

  void field(const char* key, double& v);
  void field(const char* key, std::size_t& v);  // also covers uint64_t here
  void field(const char* key, std::string& v);
  void field(const char* key, std::vector<double>& v);  // comma-separated

  bool loading() const { return load_; }
  // Loader: error on keys no field() consumed.
  void finish() const;
  // Dumper: the canonical text.
  std::string text() const;

 private:
  bool load_ = false;
  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
  std::vector<std::pair<std::string, std::string>> out_;
  const std::string* raw(const char* key);
  void emit(const char* key, std::string value);
};

template <typename Cfg>
Cfg load_config_text(const std::string& text) {
  Cfg cfg;
  KvBinder b = KvBinder::loader(text);
  cfg.bind(b);
  b.finish();
  return cfg;
}

template <typename Cfg>
std::string dump_config(const Cfg& cfg) {
  Cfg copy = cfg;
  KvBinder b = KvBinder::dumper();
  copy.bind(b);
  return b.text();
}

}  // namespace agssm
