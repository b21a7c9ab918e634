#include "agssm/config.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace agssm {

namespace {

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const char* key, const std::string& text) {
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("config: bad number for '") + key + "': " + text);
  }
  if (used != text.size())
    throw std::invalid_argument(std::string("config: trailing junk for '") + key + "': " + text);
  return v;
}

std::uint64_t parse_u64(const char* key, const std::string& text) {
  if (text.empty() || text[0] == '-')
    throw std::invalid_argument(std::string("config: bad integer for '") + key + "': " + text);
  std::size_t used = 0;
  std::uint64_t v;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("config: bad integer for '") + key + "': " + text);
  }
  if (used != text.size())
    throw std::invalid_argument(std::string("config: trailing junk for '") + key + "': " + text);
  return v;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

KvBinder KvBinder::loader(const std::string& text) {
  KvBinder b;
  b.load_ = true;
  std::istringstream stream(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    if (b.values_.count(key))
      throw std::invalid_argument("config: duplicate key '" + key + "'");
    b.values_[key] = trim(line.substr(eq + 1));
  }
  return b;
}

KvBinder KvBinder::dumper() { return KvBinder{}; }

const std::string* KvBinder::raw(const char* key) {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  consumed_.insert(key);
  return &it->second;
}

void KvBinder::emit(const char* key, std::string value) {
  out_.emplace_back(key, std::move(value));
}

void KvBinder::field(const char* key, double& v) {
  if (load_) {
    if (const std::string* s = raw(key)) v = parse_double(key, *s);
  } else {
    emit(key, format_double(v));
  }
}

void KvBinder::field(const char* key, std::size_t& v) {
  if (load_) {
    if (const std::string* s = raw(key)) v = (std::size_t)parse_u64(key, *s);
  } else {
    emit(key, std::to_string(v));
  }
}

void KvBinder::field(const char* key, std::string& v) {
  if (load_) {
    if (const std::string* s = raw(key)) v = *s;
  } else {
    emit(key, v);
  }
}

void KvBinder::field(const char* key, std::vector<double>& v) {
  if (load_) {
    const std::string* s = raw(key);
    if (!s) return;
    v.clear();
    std::string item;
    std::istringstream stream(*s);
    while (std::getline(stream, item, ',')) {
      item = trim(item);
      if (!item.empty()) v.push_back(parse_double(key, item));
    }
  } else {
    std::string joined;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) joined += ",";
      joined += format_double(v[i]);
    }
    emit(key, std::move(joined));
  }
}

void KvBinder::finish() const {
  if (!load_) return;
  for (const auto& [key, value] : values_)
    if (!consumed_.count(key))
      throw std::invalid_argument("config: unknown key '" + key + "'");
}

std::string KvBinder::text() const {
  std::string s;
  for (const auto& [key, value] : out_) {
    s += key;
    s += " = ";
    s += value;
    s += "\n";
  }
  return s;
}

}  // namespace agssm
