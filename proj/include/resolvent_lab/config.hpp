#pragma once

// JSON run configuration: parsing with key locations, dotted overrides and
// schema checks that name the offending line.

#include "json.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "resolvent_lab/model.hpp"

namespace resolvent_lab {

using Json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// Character iterator that publishes how far the parser has read.
struct TrackingIterator {
  using iterator_category = std::input_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  const char* at = nullptr;
  const char** cursor = nullptr;

  reference operator*() const { return *at; }
  TrackingIterator& operator++() {
    ++at;
    *cursor = at;
    return *this;
  }
  TrackingIterator operator++(int) {
    TrackingIterator old = *this;
    ++*this;
    return old;
  }
  friend bool operator==(const TrackingIterator& a, const TrackingIterator& b) {
    return a.at == b.at;
  }
  friend bool operator!=(const TrackingIterator& a, const TrackingIterator& b) {
    return a.at != b.at;
  }
};

/// DOM builder that also records the source line of every object key.
class LocatingSax {
 public:
  LocatingSax(Json& root, const char* begin, const char** cursor)
      : dom_(root), begin_(begin), cursor_(cursor) {}

  std::map<std::string, int> lines;

  bool null() { return value(), dom_.null(); }
  bool boolean(bool v) { return value(), dom_.boolean(v); }
  bool number_integer(Json::number_integer_t v) { return value(), dom_.number_integer(v); }
  bool number_unsigned(Json::number_unsigned_t v) { return value(), dom_.number_unsigned(v); }
  bool number_float(Json::number_float_t v, const std::string& s) {
    return value(), dom_.number_float(v, s);
  }
  bool string(std::string& v) { return value(), dom_.string(v); }
  bool binary(Json::binary_t& v) { return value(), dom_.binary(v); }

  bool start_object(std::size_t n) {
    value();
    path_.push_back({false, "", -1});
    return dom_.start_object(n);
  }
  bool key(std::string& k) {
    path_.back().name = k;
    lines[current_path()] = line_now();
    return dom_.key(k);
  }
  bool end_object() {
    path_.pop_back();
    return dom_.end_object();
  }
  bool start_array(std::size_t n) {
    value();
    path_.push_back({true, "", -1});
    return dom_.start_array(n);
  }
  bool end_array() {
    path_.pop_back();
    return dom_.end_array();
  }
  template <class Exception>
  bool parse_error(std::size_t pos, const std::string& tok, const Exception& ex) {
    return dom_.parse_error(pos, tok, ex);
  }

 private:
  struct Frame {
    bool array;
    std::string name;
    int index;
  };

  void value() {
    if (!path_.empty() && path_.back().array) {
      ++path_.back().index;
    }
  }
  std::string current_path() const {
    std::string out;
    for (const Frame& f : path_) {
      if (!out.empty()) {
        out += '.';
      }
      out += f.array ? std::to_string(f.index) : f.name;
    }
    return out;
  }
  int line_now() const {
    return 1 + static_cast<int>(std::count(begin_, *cursor_, '\n'));
  }

  nlohmann::detail::json_sax_dom_parser<Json> dom_;
  const char* begin_;
  const char** cursor_;
  std::vector<Frame> path_;
};

}  // namespace detail

/// A parsed configuration together with where each key came from.
struct SourcedJson {
  Json doc = Json::object();
  std::string source = "<config>";
  std::map<std::string, std::string> origin;  // dotted path -> "file:line" or "--set ..."

  std::string where(const std::string& path) const {
    std::string p = path;
    while (true) {
      if (auto it = origin.find(p); it != origin.end()) {
        return it->second;
      }
      const auto dot = p.rfind('.');
      if (dot == std::string::npos) {
        return source;
      }
      p.resize(dot);
    }
  }
};

inline SourcedJson parse_config_text(const std::string& text, const std::string& source) {
  SourcedJson out;
  out.source = source;
  const char* begin = text.data();
  const char* cursor = begin;
  detail::TrackingIterator first{begin, &cursor};
  detail::TrackingIterator last{begin + text.size(), &cursor};
  detail::LocatingSax sax(out.doc, begin, &cursor);
  try {
    Json::sax_parse(first, last, &sax);
  } catch (const Json::parse_error& e) {
    const int line = 1 + static_cast<int>(std::count(begin, cursor, '\n'));
    throw ConfigError(source + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
  }
  if (!out.doc.is_object()) {
    throw ConfigError(source + ":1: top level must be a JSON object");
  }
  for (const auto& [path, line] : sax.lines) {
    out.origin[path] = source + ":" + std::to_string(line);
  }
  return out;
}

inline SourcedJson load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError(path + ": cannot open config file");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

/// Apply "a.b.c=value"; the value is read as JSON when it parses, else as a string.
inline void apply_override(SourcedJson& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set " + assignment + ": expected key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) {
    value = text;
  }
  Json* node = &cfg.doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot - start);
    if (part.empty()) {
      throw ConfigError("--set " + assignment + ": empty path component");
    }
    if (!node->is_object()) {
      throw ConfigError("--set " + assignment + ": '" + path.substr(0, start - 1) +
                        "' is not an object");
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    if (node->is_null()) {
      *node = Json::object();
    }
    start = dot + 1;
  }
  for (auto it = cfg.origin.begin(); it != cfg.origin.end();) {
    it = (it->first == path || it->first.rfind(path + ".", 0) == 0) ? cfg.origin.erase(it)
                                                                     : std::next(it);
  }
  cfg.origin[path] = "--set " + assignment;
}

/// Typed, schema-checked view of one JSON object.
class ConfigNode {
 public:
  ConfigNode(const SourcedJson& root, const Json& node, std::string path)
      : root_(&root), node_(&node), path_(std::move(path)) {
    if (!node_->is_object()) {
      fail(path_, "expected an object");
    }
  }

  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
    throw ConfigError(root_->where(path) + ": " + (path.empty() ? "" : path + ": ") + msg);
  }

  void allow_only(const std::set<std::string>& keys) const {
    for (const auto& [k, v] : node_->items()) {
      if (!keys.count(k)) {
        std::string known;
        for (const auto& name : keys) {
          known += (known.empty() ? "" : ", ") + name;
        }
        fail(child(k), "unknown key '" + k + "' (allowed: " + known + ")");
      }
    }
  }

  bool has(const std::string& key) const { return node_->contains(key); }

  ConfigNode object(const std::string& key) const {
    if (!has(key)) {
      fail(child(key), "missing section");
    }
    return ConfigNode(*root_, node_->at(key), child(key));
  }

  double number(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }
  double number(const std::string& key) const {
    const Json& v = required(key);
    if (!v.is_number()) {
      fail(child(key), "expected a number");
    }
    return v.get<double>();
  }

  long integer(const std::string& key, long fallback) const {
    if (!has(key)) {
      return fallback;
    }
    const Json& v = node_->at(key);
    if (!v.is_number_integer()) {
      fail(child(key), "expected an integer");
    }
    return v.get<long>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) {
      return fallback;
    }
    const Json& v = node_->at(key);
    if (!v.is_number_unsigned()) {
      fail(child(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
  }
  std::string text(const std::string& key) const {
    const Json& v = required(key);
    if (!v.is_string()) {
      fail(child(key), "expected a string");
    }
    return v.get<std::string>();
  }

  std::string choice(const std::string& key, const std::vector<std::string>& options,
                     const std::string& fallback) const {
    const std::string v = text(key, fallback);
    if (std::find(options.begin(), options.end(), v) == options.end()) {
      std::string known;
      for (const auto& o : options) {
        known += (known.empty() ? "" : ", ") + o;
      }
      fail(child(key), "'" + v + "' is not one of: " + known);
    }
    return v;
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    return has(key) ? numbers(key) : fallback;
  }
  std::vector<double> numbers(const std::string& key) const {
    const Json& v = required(key);
    if (!v.is_array()) {
      fail(child(key), "expected an array of numbers");
    }
    std::vector<double> out;
    for (const Json& e : v) {
      if (!e.is_number()) {
        fail(child(key), "expected an array of numbers");
      }
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& key,
                                   std::vector<std::string> fallback) const {
    if (!has(key)) {
      return fallback;
    }
    const Json& v = node_->at(key);
    if (!v.is_array()) {
      fail(child(key), "expected an array of strings");
    }
    std::vector<std::string> out;
    for (const Json& e : v) {
      if (!e.is_string()) {
        fail(child(key), "expected an array of strings");
      }
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const Json& required(const std::string& key) const {
    if (!has(key)) {
      fail(child(key), "required key is missing");
    }
    return node_->at(key);
  }

  const SourcedJson* root_;
  const Json* node_;
  std::string path_;
};

// ---------------------------------------------------------------------------
// shared pieces of the schema

inline Potential read_potential(const ConfigNode& n) {
  n.allow_only({"kind", "v0", "xs", "vs", "dvs"});
  const std::string kind = n.choice("kind", {"zero", "cosine", "tabulated"}, "zero");
  try {
    if (kind == "zero") {
      return Potential::zero();
    }
    if (kind == "cosine") {
      return Potential::cosine(n.number("v0", 1.0));
    }
    return Potential::tabulated(n.numbers("xs"), n.numbers("vs"), n.numbers("dvs"));
  } catch (const std::invalid_argument& e) {
    n.fail(n.path(), e.what());
  }
}

inline Modulator read_modulator(const ConfigNode& n, const ModelParams& params) {
  n.allow_only({"kind", "level", "value"});
  const std::string kind = n.choice("kind", {"low_energy", "energy_indicator", "constant"},
                                    "low_energy");
  if (kind == "low_energy") {
    return Modulator::low_energy(params);
  }
  if (kind == "energy_indicator") {
    const double level = n.number("level");
    if (!(level > params.potential.inf())) {
      n.fail(n.child("level"), "level must exceed inf V so that h is not identically zero");
    }
    return Modulator::energy_indicator(level);
  }
  const double c = n.number("value");
  if (!(c > 0.0)) {
    n.fail(n.child("value"), "constant modulator must be positive");
  }
  return Modulator::constant(c);
}

inline Payoff read_payoff(const ConfigNode& n) {
  n.allow_only({"kind", "lo", "hi", "value"});
  const std::string kind =
      n.choice("kind", {"momentum_band", "energy_band", "constant", "zero"}, "momentum_band");
  if (kind == "zero") {
    return Payoff::zero();
  }
  if (kind == "constant") {
    const double c = n.number("value");
    if (!(c >= 0.0)) {
      n.fail(n.child("value"), "payoff must be nonnegative");
    }
    return Payoff::constant(c);
  }
  const double lo = n.number("lo");
  const double hi = n.number("hi");
  if (!(hi > lo)) {
    n.fail(n.child("hi"), "band needs hi > lo");
  }
  return kind == "momentum_band" ? Payoff::indicator_band(lo, hi) : Payoff::energy_band(lo, hi);
}

}  // namespace resolvent_lab
