// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ral/config.hpp"

#include "ral/errors.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace ral {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

std::vector<std::string> split_commas(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

}  // namespace

KeyValueList parse_key_values(std::string_view text, const std::string& source) {
  KeyValueList out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::string format_key_values(const KeyValueList& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size() || !std::isfinite(v)) {
    bad_value(key, value, "a finite number");
  }
  return v;
}

long parse_long(const std::string& key, const std::string& value) {
  long v = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    bad_value(key, value, "an integer");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    bad_value(key, value, "an unsigned integer");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  bad_value(key, value, "true/false");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& item : split_commas(value)) out.push_back(parse_double(key, item));
  if (out.empty()) bad_value(key, value, "a comma-separated list");
  return out;
}

std::vector<long> parse_long_list(const std::string& key, const std::string& value) {
  std::vector<long> out;
  for (const auto& item : split_commas(value)) out.push_back(parse_long(key, item));
  if (out.empty()) bad_value(key, value, "a comma-separated list");
  return out;
}

bool apply_synth_key(SynthConfig& c, const std::string& key, const std::string& value) {
  auto as_int = [&] { return static_cast<int>(parse_long(key, value)); };
  if (key == "seed") c.seed = parse_u64(key, value);
  else if (key == "concepts") c.concepts = as_int();
  else if (key == "train_videos") c.train_videos = as_int();
  else if (key == "test_videos") c.test_videos = as_int();
  else if (key == "min_segments") c.min_segments = as_int();
  else if (key == "max_segments") c.max_segments = as_int();
  else if (key == "min_segment_frames") c.min_segment_frames = as_int();
  else if (key == "max_segment_frames") c.max_segment_frames = as_int();
  else if (key == "queries_per_video") c.queries_per_video = as_int();
  else if (key == "min_words") c.min_words = as_int();
  else if (key == "max_words") c.max_words = as_int();
  else if (key == "function_word_rate") c.function_word_rate = parse_double(key, value);
  else if (key == "frame_noise_std") c.frame_noise_std = parse_double(key, value);
  else if (key == "word_noise_std") c.word_noise_std = parse_double(key, value);
  else if (key == "input_dim") c.input_dim = as_int();
  else if (key == "function_pool") c.function_pool = as_int();
  else if (key == "max_concept_cosine") c.max_concept_cosine = parse_double(key, value);
  else if (key == "exclusive_concepts") c.exclusive_concepts = parse_bool(key, value);
  else return false;
  return true;
}

SynthConfig synth_config_from(const KeyValueList& entries) {
  SynthConfig c;
  for (const auto& [k, v] : entries) {
    if (!apply_synth_key(c, k, v)) throw ConfigError("unknown config key: " + k);
  }
  return c;
}

}  // namespace ral
