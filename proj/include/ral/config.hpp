// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat `key = value` text used for config files, manifests and echoes.
// Lines starting with '#' and blank lines are ignored.

#pragma once

#include "ral/synthdata.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ral {

using KeyValueList = std::vector<std::pair<std::string, std::string>>;

// Throws ConfigError on a line without '=' or an empty key.
KeyValueList parse_key_values(std::string_view text, const std::string& source);
std::string format_key_values(const KeyValueList& entries);

// Shortest representation that parses back to the same double.
std::string format_double(double v);

double parse_double(const std::string& key, const std::string& value);
long parse_long(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::vector<double> parse_double_list(const std::string& key, const std::string& value);
std::vector<long> parse_long_list(const std::string& key, const std::string& value);

// Sets one SynthConfig field; returns false when the key is not a
// SynthConfig key.
bool apply_synth_key(SynthConfig& c, const std::string& key, const std::string& value);
// Every key must be known.
SynthConfig synth_config_from(const KeyValueList& entries);

}  // namespace ral
