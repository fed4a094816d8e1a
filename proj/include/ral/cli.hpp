// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: gen-data, train, eval, ablate, analyze.
//
// Exit codes: 0 success, 1 internal failure, 2 configuration error, 3 data
// error, 4 numeric failure. Failures print one line to the error stream.

#pragma once

#include "ral/config.hpp"
#include "ral/synthdata.hpp"
#include "ral/trainer.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace ral {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

struct RunConfig {
  SynthConfig synth;
  TrainConfig train;
};

// Applies one key to whichever section owns it ("seed" sets both). Throws
// ConfigError for unknown keys.
void apply_run_key(RunConfig& c, const std::string& key, const std::string& value);
RunConfig run_config_from(const KeyValueList& entries);
// The effective configuration as a valid config file.
KeyValueList run_config_entries(const RunConfig& c);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace ral
