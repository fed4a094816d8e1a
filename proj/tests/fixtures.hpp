// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small corpora and helpers shared by the test binaries.

#pragma once

#include "ral/synthdata.hpp"
#include "ral/trainer.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

namespace ral::testing {

inline SynthConfig tiny_synth(std::uint64_t seed = 1) {
  SynthConfig c;
  c.seed = seed;
  c.concepts = 12;
  c.train_videos = 12;
  c.test_videos = 8;
  c.min_segments = 2;
  c.max_segments = 3;
  c.min_segment_frames = 4;
  c.max_segment_frames = 6;
  c.queries_per_video = 3;
  c.min_words = 3;
  c.max_words = 5;
  c.input_dim = 8;
  return c;
}

inline TrainConfig tiny_train(std::uint64_t seed = 1) {
  TrainConfig t;
  t.seed = seed;
  t.epochs = 2;
  t.batch_size = 6;
  t.lr = 1e-3;
  t.proxies = 2;
  t.joint_dim = 8;
  return t;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                                     double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ral_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace ral::testing
