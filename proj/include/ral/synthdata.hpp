// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic corpus for partially relevant video retrieval.
//
// A video is a sequence of segments, each showing one concept: its frames are
// the concept prototype plus Gaussian noise. A query describes one segment of
// one video: content words are noisy copies of the segment's prototype and
// function words come from a small shared pool that carries no concept.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace ral {

// Concept id used for injected noise segments.
constexpr int kDistractorConcept = -1;

struct Segment {
  int concept_id = 0;
  Eigen::Index frames = 0;
};

struct SyntheticVideo {
  int id = 0;
  std::vector<Segment> segments;
  Eigen::MatrixXd frames;          // [N_f x input_dim]
  std::vector<int> frame_segment;  // segment index of each frame

  Eigen::Index num_frames() const { return frames.rows(); }
};

enum class WordKind : std::uint8_t { content = 0, function = 1 };

struct SyntheticQuery {
  int id = 0;
  int video_id = 0;
  int segment = 0;        // index into the target video's segments
  Eigen::MatrixXd words;  // [L x input_dim]
  std::vector<WordKind> kinds;
  double mv_ratio = 1.0;  // target segment frames / N_f

  Eigen::Index num_words() const { return words.rows(); }
};

struct Split {
  std::vector<SyntheticVideo> videos;
  std::vector<SyntheticQuery> queries;

  // Throws DataError when the id is absent.
  std::size_t video_index(int video_id) const;
  const SyntheticVideo& video(int video_id) const { return videos[video_index(video_id)]; }
  // Indices into `queries` labeled to the video, in corpus order.
  std::vector<std::size_t> queries_of(int video_id) const;
};

struct SynthConfig {
  std::uint64_t seed = 0;
  int concepts = 40;
  int train_videos = 200;
  int test_videos = 100;
  int min_segments = 3;
  int max_segments = 6;
  int min_segment_frames = 8;
  int max_segment_frames = 20;
  int queries_per_video = 5;
  int min_words = 4;
  int max_words = 10;
  double function_word_rate = 0.3;
  double frame_noise_std = 0.3;
  double word_noise_std = 0.3;
  int input_dim = 16;
  int function_pool = 8;
  double max_concept_cosine = 0.3;
  // Each concept appears in at most one segment per split. Makes every
  // query's target unique; requires concepts >= segments in each split.
  bool exclusive_concepts = false;
};

struct Dataset {
  SynthConfig config;
  Eigen::MatrixXd prototypes;     // [concepts x input_dim], unit rows
  Eigen::MatrixXd function_pool;  // [function_pool x input_dim], unit rows
  Split train;
  Split test;
};

// Throws ConfigError on invalid counts (e.g. fewer than 2 concepts).
Dataset generate(const SynthConfig& config);

// Prepends round(p * N_f) frames of a fresh random segment. The new segment
// is labeled kDistractorConcept and becomes segment 0.
SyntheticVideo inject_noise(const SyntheticVideo& video, double p, std::mt19937_64& rng,
                            double noise_std);

// Applies inject_noise to every video and updates the queries' segment
// indices and mv ratios.
Split inject_noise(const Split& split, double p, std::uint64_t seed, double noise_std);

// Dataset directory: manifest.txt, videos.bin, queries.bin, labels.bin.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
// Throws DataError on a missing file, truncation or checksum mismatch.
Dataset load_dataset(const std::filesystem::path& dir);

// FNV-1a over the payload bytes of videos.bin, queries.bin and labels.bin.
std::uint64_t dataset_checksum(const std::filesystem::path& dir);

std::vector<std::pair<std::string, std::string>> synth_config_entries(const SynthConfig& c);

}  // namespace ral
