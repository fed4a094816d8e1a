// Copyright (c) 2026, The ral-prvr Authors
// SPDX-License-Identifier: Apache-2.0

#include "ral/synthdata.hpp"

#include "ral/binary_io.hpp"
#include "ral/config.hpp"
#include "ral/errors.hpp"
#include "ral/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ral {

namespace {

constexpr std::string_view kVideosMagic = "RALVIDS1";
constexpr std::string_view kQueriesMagic = "RALQRYS1";
constexpr std::string_view kLabelsMagic = "RALLABL1";
constexpr const char* kFormat = "ral-synth-v1";

Eigen::RowVectorXd gaussian_row(Eigen::Index dim, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::RowVectorXd v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = std * n(rng);
  return v;
}

Eigen::RowVectorXd random_unit(Eigen::Index dim, std::mt19937_64& rng) {
  Eigen::RowVectorXd v = gaussian_row(dim, 1.0, rng);
  while (v.norm() < 1e-12) v = gaussian_row(dim, 1.0, rng);
  return v / v.norm();
}

int uniform_int(int lo, int hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

void validate(const SynthConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError("synthetic data: " + m); };
  if (c.concepts < 2) fail("concept count must be at least 2");
  if (c.train_videos < 1 || c.test_videos < 1) fail("video counts must be at least 1");
  if (c.queries_per_video < 1) fail("queries_per_video must be at least 1");
  if (c.min_segments < 1 || c.max_segments < c.min_segments) fail("bad segment range");
  if (c.max_segments > c.concepts) fail("max_segments exceeds concept count");
  if (c.min_segment_frames < 1 || c.max_segment_frames < c.min_segment_frames) {
    fail("bad segment frame range");
  }
  if (c.min_words < 1 || c.max_words < c.min_words) fail("bad word range");
  if (c.function_word_rate < 0.0 || c.function_word_rate > 1.0) {
    fail("function_word_rate must lie in [0, 1]");
  }
  if (c.frame_noise_std < 0.0 || c.word_noise_std < 0.0) fail("noise std must be >= 0");
  if (c.input_dim < 2) fail("input_dim must be at least 2");
  if (c.function_pool < 1) fail("function_pool must be at least 1");
  if (c.exclusive_concepts) {
    const long need = static_cast<long>(std::max(c.train_videos, c.test_videos)) * c.max_segments;
    if (need > c.concepts) fail("exclusive_concepts needs concepts >= videos * max_segments");
  }
}

Eigen::MatrixXd sample_prototypes(const SynthConfig& c, std::mt19937_64& rng) {
  Eigen::MatrixXd protos(c.concepts, c.input_dim);
  int accepted = 0;
  long attempts = 0;
  while (accepted < c.concepts) {
    if (++attempts > 1000000) {
      throw ConfigError("synthetic data: cannot place concepts under the cosine bound");
    }
    Eigen::RowVectorXd cand = random_unit(c.input_dim, rng);
    bool ok = true;
    for (int j = 0; j < accepted && ok; ++j) ok = protos.row(j).dot(cand) <= c.max_concept_cosine;
    if (ok) protos.row(accepted++) = cand;
  }
  return protos;
}

struct Generator {
  const SynthConfig& c;
  const Eigen::MatrixXd& protos;
  const Eigen::MatrixXd& pool;
  std::mt19937_64& rng;
  int next_query_id = 0;

  Split make_split(int first_video_id, int n_videos) {
    Split split;
    std::vector<int> exclusive_pool;
    if (c.exclusive_concepts) {
      exclusive_pool.resize(static_cast<std::size_t>(c.concepts));
      std::iota(exclusive_pool.begin(), exclusive_pool.end(), 0);
      std::shuffle(exclusive_pool.begin(), exclusive_pool.end(), rng);
    }
    std::vector<int> concept_ids(static_cast<std::size_t>(c.concepts));
    std::iota(concept_ids.begin(), concept_ids.end(), 0);

    for (int v = 0; v < n_videos; ++v) {
      SyntheticVideo video;
      video.id = first_video_id + v;
      const int n_seg = uniform_int(c.min_segments, c.max_segments, rng);
      std::vector<int> chosen;
      if (c.exclusive_concepts) {
        for (int s = 0; s < n_seg; ++s) {
          chosen.push_back(exclusive_pool.back());
          exclusive_pool.pop_back();
        }
      } else {
        // Distinct concepts inside one video.
        std::shuffle(concept_ids.begin(), concept_ids.end(), rng);
        chosen.assign(concept_ids.begin(), concept_ids.begin() + n_seg);
      }
      Eigen::Index total = 0;
      for (int s = 0; s < n_seg; ++s) {
        const int frames = uniform_int(c.min_segment_frames, c.max_segment_frames, rng);
        video.segments.push_back({chosen[static_cast<std::size_t>(s)], frames});
        total += frames;
      }
      video.frames.resize(total, c.input_dim);
      Eigen::Index row = 0;
      for (int s = 0; s < n_seg; ++s) {
        const auto& seg = video.segments[static_cast<std::size_t>(s)];
        for (Eigen::Index f = 0; f < seg.frames; ++f, ++row) {
          video.frames.row(row) =
              protos.row(seg.concept_id) + gaussian_row(c.input_dim, c.frame_noise_std, rng);
          video.frame_segment.push_back(s);
        }
      }

      std::vector<int> order(static_cast<std::size_t>(n_seg));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (int q = 0; q < c.queries_per_video; ++q) {
        const int seg_index = order[static_cast<std::size_t>(q % n_seg)];
        split.queries.push_back(make_query(video, seg_index));
      }
      split.videos.push_back(std::move(video));
    }
    return split;
  }

  SyntheticQuery make_query(const SyntheticVideo& video, int seg_index) {
    const Segment& seg = video.segments[static_cast<std::size_t>(seg_index)];
    SyntheticQuery q;
    q.id = next_query_id++;
    q.video_id = video.id;
    q.segment = seg_index;
    q.mv_ratio = static_cast<double>(seg.frames) / static_cast<double>(video.num_frames());
    const int len = uniform_int(c.min_words, c.max_words, rng);
    std::bernoulli_distribution is_function(c.function_word_rate);
    q.kinds.resize(static_cast<std::size_t>(len));
    for (auto& k : q.kinds) k = is_function(rng) ? WordKind::function : WordKind::content;
    // Keep at least one content word unless the rate forces none.
    if (c.function_word_rate < 1.0 &&
        std::all_of(q.kinds.begin(), q.kinds.end(),
                    [](WordKind k) { return k == WordKind::function; })) {
      q.kinds[static_cast<std::size_t>(uniform_int(0, len - 1, rng))] = WordKind::content;
    }
    q.words.resize(len, c.input_dim);
    for (int w = 0; w < len; ++w) {
      Eigen::RowVectorXd base;
      if (q.kinds[static_cast<std::size_t>(w)] == WordKind::function) {
        base = pool.row(uniform_int(0, static_cast<int>(pool.rows()) - 1, rng));
      } else {
        base = protos.row(seg.concept_id);
      }
      q.words.row(w) = base + gaussian_row(c.input_dim, c.word_noise_std, rng);
    }
    return q;
  }
};

struct Payload {
  std::string videos;
  std::string queries;
  std::string labels;
};

Payload encode(const Dataset& d) {
  io::Writer videos, queries, labels;
  videos.put_magic(kVideosMagic);
  queries.put_magic(kQueriesMagic);
  labels.put_magic(kLabelsMagic);

  const Split* splits[2] = {&d.train, &d.test};
  videos.put_u64(d.train.videos.size() + d.test.videos.size());
  queries.put_u64(d.train.queries.size() + d.test.queries.size());
  for (std::uint8_t s = 0; s < 2; ++s) {
    for (const auto& v : splits[s]->videos) {
      videos.put_i64(v.id);
      videos.put_u8(s);
      videos.put_matrix(v.frames);
    }
    for (const auto& q : splits[s]->queries) {
      queries.put_i64(q.id);
      queries.put_i64(q.video_id);
      queries.put_u8(s);
      queries.put_matrix(q.words);
    }
  }

  labels.put_matrix(d.prototypes);
  labels.put_matrix(d.function_pool);
  labels.put_u64(d.train.videos.size() + d.test.videos.size());
  for (const Split* sp : splits) {
    for (const auto& v : sp->videos) {
      labels.put_i64(v.id);
      labels.put_u64(v.segments.size());
      for (const auto& seg : v.segments) {
        labels.put_i64(seg.concept_id);
        labels.put_u64(static_cast<std::uint64_t>(seg.frames));
      }
      labels.put_u64(v.frame_segment.size());
      for (int f : v.frame_segment) labels.put_i64(f);
    }
  }
  labels.put_u64(d.train.queries.size() + d.test.queries.size());
  for (const Split* sp : splits) {
    for (const auto& q : sp->queries) {
      labels.put_i64(q.id);
      labels.put_i64(q.segment);
      labels.put_f64(q.mv_ratio);
      labels.put_u64(q.kinds.size());
      for (WordKind k : q.kinds) labels.put_u8(static_cast<std::uint8_t>(k));
    }
  }
  return {videos.bytes(), queries.bytes(), labels.bytes()};
}

std::uint64_t payload_checksum(const Payload& p) {
  std::uint64_t h = fnv1a(p.videos);
  h = fnv1a(p.queries, h);
  return fnv1a(p.labels, h);
}

long total_rows(const Split& s, bool frames) {
  long n = 0;
  if (frames) {
    for (const auto& v : s.videos) n += v.num_frames();
  } else {
    for (const auto& q : s.queries) n += q.num_words();
  }
  return n;
}

KeyValueList manifest_entries(const Dataset& d, std::uint64_t checksum) {
  KeyValueList kv;
  kv.emplace_back("format", kFormat);
  for (auto& e : synth_config_entries(d.config)) kv.push_back(e);
  kv.emplace_back("train_queries", std::to_string(d.train.queries.size()));
  kv.emplace_back("test_queries", std::to_string(d.test.queries.size()));
  kv.emplace_back("total_frames", std::to_string(total_rows(d.train, true) + total_rows(d.test, true)));
  kv.emplace_back("total_words", std::to_string(total_rows(d.train, false) + total_rows(d.test, false)));
  kv.emplace_back("videos_file", "videos.bin");
  kv.emplace_back("queries_file", "queries.bin");
  kv.emplace_back("labels_file", "labels.bin");
  kv.emplace_back("checksum", io::hex64(checksum));
  return kv;
}

}  // namespace

std::size_t Split::video_index(int video_id) const {
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (videos[i].id == video_id) return i;
  }
  throw DataError("video " + std::to_string(video_id) + " not in split");
}

std::vector<std::size_t> Split::queries_of(int video_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (queries[i].video_id == video_id) out.push_back(i);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> synth_config_entries(const SynthConfig& c) {
  auto d = [](double v) { return format_double(v); };
  return {
      {"seed", std::to_string(c.seed)},
      {"concepts", std::to_string(c.concepts)},
      {"train_videos", std::to_string(c.train_videos)},
      {"test_videos", std::to_string(c.test_videos)},
      {"min_segments", std::to_string(c.min_segments)},
      {"max_segments", std::to_string(c.max_segments)},
      {"min_segment_frames", std::to_string(c.min_segment_frames)},
      {"max_segment_frames", std::to_string(c.max_segment_frames)},
      {"queries_per_video", std::to_string(c.queries_per_video)},
      {"min_words", std::to_string(c.min_words)},
      {"max_words", std::to_string(c.max_words)},
      {"function_word_rate", d(c.function_word_rate)},
      {"frame_noise_std", d(c.frame_noise_std)},
      {"word_noise_std", d(c.word_noise_std)},
      {"input_dim", std::to_string(c.input_dim)},
      {"function_pool", std::to_string(c.function_pool)},
      {"max_concept_cosine", d(c.max_concept_cosine)},
      {"exclusive_concepts", c.exclusive_concepts ? "true" : "false"},
  };
}

Dataset generate(const SynthConfig& config) {
  validate(config);
  std::mt19937_64 rng = make_rng(config.seed, "data");
  Dataset d;
  d.config = config;
  d.prototypes = sample_prototypes(config, rng);
  d.function_pool.resize(config.function_pool, config.input_dim);
  for (int i = 0; i < config.function_pool; ++i) d.function_pool.row(i) = random_unit(config.input_dim, rng);
  Generator gen{config, d.prototypes, d.function_pool, rng};
  d.train = gen.make_split(0, config.train_videos);
  d.test = gen.make_split(config.train_videos, config.test_videos);
  return d;
}

SyntheticVideo inject_noise(const SyntheticVideo& video, double p, std::mt19937_64& rng,
                            double noise_std) {
  if (p < 0.0 || p > 1.0) throw ContractError("inject_noise: p must lie in [0, 1]");
  const auto n_noise =
      static_cast<Eigen::Index>(std::lround(p * static_cast<double>(video.num_frames())));
  if (n_noise == 0) return video;
  const Eigen::Index dim = video.frames.cols();
  const Eigen::RowVectorXd center = random_unit(dim, rng);

  SyntheticVideo out;
  out.id = video.id;
  out.segments.reserve(video.segments.size() + 1);
  out.segments.push_back({kDistractorConcept, n_noise});
  out.segments.insert(out.segments.end(), video.segments.begin(), video.segments.end());
  out.frames.resize(n_noise + video.num_frames(), dim);
  for (Eigen::Index f = 0; f < n_noise; ++f) {
    out.frames.row(f) = center + gaussian_row(dim, noise_std, rng);
    out.frame_segment.push_back(0);
  }
  out.frames.bottomRows(video.num_frames()) = video.frames;
  for (int s : video.frame_segment) out.frame_segment.push_back(s + 1);
  return out;
}

Split inject_noise(const Split& split, double p, std::uint64_t seed, double noise_std) {
  std::mt19937_64 rng = make_rng(seed, "noise");
  Split out;
  out.videos.reserve(split.videos.size());
  for (const auto& v : split.videos) out.videos.push_back(inject_noise(v, p, rng, noise_std));
  out.queries = split.queries;
  for (auto& q : out.queries) {
    const SyntheticVideo& v = out.video(q.video_id);
    const std::size_t added = v.segments.size() - split.video(q.video_id).segments.size();
    q.segment += static_cast<int>(added);
    q.mv_ratio = static_cast<double>(v.segments[static_cast<std::size_t>(q.segment)].frames) /
                 static_cast<double>(v.num_frames());
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Payload p = encode(dataset);
  io::write_file(dir / "videos.bin", p.videos);
  io::write_file(dir / "queries.bin", p.queries);
  io::write_file(dir / "labels.bin", p.labels);
  io::write_file(dir / "manifest.txt", format_key_values(manifest_entries(dataset, payload_checksum(p))));
}

std::uint64_t dataset_checksum(const std::filesystem::path& dir) {
  Payload p{io::read_file(dir / "videos.bin"), io::read_file(dir / "queries.bin"),
            io::read_file(dir / "labels.bin")};
  return payload_checksum(p);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.txt")) {
    throw DataError("no dataset manifest in " + dir.string());
  }
  const KeyValueList manifest = parse_key_values(io::read_file(dir / "manifest.txt"),
                                                 (dir / "manifest.txt").string());
  auto lookup = [&](const std::string& key) -> std::string {
    for (const auto& [k, v] : manifest) {
      if (k == key) return v;
    }
    throw DataError("dataset manifest lacks " + key);
  };
  if (lookup("format") != kFormat) throw DataError("unsupported dataset format " + lookup("format"));

  Payload p{io::read_file(dir / "videos.bin"), io::read_file(dir / "queries.bin"),
            io::read_file(dir / "labels.bin")};
  if (io::hex64(payload_checksum(p)) != lookup("checksum")) {
    throw DataError("corrupt dataset: checksum mismatch in " + dir.string());
  }

  Dataset d;
  KeyValueList cfg_entries;
  for (const auto& [k, v] : manifest) {
    for (const auto& [ck, cv] : synth_config_entries(SynthConfig{})) {
      (void)cv;
      if (k == ck) cfg_entries.emplace_back(k, v);
    }
  }
  try {
    d.config = synth_config_from(cfg_entries);
  } catch (const ConfigError& e) {
    throw DataError(std::string("dataset manifest: ") + e.what());
  }

  io::Reader videos(std::move(p.videos), "videos.bin");
  io::Reader queries(std::move(p.queries), "queries.bin");
  io::Reader labels(std::move(p.labels), "labels.bin");
  videos.expect_magic(kVideosMagic);
  queries.expect_magic(kQueriesMagic);
  labels.expect_magic(kLabelsMagic);

  std::vector<std::uint8_t> video_split;
  const auto n_videos = videos.get_count(8 + 1 + 16);
  std::vector<SyntheticVideo> all_videos(n_videos);
  for (auto& v : all_videos) {
    v.id = static_cast<int>(videos.get_i64());
    video_split.push_back(videos.get_u8());
    v.frames = videos.get_matrix();
  }
  videos.expect_end();

  const auto n_queries = queries.get_count(8 + 8 + 1 + 16);
  std::vector<SyntheticQuery> all_queries(n_queries);
  std::vector<std::uint8_t> query_split;
  for (auto& q : all_queries) {
    q.id = static_cast<int>(queries.get_i64());
    q.video_id = static_cast<int>(queries.get_i64());
    query_split.push_back(queries.get_u8());
    q.words = queries.get_matrix();
  }
  queries.expect_end();

  d.prototypes = labels.get_matrix();
  d.function_pool = labels.get_matrix();
  if (labels.get_u64() != n_videos) throw DataError("corrupt dataset: video label count");
  for (auto& v : all_videos) {
    if (labels.get_i64() != v.id) throw DataError("corrupt dataset: video label order");
    const auto n_seg = labels.get_count(16);
    for (std::uint64_t s = 0; s < n_seg; ++s) {
      Segment seg;
      seg.concept_id = static_cast<int>(labels.get_i64());
      seg.frames = static_cast<Eigen::Index>(labels.get_u64());
      v.segments.push_back(seg);
    }
    const auto n_frames = labels.get_count(8);
    for (std::uint64_t f = 0; f < n_frames; ++f) v.frame_segment.push_back(static_cast<int>(labels.get_i64()));
    Eigen::Index sum = 0;
    for (const auto& seg : v.segments) sum += seg.frames;
    if (sum != v.num_frames() || static_cast<Eigen::Index>(n_frames) != v.num_frames()) {
      throw DataError("corrupt dataset: frame count mismatch for video " + std::to_string(v.id));
    }
  }
  if (labels.get_u64() != n_queries) throw DataError("corrupt dataset: query label count");
  for (auto& q : all_queries) {
    if (labels.get_i64() != q.id) throw DataError("corrupt dataset: query label order");
    q.segment = static_cast<int>(labels.get_i64());
    q.mv_ratio = labels.get_f64();
    const auto n_words = labels.get_count(1);
    for (std::uint64_t w = 0; w < n_words; ++w) q.kinds.push_back(static_cast<WordKind>(labels.get_u8()));
    if (static_cast<Eigen::Index>(n_words) != q.num_words()) {
      throw DataError("corrupt dataset: word count mismatch for query " + std::to_string(q.id));
    }
  }
  labels.expect_end();

  for (std::size_t i = 0; i < all_videos.size(); ++i) {
    (video_split[i] == 0 ? d.train : d.test).videos.push_back(std::move(all_videos[i]));
  }
  for (std::size_t i = 0; i < all_queries.size(); ++i) {
    (query_split[i] == 0 ? d.train : d.test).queries.push_back(std::move(all_queries[i]));
  }

  auto check_count = [&](const std::string& key, long actual) {
    if (lookup(key) != std::to_string(actual)) {
      throw DataError("corrupt dataset: " + key + " is " + std::to_string(actual) +
                      ", manifest says " + lookup(key));
    }
  };
  check_count("train_videos", static_cast<long>(d.train.videos.size()));
  check_count("test_videos", static_cast<long>(d.test.videos.size()));
  check_count("train_queries", static_cast<long>(d.train.queries.size()));
  check_count("test_queries", static_cast<long>(d.test.queries.size()));
  check_count("total_frames", total_rows(d.train, true) + total_rows(d.test, true));
  check_count("total_words", total_rows(d.train, false) + total_rows(d.test, false));
  return d;
}

}  // namespace ral
