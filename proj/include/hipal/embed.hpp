// Time-dependent activity embedding: action vectors, log-interval
// features, learnable periodic time features and their combination.
#pragma once

#include "hipal/ad.hpp"
#include "hipal/logstore.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hipal {

using Rng = std::mt19937_64;

/// Seconds added inside the log so simultaneous events stay finite.
inline constexpr double kIntervalEpsilon = 1.0;
/// Trainable frequencies are stored per hour; this converts seconds to hours.
inline constexpr double kSecondsToHours = 1.0 / 3600.0;

enum class JoinMode { concat, add };

struct EmbedConfig {
  int action_dim = 100;  // d_a
  int time_dim = 50;     // d_t, per time embedder
  JoinMode join = JoinMode::concat;

  int joint_dim() const { return join == JoinMode::concat ? action_dim + 2 * time_dim : action_dim; }
  void validate() const;
};

/// Pre-trained action embedding matrix, one column per action code.
struct ActionEmbedding {
  Matrix weights;  // d_a x |A|
  std::uint64_t vocab_hash = 0;

  int dim() const { return static_cast<int>(weights.rows()); }
  int vocab_size() const { return static_cast<int>(weights.cols()); }
};

/// b = tanh(W_b * log(dt + eps) + d_b); zero for the first event of a sequence.
struct IntervalEmbedder {
  Parameter weight;  // d_t x 1
  Parameter bias;    // d_t x 1

  IntervalEmbedder() = default;
  IntervalEmbedder(int dim, Rng& rng);
  int dim() const { return static_cast<int>(weight.rows()); }
  void collect(std::vector<NamedParameter>& out, const std::string& prefix);
};

/// c[0] = w_0 t + phi_0, c[j] = sin(w_j t + phi_j). Frequencies are stored
/// in radians per hour; t is given in seconds.
struct PeriodicityEmbedder {
  Parameter omega;  // d_t x 1, rad / hour
  Parameter phi;    // d_t x 1

  PeriodicityEmbedder() = default;
  PeriodicityEmbedder(int dim, Rng& rng);
  int dim() const { return static_cast<int>(omega.rows()); }
  /// Angular frequency of entry j in rad / second.
  double frequency(int j) const { return omega.value(j, 0) * kSecondsToHours; }
  void collect(std::vector<NamedParameter>& out, const std::string& prefix);
};

/// nullopt marks the first event of a sequence.
Vector embed_interval(std::optional<double> dt_seconds, const IntervalEmbedder& emb);
Vector embed_periodic(double t_seconds, const PeriodicityEmbedder& emb);

/// Action matrix plus low-level time embedders.
struct EmbeddingBank {
  EmbedConfig config;
  Parameter action;  // d_a x |A|
  IntervalEmbedder interval;
  PeriodicityEmbedder periodic;

  EmbeddingBank() = default;
  EmbeddingBank(const EmbedConfig& config, int vocab_size, Rng& rng);

  int vocab_size() const { return static_cast<int>(action.cols()); }
  int dim() const { return config.joint_dim(); }
  void set_action_weights(const ActionEmbedding& pretrained);
  void collect(std::vector<NamedParameter>& out, const std::string& prefix);
};

/// Joint embedding of one event. prev_timestamp empty marks the first
/// event; the periodic clock runs from `origin` (the shift start).
Vector joint_embed(const Action& event, std::optional<std::int64_t> prev_timestamp, std::int64_t origin,
                   const EmbeddingBank& bank);

/// Differentiable embedding of a whole event sequence (joint_dim x n).
ad::Var embed_sequence(ad::Tape& tape, const EmbeddingBank& bank, std::span<const Action> events,
                       std::int64_t origin);

/// High-level interval (p) and periodicity (q) embedders for shift starts.
struct ShiftTimeEmbedder {
  IntervalEmbedder interval;
  PeriodicityEmbedder periodic;

  ShiftTimeEmbedder() = default;
  ShiftTimeEmbedder(int dim, Rng& rng) : interval(dim, rng), periodic(dim, rng) {}
  int dim() const { return interval.dim(); }
  void collect(std::vector<NamedParameter>& out, const std::string& prefix);
};

struct ShiftTimeFeatures {
  Vector p;
  Vector q;
};

/// p from the gap since the previous shift start (zero for the first shift),
/// q from the time since the month origin.
ShiftTimeFeatures embed_shift_time(std::int64_t shift_start, std::optional<std::int64_t> prev_shift_start,
                                   std::int64_t month_origin, const ShiftTimeEmbedder& emb);

/// Differentiable p/q blocks for every shift start: returns (2*d_t) x T.
ad::Var embed_shift_times(ad::Tape& tape, const ShiftTimeEmbedder& emb, std::span<const std::int64_t> starts,
                          std::int64_t month_origin);

// ---------------------------------------------------------------------------
// Skip-gram pre-training
// ---------------------------------------------------------------------------

struct SkipGramConfig {
  int window = 5;  // L
  int dim = 100;
  int epochs = 5;
  int batch = 256;
  double learning_rate = 0.01;
  std::uint64_t seed = 1;
  std::size_t max_centers_per_epoch = 0;  // 0 = every position
};

/// Index range [first, last) of the context around position `pos`,
/// clipped to the sequence; the centre itself is skipped by callers.
std::pair<std::size_t, std::size_t> context_window(std::size_t length, std::size_t pos, int window);

struct SkipGramResult {
  ActionEmbedding embedding;
  std::vector<double> epoch_loss;  // mean NLL per context prediction
};

/// Full-softmax skip-gram: each action's embedding predicts every action in
/// its +/- window context.
SkipGramResult pretrain_skipgram(const std::vector<std::vector<int>>& sequences, int vocab_size,
                                 const SkipGramConfig& config);

/// Action-code sequences of every shift in the given months.
std::vector<std::vector<int>> shift_corpus(std::span<const MonthRecord* const> months);

double cosine_similarity(const Vector& a, const Vector& b);

/// Binary matrix file: magic "HIPALEM1", u64 rows, u64 cols, u64 vocab
/// hash, then doubles column-major.
void save_action_embedding(const std::filesystem::path& path, const ActionEmbedding& emb);
/// Throws when expected_hash is given and differs from the stored hash.
ActionEmbedding load_action_embedding(const std::filesystem::path& path,
                                      std::optional<std::uint64_t> expected_hash = std::nullopt);

}  // namespace hipal
