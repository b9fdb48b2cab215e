// Hierarchical burnout model: per-shift encoding with a shared low-level
// encoder, LSTM accumulation over shifts, monthly classifier, per-shift
// risk head, stochastic tail drop and supervised training.
#pragma once

#include "hipal/embed.hpp"
#include "hipal/encoders.hpp"
#include "hipal/layers.hpp"
#include "hipal/logstore.hpp"
#include "hipal/optim.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hipal {

struct ModelConfig {
  EmbedConfig embed;
  EncoderConfig encoder;  // encoder.input_dim follows embed.joint_dim()
  int lstm_hidden = 128;
  int mlp_hidden = 64;
  double dropout = 0.3;   // classifier dropout
  int max_shifts = 30;

  static ModelConfig defaults(Arch arch);
  /// Sets encoder.input_dim from the embedding width.
  void sync_dims() { encoder.input_dim = embed.joint_dim(); }
  void validate() const;
  std::string echo() const;
  static ModelConfig from_echo(const std::string& text);
};

struct TrainConfig {
  double lambda = 0.1;  // temporal-consistency weight
  int tail_max_days = 5;
  double tail_rho = 2.0;
  bool tail_drop = true;
  double learning_rate = 1e-3;
  int batch_size = 2;
  int epochs = 50;
  double clip_norm = 5.0;
  bool select_best = true;  // restore the best-validation-AUROC epoch
  std::uint64_t seed = 1;

  void validate() const;
};

struct MonthPrediction {
  double gamma = 0.0;
  std::vector<double> daily_risks;
};

/// Logits produced by one forward pass. alpha_logits is empty for models
/// without a per-shift head.
struct MonthForward {
  ad::Var gamma_logits;  // 2 x 1
  std::optional<ad::Var> alpha_logits;  // 2 x T
};

/// Anything the supervised trainer can fit.
class MonthClassifier {
 public:
  virtual ~MonthClassifier() = default;
  virtual MonthForward forward(ad::Tape& tape, const MonthRecord& month, Rng* rng) const = 0;
  virtual std::vector<NamedParameter> parameters() = 0;
  virtual MonthPrediction predict(const MonthRecord& month) const;
};

/// r = (h, p, q) for one shift on plain values.
Vector shift_representation(const Vector& h, std::int64_t shift_start, std::optional<std::int64_t> prev_shift_start,
                            std::int64_t month_origin, const ShiftTimeEmbedder& emb);

class HiPALModel : public MonthClassifier {
 public:
  HiPALModel() = default;
  HiPALModel(const ModelConfig& config, int vocab_size, Rng& rng);

  ModelConfig config;
  EmbeddingBank bank;
  LowLevelEncoder encoder;  // one instance shared by every shift
  ShiftTimeEmbedder shift_time;
  LSTM lstm;
  MLP classifier;
  Linear tc_head;  // W_R, d_R

  int vocab_size() const { return bank.vocab_size(); }
  int representation_dim() const { return encoder.output_dim() + 2 * config.embed.time_dim; }

  /// Shifts the model consumes: the most recent max_shifts.
  std::span<const Shift> used_shifts(const MonthRecord& month) const;
  /// h for one shift (its most recent max_steps events).
  ad::Var encode_shift(ad::Tape& tape, const Shift& shift, Rng* rng) const;

  MonthForward forward(ad::Tape& tape, const MonthRecord& month, Rng* rng) const override;
  std::vector<NamedParameter> parameters() override;
  void collect(std::vector<NamedParameter>& out);

  void save(const std::filesystem::path& path);
  static HiPALModel load(const std::filesystem::path& path);
};

/// Incremental inference: consumes one shift at a time and keeps only the
/// LSTM state between shifts.
class StreamingPredictor {
 public:
  StreamingPredictor(const HiPALModel& model, std::int64_t month_origin);
  /// Returns the daily risk of the shift.
  double push(const Shift& shift);
  /// Monthly risk given the shifts seen so far.
  double gamma() const;
  const std::vector<double>& daily_risks() const { return risks_; }

 private:
  const HiPALModel* model_;
  std::int64_t origin_;
  std::optional<std::int64_t> prev_start_;
  LSTM::State state_;
  std::vector<double> risks_;
};

/// Whole-month baseline: one encoder over the concatenated month events and
/// an MLP classifier.
class SingleLevelModel : public MonthClassifier {
 public:
  SingleLevelModel() = default;
  SingleLevelModel(const ModelConfig& config, int vocab_size, Rng& rng);

  ModelConfig config;
  EmbeddingBank bank;
  LowLevelEncoder encoder;
  MLP classifier;

  MonthForward forward(ad::Tape& tape, const MonthRecord& month, Rng* rng) const override;
  std::vector<NamedParameter> parameters() override;
};

/// CE(gamma, y) + lambda / T * sum_k CE(alpha_k, y) on probabilities.
double composite_loss(double gamma, std::span<const double> daily_risks, int y, double lambda);
/// Differentiable version on logits.
ad::Var composite_loss(const MonthForward& fwd, int y, double lambda);

/// Draws L in [0, L_max] with P(L) proportional to (L_max - L)^rho.
int sample_tail_drop(int l_max, double rho, Rng& rng);
/// Probabilities of every L in [0, L_max].
std::vector<double> tail_drop_distribution(int l_max, double rho);

/// Removes events in the last `days` calendar days before the final event,
/// dropping emptied shifts; shrinks `days` until one shift survives.
MonthRecord apply_tail_drop(const MonthRecord& month, int days);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> train_auroc;
  std::optional<double> val_auroc;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  void write_csv(std::ostream& out) const;
};

/// Mini-batch Adam on the composite loss with a fresh tail-drop draw per
/// month per epoch.
TrainHistory train_model(MonthClassifier& model, std::span<const MonthRecord* const> train,
                         std::span<const MonthRecord* const> validation, const TrainConfig& config);

struct TrainedHiPAL {
  HiPALModel model;
  TrainHistory history;
};

/// Builds a fresh model (optionally seeded with a pre-trained encoder and
/// action embedding) and trains it.
TrainedHiPAL train_supervised(std::span<const MonthRecord* const> train, std::span<const MonthRecord* const> validation,
                              const ModelConfig& model_config, const TrainConfig& train_config, int vocab_size,
                              const LowLevelEncoder* pretrained_encoder = nullptr,
                              const ActionEmbedding* pretrained_actions = nullptr);

/// Positive-class probabilities for every month.
std::vector<double> predict_scores(const MonthClassifier& model, std::span<const MonthRecord* const> months);

}  // namespace hipal
