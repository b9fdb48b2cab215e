// Sequence autoencoder over single shifts: the low-level encoder compresses
// a shift to h, a mirrored decoder expands h back to one vector per event,
// and two softmax heads reconstruct the action and the binned interval.
#pragma once

#include "hipal/embed.hpp"
#include "hipal/encoders.hpp"
#include "hipal/hipal.hpp"
#include "hipal/layers.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hipal {

inline constexpr int kDefaultTimeBins = 50;

/// Categorical targets for inter-event intervals: bin 0 marks the first
/// event of a sequence, bins 1..K-1 are quantile bins of log(dt + 1).
struct TimeBins {
  std::vector<double> edges;  // K - 2 strictly increasing interior edges

  int count() const { return static_cast<int>(edges.size()) + 2; }
  int bin(std::optional<double> dt_seconds) const;
  /// Quantile edges of the given log-intervals.
  static TimeBins fit(std::vector<double> log_intervals, int k = kDefaultTimeBins);
};

/// Log-intervals of every non-first event of every shift.
std::vector<double> corpus_log_intervals(std::span<const MonthRecord* const> months, int max_steps);
std::vector<int> time_bin_targets(std::span<const Action> events, const TimeBins& bins);

struct DecoderStage {
  std::string kind;  // replicate, unflatten, conv, upsample, residual, project
  int channels = 0;
  int length = 0;
  int kernel = 0;
  int dilation = 0;
};

/// Layer-by-layer description of the decoder for one input length.
struct DecoderSpec {
  Arch arch = Arch::restcn;
  std::vector<DecoderStage> stages;
  /// Sequence length at the input and after every pooling / upsampling step,
  /// encoder side first (e.g. 64, 32, 16, 32, 64).
  std::vector<int> walk;
};

DecoderSpec build_decoder(const EncoderConfig& config, int input_length, int output_channels);

/// Mirror image of a LowLevelEncoder, ending in a per-step projection to
/// `output_channels`.
class Decoder {
 public:
  Decoder() = default;
  Decoder(const EncoderConfig& config, int output_channels, Rng& rng);

  /// h (output_dim x 1) to output_channels x length.
  ad::Var decode(ad::Tape& tape, ad::Var h, int length, Rng* rng) const;
  /// Same, also returning the decoder input (the replicated H for fcn/restcn).
  ad::Var decode(ad::Tape& tape, ad::Var h, int length, Rng* rng, ad::Var* input) const;
  void collect(std::vector<NamedParameter>& out, const std::string& prefix);

 private:
  struct Conv {
    Parameter weight, gain, bias, norm_scale, norm_shift;
    int kernel = 1, dilation = 1;
  };
  ad::Var conv(ad::Tape& tape, const Conv& c, ad::Var x) const;

  EncoderConfig config_;
  std::vector<Conv> convs_;          // in decoder order
  std::vector<int> conv_layer_;      // encoder layer each conv mirrors
  std::vector<Linear> projections_;  // restcn skip projections
  Linear unflatten_;                 // causalnet
  Linear output_;
};

struct SeqAEConfig {
  int epochs = 10;
  int batch_shifts = 16;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  std::size_t max_shifts_per_epoch = 0;  // 0 = every shift
  std::uint64_t seed = 1;
  int time_bins = kDefaultTimeBins;
};

class SeqAEModel {
 public:
  SeqAEModel() = default;
  SeqAEModel(const ModelConfig& config, int vocab_size, TimeBins bins, Rng& rng);

  ModelConfig config;
  EmbeddingBank bank;
  LowLevelEncoder encoder;
  Decoder decoder;
  Linear action_head;  // W_e, d_e: |A| x d_a
  Linear time_head;    // W_t: K x d_a
  TimeBins bins;

  /// Starts the action head from the transpose of the action embedding.
  void init_action_head_from_embedding();

  struct Reconstruction {
    Matrix action_log_prob;  // |A| x n
    Matrix time_log_prob;    // K x n
  };
  Reconstruction reconstruct(const Shift& shift) const;

  /// Logits of both heads for one shift (events already truncated).
  std::pair<ad::Var, ad::Var> heads(ad::Tape& tape, std::span<const Action> events, std::int64_t origin, Rng* rng) const;
  /// Mean per-step CE(actions) + CE(time bins) of one shift.
  ad::Var loss(ad::Tape& tape, const Shift& shift, Rng* rng) const;

  std::vector<NamedParameter> parameters();
  void save(const std::filesystem::path& path);
  static SeqAEModel load(const std::filesystem::path& path);
};

struct SeqAEResult {
  SeqAEModel model;
  std::vector<double> epoch_loss;  // mean per-step loss per epoch
};

/// Fits time bins on the corpus, builds the autoencoder (optionally with a
/// pre-trained action embedding) and trains it on every shift of `months`.
SeqAEResult pretrain_unsupervised(std::span<const MonthRecord* const> months, const ModelConfig& model_config,
                                  int vocab_size, const SeqAEConfig& config,
                                  const ActionEmbedding* pretrained_actions = nullptr);

/// Mean per-step action and time-bin NLL over the given months.
std::pair<double, double> reconstruction_nll(const SeqAEModel& model, std::span<const MonthRecord* const> months);

/// Copies the low-level encoder and the event embedding bank it was trained
/// against into the hierarchical model.
void transfer_weights(const SeqAEModel& source, HiPALModel& target);

}  // namespace hipal
