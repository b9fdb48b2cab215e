// Experiment protocol: participant-grouped repeated cross-validation,
// recipes, offset sweeps, hand-crafted baseline features, risk maps and
// the key=value configuration format.
#pragma once

#include "hipal/embed.hpp"
#include "hipal/hipal.hpp"
#include "hipal/logstore.hpp"
#include "hipal/metrics.hpp"
#include "hipal/seqae.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hipal {

// ---------------------------------------------------------------------------
// Configuration files
// ---------------------------------------------------------------------------

/// Flat key=value map read from a line-oriented file; '#' starts a comment.
class ConfigMap {
 public:
  static ConfigMap parse(std::istream& in);
  static ConfigMap read(const std::filesystem::path& path);

  /// Accepts "key=value".
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void merge(const ConfigMap& overrides);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct CVConfig {
  int folds = 5;
  int rounds = 6;
  double val_fraction = 0.1;  // of the training participants
  std::uint64_t seed = 1;

  void validate() const;
};

struct Split {
  int round = 0;
  int fold = 0;
  std::vector<std::string> train;  // participant ids
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Folds over participants that have at least one labeled month; each round
/// reshuffles participants with its own seed.
std::vector<Split> grouped_cv_split(const Dataset& ds, const CVConfig& config);

/// Labeled months whose participant is in `ids`.
std::vector<const MonthRecord*> labeled_months_of(const Dataset& ds, const std::vector<std::string>& ids);

/// Encoder architecture and kind of a model recipe.
struct Recipe {
  enum class Kind { hipal, semi_hipal, single_level, baseline_features };
  Kind kind = Kind::hipal;
  Arch arch = Arch::causalnet;
  static Recipe parse(const std::string& name);
};

bool is_known_recipe(const std::string& recipe);
std::vector<std::string> known_recipes();

/// Everything a recipe needs besides the data.
struct ExperimentConfig {
  EmbedConfig embed;
  int tcn_layers = 6;
  int tcn_filters = 64;
  int tcn_kernel = 5;
  int tcn_dilation_base = 2;
  int h_dim = 64;  // causalnet output width
  std::vector<int> fcn_filters{128, 256, 128};
  std::vector<int> fcn_kernels{8, 5, 3};
  double dropout = 0.3;
  int max_steps = 3000;
  int single_layers = 12;
  int single_kernel = 7;
  int single_dilation_base = 3;
  int single_max_steps = 50000;
  int lstm_hidden = 128;
  int mlp_hidden = 64;
  int max_shifts = 30;

  TrainConfig train;
  SeqAEConfig seqae;
  SkipGramConfig skipgram;
  bool pretrain_actions = true;  // skip-gram initialisation of the action embedding
  CVConfig cv;
  int max_splits = 0;         // 0 = every split
  bool timing = false;        // write epoch_seconds into the report
  int tz_offset_seconds = 0;  // for after-hours baseline features

  /// Model shape for a recipe (hierarchical or single-level).
  ModelConfig model_config(const Recipe& recipe) const;
  /// Sets every seed from one master seed.
  void set_seed(std::uint64_t seed);
  /// Applies recognised keys; throws ValidationError on unknown ones.
  void apply(const ConfigMap& config);
};

struct FoldResult {
  std::string recipe;
  int round = 0;
  int fold = 0;
  MetricsEntry metrics;
  std::optional<double> epoch_seconds;
  std::size_t test_months = 0;
};

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

struct MetricsReport {
  std::vector<FoldResult> folds;

  MetricSummary auroc() const;
  MetricSummary auprc() const;
  MetricSummary accuracy() const;
  MetricSummary epoch_seconds() const;
  /// recipe,round,fold,auroc,auprc,accuracy,epoch_seconds then mean and std rows.
  void write_csv(std::ostream& out, bool with_timing) const;
};

/// Trains and evaluates `recipe` on every split (up to max_splits).
MetricsReport run_cv(const Dataset& ds, const std::string& recipe, const ExperimentConfig& config,
                     const Vocabulary* vocabulary = nullptr);

/// Pre-trained pieces shared by all splits of one run.
struct Pretrained {
  std::optional<ActionEmbedding> actions;
  std::optional<SeqAEModel> autoencoder;
};
Pretrained pretrain_for_recipe(const Dataset& ds, const Recipe& recipe, const ExperimentConfig& config);

/// Builds and trains a model of the given recipe on one split.
struct TrainedModel {
  std::unique_ptr<MonthClassifier> model;
  TrainHistory history;
};
TrainedModel train_recipe(const Recipe& recipe, std::span<const MonthRecord* const> train,
                          std::span<const MonthRecord* const> validation, const ExperimentConfig& config,
                          int vocab_size, const Pretrained& pretrained);

// ---------------------------------------------------------------------------
// Offsets, operating points, risk maps
// ---------------------------------------------------------------------------

struct OffsetResult {
  int offset_days = 0;
  std::optional<double> auroc;
};

/// AUROC after removing the final `o` days of every month, for each offset.
std::vector<OffsetResult> offset_evaluation(const MonthClassifier& model, std::span<const MonthRecord* const> months,
                                            const std::vector<int>& offsets);

struct RiskMapRow {
  int month_index = 0;
  double gamma = 0.0;
  std::vector<std::optional<double>> cells;  // right-aligned daily risks
};

struct RiskMap {
  std::string participant_id;
  int width = 0;
  std::vector<RiskMapRow> rows;

  void write_csv(std::ostream& out) const;
  /// Binary PPM heatmap: white (0) to red (1), absent cells grey.
  void write_ppm(const std::filesystem::path& path, int cell_pixels = 12) const;
};

RiskMap build_risk_map(const HiPALModel& model, const Dataset& ds, const std::string& participant_id);

// ---------------------------------------------------------------------------
// Hand-crafted features and the reference linear classifier
// ---------------------------------------------------------------------------

struct FeatureSpec {
  std::vector<int> category_of_code;  // empty: everything in one category
  int n_categories = 1;
  std::vector<std::string> category_names;
  int tz_offset_seconds = 0;
  std::int64_t gap_seconds = kDefaultGapSeconds;
  int histogram_bins = kDefaultTimeBins;

  static FeatureSpec from_vocabulary(const Vocabulary& vocab, int tz_offset_seconds = 0);
  std::vector<std::string> names() const;
};

/// Workload and interval statistics of one month (constant length).
Vector baseline_features(const MonthRecord& month, const FeatureSpec& spec);

void write_feature_matrix(std::ostream& out, const FeatureSpec& spec, std::span<const MonthRecord* const> months);

/// L2-regularised logistic regression on standardised features, fitted by
/// Newton iterations.
class LogisticRegression {
 public:
  explicit LogisticRegression(double l2 = 1.0) : l2_(l2) {}
  void fit(const Matrix& x, std::span<const int> y);  // x: samples x features
  Vector predict(const Matrix& x) const;

 private:
  double l2_;
  Vector mean_, scale_, weights_;
  double bias_ = 0.0;
};

}  // namespace hipal
