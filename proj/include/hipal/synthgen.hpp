// Synthetic activity logs with a planted workload -> burnout link.
#pragma once

#include "hipal/logstore.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hipal {

struct GeneratorConfig {
  int n_participants = 40;
  int months_per_participant = 6;
  int vocab_size = 1961;
  int n_categories = 8;
  double mean_shifts_per_month = 16.0;
  int max_shifts_per_month = 28;
  double mean_events_per_shift = 40.0;
  int max_events_per_shift = 400;
  double interval_log_mean = 4.5;  // log-seconds, at w = 0
  double interval_log_sd = 0.8;
  std::int64_t max_interval_seconds = 2 * 3600;
  double signal_strength = 2.0;  // a
  double label_bias = 0.0;       // b
  double unlabeled_fraction = 0.48;
  double participant_workload_sd = 1.0;
  double month_workload_sd = 0.6;
  bool intermittent = false;  // alternate light / heavy shifts at equal monthly totals
  int tail_jitter_days = 0;   // up to this many days of next-rotation events per month
  std::int64_t start_epoch = 1598918400;  // 2020-09-01T00:00:00Z
  std::uint64_t seed = 7;

  void validate() const;
};

/// Survey windows span a 28-day rotation plus room for the jitter tail.
inline constexpr int kRotationDays = 28;
inline constexpr int kWindowDays = 33;

struct LatentMonth {
  std::string participant_id;
  int month_index = 0;
  double workload = 0.0;  // w
  double p_burnout = 0.0;
  bool label = false;     // realised label, kept even when withheld
  bool label_withheld = false;
};

struct LatentTruth {
  std::vector<LatentMonth> months;
};

struct GroundTruthCounts {
  std::size_t events = 0;
  std::size_t shifts = 0;
  std::size_t months = 0;
  std::size_t labeled_months = 0;
  std::size_t participants = 0;
};

struct GeneratedData {
  std::vector<ActionEvent> events;
  std::vector<SurveyWindow> surveys;
  Vocabulary vocabulary;
  Dataset dataset;
  LatentTruth truth;
  GroundTruthCounts counts;
};

/// Deterministic in the config (including the seed).
GeneratedData generate_dataset(const GeneratorConfig& config);

/// AUROC of the latent workload against the realised labels of every month
/// present in the dataset.
double oracle_auroc(const Dataset& ds, const LatentTruth& truth);

/// Writes events.csv, surveys.csv, vocab.csv, latent_truth.csv and dataset.jsonl.
void write_generated(const std::filesystem::path& dir, const GeneratedData& data);
void write_latent_truth(std::ostream& out, const LatentTruth& truth);

/// Category names used for the synthetic vocabulary.
std::string category_name(int index, int n_categories);

}  // namespace hipal
