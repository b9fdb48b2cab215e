// Ranking and classification metrics.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hipal {

/// Area under the ROC curve by the pair formulation, ties counted 0.5.
/// Empty when either class is missing.
std::optional<double> auroc(std::span<const int> labels, std::span<const double> scores);

/// Average precision (area under the step precision-recall curve); tied
/// scores form a single threshold.
std::optional<double> auprc(std::span<const int> labels, std::span<const double> scores);

/// Fraction of predictions (score >= threshold -> 1) equal to the label.
double accuracy(std::span<const int> labels, std::span<const double> scores, double threshold = 0.5);

struct MetricsEntry {
  std::optional<double> auroc;
  std::optional<double> auprc;
  double accuracy = 0.0;
};

MetricsEntry compute_metrics(std::span<const int> labels, std::span<const double> scores, double threshold = 0.5);

enum class OperatingTarget { sensitivity, specificity };

struct OperatingPoint {
  double threshold = 0.0;       // predict positive when score >= threshold
  double sensitivity = 0.0;
  double specificity = 0.0;
  double complementary = 0.0;   // the metric that was not targeted
};

/// Threshold that meets the target while maximising the complementary metric.
OperatingPoint operating_point(std::span<const int> labels, std::span<const double> scores, OperatingTarget target,
                               double value);

}  // namespace hipal
