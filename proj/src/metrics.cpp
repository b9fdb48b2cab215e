#include "hipal/metrics.hpp"

#include "hipal/error.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace hipal {
namespace {

void check_sizes(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw ContractViolation("labels and scores differ in length");
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const int> labels) {
  std::size_t pos = 0;
  for (int y : labels) pos += y != 0;
  return {pos, labels.size() - pos};
}

}  // namespace

std::optional<double> auroc(std::span<const int> labels, std::span<const double> scores) {
  check_sizes(labels, scores);
  const auto [pos, neg] = class_counts(labels);
  if (pos == 0 || neg == 0) return std::nullopt;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based midrank
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]]) rank_sum += mid;
    i = j + 1;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

std::optional<double> auprc(std::span<const int> labels, std::span<const double> scores) {
  check_sizes(labels, scores);
  const auto [pos, neg] = class_counts(labels);
  if (pos == 0 || neg == 0) return std::nullopt;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) (labels[order[k]] ? tp : fp) += 1.0;
    const double recall = tp / static_cast<double>(pos);
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j + 1;
  }
  return ap;
}

double accuracy(std::span<const int> labels, std::span<const double> scores, double threshold) {
  check_sizes(labels, scores);
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += (scores[i] >= threshold) == (labels[i] != 0);
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

MetricsEntry compute_metrics(std::span<const int> labels, std::span<const double> scores, double threshold) {
  return {auroc(labels, scores), auprc(labels, scores), accuracy(labels, scores, threshold)};
}

OperatingPoint operating_point(std::span<const int> labels, std::span<const double> scores, OperatingTarget target,
                               double value) {
  check_sizes(labels, scores);
  const auto [pos, neg] = class_counts(labels);
  if (pos == 0 || neg == 0) throw ValidationError("operating_point needs both classes");
  if (!(value >= 0.0 && value <= 1.0)) throw ValidationError("operating_point target must lie in [0, 1]");

  std::vector<double> thresholds(scores.begin(), scores.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  std::optional<OperatingPoint> best;
  for (double thr : thresholds) {
    double tp = 0, tn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool pred = scores[i] >= thr;
      if (labels[i] && pred) ++tp;
      if (!labels[i] && !pred) ++tn;
    }
    OperatingPoint op;
    op.threshold = thr;
    op.sensitivity = tp / static_cast<double>(pos);
    op.specificity = tn / static_cast<double>(neg);
    const double achieved = target == OperatingTarget::sensitivity ? op.sensitivity : op.specificity;
    op.complementary = target == OperatingTarget::sensitivity ? op.specificity : op.sensitivity;
    if (achieved + 1e-12 < value) continue;
    if (!best || op.complementary > best->complementary) best = op;
  }
  if (!best) throw ValidationError("operating_point target unreachable");
  return *best;
}

}  // namespace hipal
