// Independent reference implementations the tests compare against.
#pragma once

#include "hipal/logstore.hpp"
#include "hipal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace hipal::testing {

inline double brute_auroc(const std::vector<int>& y, const std::vector<double>& s) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return good / pairs;
}

// Average precision with one threshold per distinct score.
inline double brute_auprc(const std::vector<int>& y, const std::vector<double>& s) {
  std::vector<double> thr = s;
  std::sort(thr.rbegin(), thr.rend());
  thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
  const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  double area = 0, prev_recall = 0;
  for (double t : thr) {
    double tp = 0, predicted = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (s[i] >= t) {
        predicted += 1;
        tp += y[i];
      }
    const double recall = tp / pos;
    area += (recall - prev_recall) * (tp / predicted);
    prev_recall = recall;
  }
  return area;
}

// Best complementary metric over every threshold that meets the target.
inline double sweep_complementary(const std::vector<int>& y, const std::vector<double>& s, OperatingTarget target,
                           double v) {
  std::vector<double> cands = s;
  cands.push_back(1e300);
  double best = -1;
  for (double t : cands) {
    double tp = 0, tn = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      (y[i] ? pos : neg) += 1;
      if (y[i] && s[i] >= t) tp += 1;
      if (!y[i] && s[i] < t) tn += 1;
    }
    const double sens = tp / pos, spec = tn / neg;
    const double hit = target == OperatingTarget::sensitivity ? sens : spec;
    const double other = target == OperatingTarget::sensitivity ? spec : sens;
    if (hit >= v) best = std::max(best, other);
  }
  return best;
}

// Interval statistics written directly from their textbook definitions.
struct FeatureOracle {
  std::vector<double> workload;
  std::vector<double> stats;
};

inline FeatureOracle oracle_features(const MonthRecord& m, const std::vector<int>& cat, int n_cat, int tz, int bins,
                              std::int64_t gap) {
  FeatureOracle o;
  const double shifts = static_cast<double>(m.shifts.size());
  const double per = shifts > 0 ? shifts : 1.0;
  double hours = 0, after = 0, events = 0;
  std::vector<double> count(static_cast<std::size_t>(n_cat)), time(static_cast<std::size_t>(n_cat));
  std::vector<std::vector<double>> per_shift;
  for (const auto& s : m.shifts) {
    hours += static_cast<double>(s.events.back().timestamp - s.events.front().timestamp) / 3600.0;
    per_shift.emplace_back();
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      events += 1;
      count[static_cast<std::size_t>(cat[static_cast<std::size_t>(s.events[i].code)])] += 1;
      if (i + 1 < s.events.size()) {
        const double dt = static_cast<double>(s.events[i + 1].timestamp - s.events[i].timestamp);
        per_shift.back().push_back(dt);
        time[static_cast<std::size_t>(cat[static_cast<std::size_t>(s.events[i].code)])] += dt / 3600.0;
        std::int64_t local = (s.events[i].timestamp + tz) % 86400;
        if (local < 0) local += 86400;
        if (local < 8 * 3600 || local >= 18 * 3600) after += dt / 3600.0;
      }
    }
  }
  o.workload = {hours, after, shifts, events, events / per, hours / per};
  for (int c = 0; c < n_cat; ++c) {
    o.workload.push_back(count[static_cast<std::size_t>(c)] / per);
    o.workload.push_back(time[static_cast<std::size_t>(c)] / per);
  }

  std::vector<double> x;
  for (const auto& v : per_shift) x.insert(x.end(), v.begin(), v.end());
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) {
    o.stats.assign(10, 0.0);
    o.stats.push_back(1.0);
    return o;
  }
  double mean = 0;
  for (double v : x) mean += v / n;
  double var = 0, third = 0, fourth = 0, energy = 0;
  for (double v : x) {
    var += (v - mean) * (v - mean) / n;
    third += std::pow(v - mean, 3) / n;
    fourth += std::pow(v - mean, 4) / n;
    energy += v * v;
  }
  std::vector<double> hist(static_cast<std::size_t>(bins));
  for (double v : x) {
    int b = static_cast<int>(std::floor(std::log(1.0 + v) / std::log(1.0 + static_cast<double>(gap)) * bins));
    hist[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1;
  }
  double entropy = 0;
  for (double h : hist)
    if (h > 0) entropy -= h / n * std::log(h / n);
  const double mn = *std::min_element(x.begin(), x.end()), mx = *std::max_element(x.begin(), x.end());
  if (var == 0.0) {
    o.stats = {mean, mn, mx, 0.0, 0.0, 0.0, entropy, energy, 0.0, 0.0, 1.0};
    return o;
  }
  const double sd = std::sqrt(var);
  double lag = 0;
  for (const auto& v : per_shift)
    for (std::size_t i = 0; i + 1 < v.size(); ++i) lag += (v[i] - mean) * (v[i + 1] - mean);
  double si = 0, sx = 0, sii = 0, six = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(i);
    si += t;
    sx += x[i];
    sii += t * t;
    six += t * x[i];
  }
  const double slope = (n * six - si * sx) / (n * sii - si * si);
  o.stats = {mean, mn, mx, sd, third / (sd * sd * sd), fourth / (var * var) - 3.0, entropy, energy, lag / (n * var),
             slope, 0.0};
  return o;
}

inline MonthRecord random_feature_month(std::mt19937_64& rng, int vocab) {
  std::uniform_int_distribution<int> n_shifts(1, 5), n_events(1, 12), code(0, vocab - 1), gap(1, 3000),
      hour(0, 23);
  MonthRecord m;
  m.participant_id = "F";
  m.window_end = 40 * 86400;
  const int shifts = n_shifts(rng);
  for (int s = 0; s < shifts; ++s) {
    std::int64_t t = s * 86400 + hour(rng) * 3600 + gap(rng);
    std::vector<Action> ev;
    const int n = n_events(rng);
    for (int e = 0; e < n; ++e) {
      ev.push_back({t, code(rng)});
      t += gap(rng);
    }
    m.shifts.push_back(Shift::from_actions(std::move(ev)));
  }
  return m;
}

/// Sequence lengths through a causalnet encoder and its decoder: halve
/// (rounding up) once per pooling layer, then walk back up.
inline std::vector<int> decoder_walk_oracle(int n, int layers) {
  std::vector<int> down{n};
  for (int l = 1; l < layers; ++l) down.push_back((down.back() + 1) / 2);
  std::vector<int> walk = down;
  for (int i = static_cast<int>(down.size()) - 2; i >= 0; --i) walk.push_back(down[static_cast<std::size_t>(i)]);
  return walk;
}

}  // namespace hipal::testing
