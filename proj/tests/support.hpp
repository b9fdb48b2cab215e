// Shared fixtures and oracles for the test binaries.
#pragma once

#include "hipal/ad.hpp"
#include "hipal/hipal.hpp"
#include "hipal/logstore.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace hipal::testing {

/// Result of comparing tape gradients to central finite differences.
struct GradientReport {
  double worst_ratio = 0.0;  // max |a - n| / (rtol * max(|a|, |n|) + atol); <= 1 passes
  std::string worst_entry;
  std::size_t entries = 0;
  std::size_t kinks = 0;  // entries sitting on a rectifier kink, skipped
};

/// Checks d loss / d p for every parameter entry (or `max_entries` random
/// entries per parameter when positive). Entries whose forward and backward
/// one-sided slopes disagree sit on a rectifier kink, where central
/// differences are no oracle; they are counted and skipped.
inline GradientReport check_gradients(std::span<const NamedParameter> params,
                                      const std::function<ad::Var(ad::Tape&)>& loss, double rtol = 1e-3,
                                      double atol = 1e-7, double step = 1e-5, int max_entries = 0,
                                      std::uint64_t seed = 11) {
  ad::Tape tape;
  const ad::Var l = loss(tape);
  tape.backward(l);
  std::vector<Matrix> analytic;
  for (const auto& np : params) {
    const Matrix* g = tape.param_grad(*np.param);
    analytic.push_back(g ? *g : Matrix::Zero(np.param->rows(), np.param->cols()));
  }
  auto eval = [&] {
    ad::Tape t;
    return loss(t).scalar();
  };
  GradientReport rep;
  const double base = eval();
  std::mt19937_64 rng(seed);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& value = params[p].param->value;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(value.size()));
    for (Eigen::Index i = 0; i < value.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    if (max_entries > 0 && idx.size() > static_cast<std::size_t>(max_entries)) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(max_entries));
    }
    for (Eigen::Index i : idx) {
      const double keep = value.data()[i];
      value.data()[i] = keep + step;
      const double up = eval();
      value.data()[i] = keep - step;
      const double down = eval();
      value.data()[i] = keep;
      const double numeric = (up - down) / (2 * step);
      const double forward = (up - base) / step, backward = (base - down) / step;
      ++rep.entries;
      if (std::abs(forward - backward) > 1e-2 * std::max(std::abs(forward), std::abs(backward)) + 1e-5) {
        ++rep.kinks;
        continue;
      }
      const double a = analytic[p].data()[i];
      const double ratio = std::abs(a - numeric) / (rtol * std::max(std::abs(a), std::abs(numeric)) + atol);
      if (ratio > rep.worst_ratio) {
        rep.worst_ratio = ratio;
        rep.worst_entry = params[p].name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                          " numeric=" + std::to_string(numeric);
      }
    }
  }
  return rep;
}

/// Shift from (timestamp, code) pairs.
inline Shift shift_of(const std::vector<std::pair<std::int64_t, int>>& events) {
  std::vector<Action> actions;
  for (const auto& [t, c] : events) actions.push_back({t, c});
  return Shift::from_actions(std::move(actions));
}

/// Random month: `n_shifts` shifts of `events` events, one shift per day.
inline MonthRecord random_month(std::mt19937_64& rng, int vocab, int n_shifts, int events, std::int64_t origin = 0,
                                std::string participant = "P0", int month_index = 0) {
  MonthRecord m;
  m.participant_id = std::move(participant);
  m.month_index = month_index;
  m.window_start = origin;
  m.window_end = origin + 40 * 86400;
  std::uniform_int_distribution<int> code(0, vocab - 1);
  std::uniform_int_distribution<int> gap(1, 600);
  for (int s = 0; s < n_shifts; ++s) {
    std::int64_t t = origin + s * 86400 + 8 * 3600 + gap(rng);
    std::vector<Action> actions;
    for (int e = 0; e < events; ++e) {
      actions.push_back({t, code(rng)});
      t += gap(rng);
    }
    m.shifts.push_back(Shift::from_actions(std::move(actions)));
  }
  return m;
}

/// Micro model shape: vocab 10, d_a = 4, d_t = 2, conv width 3.
inline ModelConfig micro_config(Arch arch) {
  ModelConfig mc;
  mc.embed.action_dim = 4;
  mc.embed.time_dim = 2;
  mc.encoder.arch = arch;
  mc.encoder.filters = {3};
  mc.encoder.kernels.clear();
  mc.encoder.kernel = 2;
  mc.encoder.n_layers = arch == Arch::fcn ? 2 : 4;
  mc.encoder.dilation_base = 2;
  mc.encoder.dropout = 0.0;
  mc.encoder.max_steps = 8;
  mc.encoder.h_dim = 3;
  mc.lstm_hidden = 3;
  mc.mlp_hidden = 3;
  mc.dropout = 0.0;
  mc.max_shifts = 30;
  mc.sync_dims();
  return mc;
}

/// Fresh directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("hipal_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace hipal::testing
