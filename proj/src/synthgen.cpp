#include "hipal/synthgen.hpp"

#include "hipal/error.hpp"
#include "hipal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

namespace hipal {
namespace {

constexpr const char* kCategoryNames[] = {"note_review", "note_writing", "orders",     "inbox",
                                          "chart_review", "results",     "scheduling", "other"};

// Effect sizes of the latent workload on observable behaviour.
constexpr double kShiftCountEffect = 0.12;
constexpr double kEventCountEffect = 0.30;
constexpr double kIntervalEffect = 0.35;
constexpr std::int64_t kMaxShiftSeconds = 12 * 3600;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

struct CategoryChain {
  int n = 0;
  std::vector<std::vector<double>> move;  // row-stochastic, zero diagonal
  std::vector<int> first_code, code_count;

  int next(int cur, double stay, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (n == 1 || u(rng) < stay) return cur;
    std::discrete_distribution<int> d(move[cur].begin(), move[cur].end());
    return d(rng);
  }

  int action(int cat, std::mt19937_64& rng) const {
    std::uniform_int_distribution<int> d(0, code_count[cat] - 1);
    return first_code[cat] + d(rng);
  }
};

CategoryChain make_chain(const GeneratorConfig& c) {
  CategoryChain ch;
  ch.n = c.n_categories;
  auto rng = substream(c.seed, 1, 0);
  std::gamma_distribution<double> g(1.0, 1.0);
  ch.move.assign(ch.n, std::vector<double>(ch.n, 0.0));
  for (int i = 0; i < ch.n; ++i)
    for (int j = 0; j < ch.n; ++j)
      if (i != j) ch.move[i][j] = g(rng) + 0.05;
  for (int k = 0; k < ch.n; ++k) {
    const int lo = static_cast<int>(static_cast<long>(k) * c.vocab_size / ch.n);
    const int hi = static_cast<int>(static_cast<long>(k + 1) * c.vocab_size / ch.n);
    ch.first_code.push_back(lo);
    ch.code_count.push_back(hi - lo);
  }
  return ch;
}

int clipped_poisson(double mean, int lo, int hi, std::mt19937_64& rng) {
  std::poisson_distribution<int> d(std::max(mean, 1e-9));
  return std::clamp(d(rng), lo, hi);
}

// Appends one shift's events starting at `start`.
std::size_t emit_shift(std::vector<ActionEvent>& out, const std::string& pid, std::int64_t start, int n_events,
                       double workload, const GeneratorConfig& c, const CategoryChain& chain, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> first_cat(0, chain.n - 1);
  const double loc = c.interval_log_mean - kIntervalEffect * workload;
  const double stay = 0.3 + 0.4 * sigmoid(workload);
  int cat = first_cat(rng);
  std::int64_t t = start;
  std::size_t emitted = 0;
  for (int i = 0; i < n_events; ++i) {
    if (i > 0) {
      const double dt = std::exp(loc + c.interval_log_sd * noise(rng));
      const auto step = std::clamp<std::int64_t>(std::llround(dt), 0, c.max_interval_seconds);
      if (t + step - start > kMaxShiftSeconds) break;
      t += step;
      cat = chain.next(cat, stay, rng);
    }
    out.push_back({pid, t, chain.action(cat, rng)});
    ++emitted;
  }
  return emitted;
}

std::string participant_name(int p) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "P%03d", p);
  return buf;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (n_participants <= 0 || months_per_participant <= 0 || vocab_size <= 0 || n_categories <= 0 ||
      mean_shifts_per_month <= 0 || max_shifts_per_month <= 0 || mean_events_per_shift <= 0 ||
      max_events_per_shift <= 0)
    throw ValidationError("generator counts must be positive");
  if (n_categories > vocab_size) throw ValidationError("more categories than actions");
  if (max_shifts_per_month > kRotationDays) throw ValidationError("at most one shift per rotation day");
  if (!(unlabeled_fraction >= 0.0 && unlabeled_fraction <= 1.0))
    throw ValidationError("unlabeled_fraction must lie in [0, 1]");
  if (signal_strength < 0.0) throw ValidationError("signal_strength must be >= 0");
  if (tail_jitter_days < 0 || tail_jitter_days > kWindowDays - kRotationDays)
    throw ValidationError("tail_jitter_days must lie in [0, 5]");
  if (max_interval_seconds >= kDefaultGapSeconds) throw ValidationError("max_interval must stay below the shift gap");
}

std::string category_name(int index, int n_categories) {
  if (n_categories == 8) return kCategoryNames[index];
  return "category_" + std::to_string(index);
}

GeneratedData generate_dataset(const GeneratorConfig& c) {
  c.validate();
  GeneratedData out;
  const CategoryChain chain = make_chain(c);

  for (int k = 0; k < c.n_categories; ++k)
    for (int code = chain.first_code[k]; code < chain.first_code[k] + chain.code_count[k]; ++code) {
      char name[32];
      std::snprintf(name, sizeof(name), "action_%04d", code);
      out.vocabulary.entries.push_back({code, name, category_name(k, c.n_categories)});
    }

  // Latent workload: participant baseline plus month noise.
  auto latent_rng = substream(c.seed, 2, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int total = c.n_participants * c.months_per_participant;
  std::vector<double> w(total);
  for (int p = 0; p < c.n_participants; ++p) {
    const double base = c.participant_workload_sd * normal(latent_rng);
    for (int m = 0; m < c.months_per_participant; ++m)
      w[p * c.months_per_participant + m] = base + c.month_workload_sd * normal(latent_rng);
  }
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / total;
  double var = 0.0;
  for (double x : w) var += (x - mean) * (x - mean);
  const double sd = total > 1 ? std::sqrt(var / total) : 1.0;

  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), latent_rng);
  const int n_withheld = static_cast<int>(std::llround(c.unlabeled_fraction * total));
  std::vector<bool> withheld(total, false);
  for (int i = 0; i < n_withheld; ++i) withheld[order[i]] = true;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int p = 0; p < c.n_participants; ++p) {
    const std::string pid = participant_name(p);
    auto rng = substream(c.seed, 3, static_cast<std::uint64_t>(p));
    std::normal_distribution<double> hour_noise(0.0, 0.75);
    const double usual_start = std::clamp(7.0 + normal(rng), 5.0, 10.0);
    for (int m = 0; m < c.months_per_participant; ++m) {
      const int idx = p * c.months_per_participant + m;
      const double z = sd > 0 ? (w[idx] - mean) / sd : 0.0;
      const double prob = sigmoid(c.signal_strength * z + c.label_bias);
      const bool label = unit(rng) < prob;

      SurveyWindow win;
      win.participant_id = pid;
      win.month_index = m;
      win.month_start = c.start_epoch + static_cast<std::int64_t>(m) * kWindowDays * 86400 + p * 60;
      win.month_end = win.month_start + static_cast<std::int64_t>(kWindowDays) * 86400;
      if (!withheld[idx]) {
        const double pfi = label ? 1.33 + 1.67 * unit(rng) : 1.32 * unit(rng);
        win.pfi_score = std::round(pfi * 1e4) / 1e4;
      }
      out.surveys.push_back(win);
      out.truth.months.push_back({pid, m, w[idx], prob, label, withheld[idx]});

      // Shifts on distinct rotation days.
      const double shift_mean = c.mean_shifts_per_month * std::exp(kShiftCountEffect * w[idx]);
      const int n_shifts = clipped_poisson(shift_mean, 1, c.max_shifts_per_month, rng);
      std::vector<int> days(kRotationDays);
      std::iota(days.begin(), days.end(), 0);
      std::shuffle(days.begin(), days.end(), rng);
      days.resize(n_shifts);
      std::sort(days.begin(), days.end());

      const double event_mean = c.mean_events_per_shift * std::exp(kEventCountEffect * w[idx]);
      for (int k = 0; k < n_shifts; ++k) {
        double factor = 1.0;
        if (c.intermittent) factor = (k % 2 == 0) ? 0.5 : 1.5;
        const int n_events = clipped_poisson(event_mean * factor, 1, c.max_events_per_shift, rng);
        const double hour = std::clamp(usual_start + hour_noise(rng), 4.0, 11.0);
        const std::int64_t start = win.month_start + static_cast<std::int64_t>(days[k]) * 86400 +
                                   static_cast<std::int64_t>(hour * 3600.0);
        out.counts.events += emit_shift(out.events, pid, start, n_events, w[idx], c, chain, rng);
        ++out.counts.shifts;
      }

      // Next-rotation spill-over with an unrelated workload.
      if (c.tail_jitter_days > 0) {
        std::uniform_int_distribution<int> jitter(0, c.tail_jitter_days);
        const int days_extra = jitter(rng);
        const double w_next = normal(rng) * std::sqrt(c.participant_workload_sd * c.participant_workload_sd +
                                                      c.month_workload_sd * c.month_workload_sd);
        const double next_mean = c.mean_events_per_shift * std::exp(kEventCountEffect * w_next);
        for (int d = 0; d < days_extra; ++d) {
          const int n_events = clipped_poisson(next_mean, 1, c.max_events_per_shift, rng);
          const double hour = std::clamp(usual_start + hour_noise(rng), 4.0, 11.0);
          const std::int64_t start = win.month_start + static_cast<std::int64_t>(kRotationDays + d) * 86400 +
                                     static_cast<std::int64_t>(hour * 3600.0);
          out.counts.events += emit_shift(out.events, pid, start, n_events, w_next, c, chain, rng);
          ++out.counts.shifts;
        }
      }
      ++out.counts.months;
      if (win.pfi_score) ++out.counts.labeled_months;
    }
  }
  out.counts.participants = static_cast<std::size_t>(c.n_participants);

  out.dataset = assemble_dataset(out.events, out.surveys, kDefaultGapSeconds, c.vocab_size).dataset;
  return out;
}

double oracle_auroc(const Dataset& ds, const LatentTruth& truth) {
  std::map<std::pair<std::string, int>, const LatentMonth*> index;
  for (const auto& lm : truth.months) index[{lm.participant_id, lm.month_index}] = &lm;
  std::vector<int> labels;
  std::vector<double> scores;
  for (const auto& m : ds.months) {
    auto it = index.find({m.participant_id, m.month_index});
    if (it == index.end()) throw ContractViolation("latent truth missing month " + m.participant_id);
    labels.push_back(it->second->label ? 1 : 0);
    scores.push_back(it->second->workload);
  }
  return auroc(labels, scores).value_or(0.5);
}

void write_latent_truth(std::ostream& out, const LatentTruth& truth) {
  out << "participant_id,month_index,w,p_burnout,label_withheld\n";
  char buf[128];
  for (const auto& m : truth.months) {
    std::snprintf(buf, sizeof(buf), "%.9f,%.9f,%d", m.workload, m.p_burnout, m.label_withheld ? 1 : 0);
    out << m.participant_id << ',' << m.month_index << ',' << buf << '\n';
  }
}

void write_generated(const std::filesystem::path& dir, const GeneratedData& data) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name);
    if (!os) throw Error("cannot write " + (dir / name).string());
    return os;
  };
  {
    auto os = open("events.csv");
    write_events_csv(os, data.events);
  }
  {
    auto os = open("surveys.csv");
    write_surveys(os, data.surveys);
  }
  {
    auto os = open("vocab.csv");
    write_vocabulary(os, data.vocabulary);
  }
  {
    auto os = open("latent_truth.csv");
    write_latent_truth(os, data.truth);
  }
  save_dataset(dir / "dataset.jsonl", data.dataset);
}

}  // namespace hipal
