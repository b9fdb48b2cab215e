#include "hipal/embed.hpp"

#include "hipal/error.hpp"
#include "hipal/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

namespace hipal {
namespace {

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = d(rng);
  return m;
}

double log_interval(double dt) { return std::log(dt + kIntervalEpsilon); }

}  // namespace

void EmbedConfig::validate() const {
  if (action_dim <= 0 || time_dim <= 0) throw ValidationError("embedding dimensions must be positive");
  if (join == JoinMode::add && action_dim != time_dim)
    throw ValidationError("additive joining needs action_dim == time_dim");
}

IntervalEmbedder::IntervalEmbedder(int dim, Rng& rng)
    : weight(uniform(dim, 1, -0.4, 0.4, rng)), bias(uniform(dim, 1, -1.5, 1.5, rng)) {}

void IntervalEmbedder::collect(std::vector<NamedParameter>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

PeriodicityEmbedder::PeriodicityEmbedder(int dim, Rng& rng) : omega(Matrix(dim, 1)), phi(Matrix(dim, 1)) {
  // Aperiodic entry: one unit per week. Periodic entries: periods spaced
  // log-uniformly from one minute to one week.
  constexpr double kMinPeriodHours = 1.0 / 60.0;
  constexpr double kMaxPeriodHours = 168.0;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  omega.value(0, 0) = 1.0 / kMaxPeriodHours;
  phi.value(0, 0) = 0.0;
  for (int j = 1; j < dim; ++j) {
    const double frac = dim > 2 ? static_cast<double>(j - 1) / (dim - 2) : 0.0;
    const double period = kMinPeriodHours * std::pow(kMaxPeriodHours / kMinPeriodHours, frac);
    omega.value(j, 0) = 2.0 * std::numbers::pi / period;
    phi.value(j, 0) = phase(rng);
  }
}

void PeriodicityEmbedder::collect(std::vector<NamedParameter>& out, const std::string& prefix) {
  out.push_back({prefix + ".omega", &omega});
  out.push_back({prefix + ".phi", &phi});
}

Vector embed_interval(std::optional<double> dt_seconds, const IntervalEmbedder& emb) {
  if (!dt_seconds) return Vector::Zero(emb.dim());
  if (*dt_seconds < 0.0) throw ContractViolation("embed_interval: negative time interval");
  return (emb.weight.value.col(0) * log_interval(*dt_seconds) + emb.bias.value.col(0)).array().tanh().matrix();
}

Vector embed_periodic(double t_seconds, const PeriodicityEmbedder& emb) {
  Vector z = emb.omega.value.col(0) * (t_seconds * kSecondsToHours) + emb.phi.value.col(0);
  Vector out = z;
  for (Eigen::Index j = 1; j < z.size(); ++j) out(j) = std::sin(z(j));
  return out;
}

EmbeddingBank::EmbeddingBank(const EmbedConfig& cfg, int vocab_size, Rng& rng) : config(cfg) {
  cfg.validate();
  if (vocab_size <= 0) throw ValidationError("vocabulary must be non-empty");
  std::normal_distribution<double> n(0.0, 0.3);
  Matrix a(cfg.action_dim, vocab_size);
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = n(rng);
  action = Parameter(std::move(a));
  interval = IntervalEmbedder(cfg.time_dim, rng);
  periodic = PeriodicityEmbedder(cfg.time_dim, rng);
}

void EmbeddingBank::set_action_weights(const ActionEmbedding& pretrained) {
  if (pretrained.weights.rows() != action.rows() || pretrained.weights.cols() != action.cols())
    throw ValidationError("pre-trained action embedding has shape " + std::to_string(pretrained.weights.rows()) +
                          "x" + std::to_string(pretrained.weights.cols()) + ", expected " +
                          std::to_string(action.rows()) + "x" + std::to_string(action.cols()));
  action.value = pretrained.weights;
  action.adam_m.resize(0, 0);
  action.adam_v.resize(0, 0);
}

void EmbeddingBank::collect(std::vector<NamedParameter>& out, const std::string& prefix) {
  out.push_back({prefix + ".action", &action});
  interval.collect(out, prefix + ".interval");
  periodic.collect(out, prefix + ".periodic");
}

Vector joint_embed(const Action& event, std::optional<std::int64_t> prev_timestamp, std::int64_t origin,
                   const EmbeddingBank& bank) {
  if (event.code < 0 || event.code >= bank.vocab_size())
    throw ValidationError("unknown action code " + std::to_string(event.code));
  std::optional<double> dt;
  if (prev_timestamp) dt = static_cast<double>(event.timestamp - *prev_timestamp);
  const Vector a = bank.action.value.col(event.code);
  const Vector b = embed_interval(dt, bank.interval);
  const Vector c = embed_periodic(static_cast<double>(event.timestamp - origin), bank.periodic);
  if (bank.config.join == JoinMode::add) return a + b + c;
  Vector g(a.size() + b.size() + c.size());
  g << a, b, c;
  return g;
}

namespace {

// tanh(W x + d) over a row of log intervals, first column forced to zero.
ad::Var interval_block(ad::Tape& tape, const IntervalEmbedder& emb, Matrix log_dt) {
  const Eigen::Index n = log_dt.cols();
  auto pre = ad::add_bias(ad::matmul(tape.param(emb.weight), tape.constant(std::move(log_dt))), tape.param(emb.bias));
  Matrix m = Matrix::Ones(emb.dim(), n);
  m.col(0).setZero();
  return ad::mask(ad::tanh(pre), std::move(m));
}

}  // namespace

ad::Var embed_sequence(ad::Tape& tape, const EmbeddingBank& bank, std::span<const Action> events,
                       std::int64_t origin) {
  if (events.empty()) throw ContractViolation("embed_sequence: empty sequence");
  const Eigen::Index n = static_cast<Eigen::Index>(events.size());
  std::vector<int> codes;
  codes.reserve(events.size());
  Matrix log_dt(1, n), times(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = events[static_cast<std::size_t>(i)];
    if (e.code < 0 || e.code >= bank.vocab_size())
      throw ValidationError("unknown action code " + std::to_string(e.code));
    codes.push_back(e.code);
    log_dt(0, i) = i == 0 ? 0.0 : log_interval(static_cast<double>(e.timestamp - events[i - 1].timestamp));
    if (i > 0 && e.timestamp < events[i - 1].timestamp) throw ContractViolation("embed_sequence: unsorted events");
    times(0, i) = static_cast<double>(e.timestamp - origin);
  }
  auto a = ad::gather_cols(tape.param(bank.action), std::move(codes));
  auto b = interval_block(tape, bank.interval, std::move(log_dt));
  auto c = ad::time2vec(tape.param(bank.periodic.omega), tape.param(bank.periodic.phi), std::move(times),
                        kSecondsToHours);
  if (bank.config.join == JoinMode::add) return ad::add(ad::add(a, b), c);
  return ad::concat_rows({a, b, c});
}

void ShiftTimeEmbedder::collect(std::vector<NamedParameter>& out, const std::string& prefix) {
  interval.collect(out, prefix + ".interval");
  periodic.collect(out, prefix + ".periodic");
}

ShiftTimeFeatures embed_shift_time(std::int64_t shift_start, std::optional<std::int64_t> prev_shift_start,
                                   std::int64_t month_origin, const ShiftTimeEmbedder& emb) {
  std::optional<double> dt;
  if (prev_shift_start) dt = static_cast<double>(shift_start - *prev_shift_start);
  return {embed_interval(dt, emb.interval), embed_periodic(static_cast<double>(shift_start - month_origin), emb.periodic)};
}

ad::Var embed_shift_times(ad::Tape& tape, const ShiftTimeEmbedder& emb, std::span<const std::int64_t> starts,
                          std::int64_t month_origin) {
  const Eigen::Index n = static_cast<Eigen::Index>(starts.size());
  Matrix log_dt(1, n), times(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    log_dt(0, i) = i == 0 ? 0.0 : log_interval(static_cast<double>(starts[i] - starts[i - 1]));
    times(0, i) = static_cast<double>(starts[i] - month_origin);
  }
  auto p = interval_block(tape, emb.interval, std::move(log_dt));
  auto q = ad::time2vec(tape.param(emb.periodic.omega), tape.param(emb.periodic.phi), std::move(times),
                        kSecondsToHours);
  return ad::concat_rows({p, q});
}

std::pair<std::size_t, std::size_t> context_window(std::size_t length, std::size_t pos, int window) {
  const std::size_t w = static_cast<std::size_t>(std::max(window, 0));
  const std::size_t first = pos >= w ? pos - w : 0;
  const std::size_t last = std::min(length, pos + w + 1);
  return {first, last};
}

SkipGramResult pretrain_skipgram(const std::vector<std::vector<int>>& sequences, int vocab_size,
                                 const SkipGramConfig& cfg) {
  if (vocab_size <= 0 || cfg.dim <= 0 || cfg.window <= 0) throw ValidationError("invalid skip-gram configuration");
  struct Center {
    std::uint32_t seq;
    std::uint32_t pos;
  };
  std::vector<Center> centers;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& seq = sequences[s];
    for (int code : seq)
      if (code < 0 || code >= vocab_size) throw ValidationError("skip-gram corpus code outside vocabulary");
    if (seq.size() < 2) continue;
    for (std::size_t i = 0; i < seq.size(); ++i)
      centers.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(i)});
  }
  if (centers.empty()) throw ValidationError("skip-gram needs at least one sequence of length >= 2");

  Rng rng(cfg.seed);
  const double r = 0.5 / cfg.dim;
  Parameter in(uniform(cfg.dim, vocab_size, -r, r, rng));
  Parameter out(Matrix::Zero(vocab_size, cfg.dim));
  Parameter out_bias(Matrix::Zero(vocab_size, 1));
  std::vector<NamedParameter> params{{"in", &in}, {"out", &out}, {"out_bias", &out_bias}};
  AdamConfig ac;
  ac.learning_rate = cfg.learning_rate;
  ac.clip_norm = 0.0;
  Adam adam(ac);

  SkipGramResult result;
  const std::size_t batch = static_cast<std::size_t>(std::max(cfg.batch, 1));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(centers.begin(), centers.end(), rng);
    std::size_t n_centers = centers.size();
    if (cfg.max_centers_per_epoch > 0) n_centers = std::min(n_centers, cfg.max_centers_per_epoch);
    double epoch_nll = 0.0;
    std::size_t epoch_ctx = 0;
    for (std::size_t b0 = 0; b0 < n_centers; b0 += batch) {
      const std::size_t nb = std::min(batch, n_centers - b0);
      Matrix a(cfg.dim, static_cast<Eigen::Index>(nb));
      std::vector<int> codes(nb);
      for (std::size_t j = 0; j < nb; ++j) {
        const auto& c = centers[b0 + j];
        codes[j] = sequences[c.seq][c.pos];
        a.col(static_cast<Eigen::Index>(j)) = in.value.col(codes[j]);
      }
      Matrix z = out.value * a;
      z.colwise() += out_bias.value.col(0);
      Matrix p = softmax_cols(z);
      Matrix g = Matrix::Zero(vocab_size, static_cast<Eigen::Index>(nb));
      std::size_t n_ctx = 0;
      for (std::size_t j = 0; j < nb; ++j) {
        const auto& c = centers[b0 + j];
        const auto& seq = sequences[c.seq];
        const auto [first, last] = context_window(seq.size(), c.pos, cfg.window);
        double count = 0.0;
        for (std::size_t k = first; k < last; ++k) {
          if (k == c.pos) continue;
          const int ctx = seq[k];
          g(ctx, static_cast<Eigen::Index>(j)) -= 1.0;
          epoch_nll -= std::log(std::max(p(ctx, static_cast<Eigen::Index>(j)), 1e-300));
          count += 1.0;
        }
        g.col(static_cast<Eigen::Index>(j)) += count * p.col(static_cast<Eigen::Index>(j));
        n_ctx += static_cast<std::size_t>(count);
      }
      epoch_ctx += n_ctx;
      if (n_ctx == 0) continue;
      g /= static_cast<double>(n_ctx);
      zero_grad(params);
      out.grad = g * a.transpose();
      out_bias.grad = g.rowwise().sum();
      const Matrix ga = out.value.transpose() * g;
      for (std::size_t j = 0; j < nb; ++j) in.grad.col(codes[j]) += ga.col(static_cast<Eigen::Index>(j));
      adam.step(params);
    }
    result.epoch_loss.push_back(epoch_ctx ? epoch_nll / static_cast<double>(epoch_ctx) : 0.0);
  }
  result.embedding.weights = std::move(in.value);
  return result;
}

std::vector<std::vector<int>> shift_corpus(std::span<const MonthRecord* const> months) {
  std::vector<std::vector<int>> out;
  for (const auto* m : months)
    for (const auto& s : m->shifts) {
      std::vector<int> seq;
      seq.reserve(s.size());
      for (const auto& e : s.events) seq.push_back(e.code);
      out.push_back(std::move(seq));
    }
  return out;
}

double cosine_similarity(const Vector& a, const Vector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

void save_action_embedding(const std::filesystem::path& path, const ActionEmbedding& emb) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os.write("HIPALEM1", 8);
  const std::uint64_t header[3] = {static_cast<std::uint64_t>(emb.weights.rows()),
                                   static_cast<std::uint64_t>(emb.weights.cols()), emb.vocab_hash};
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  os.write(reinterpret_cast<const char*>(emb.weights.data()),
           static_cast<std::streamsize>(emb.weights.size() * sizeof(double)));
  if (!os) throw Error("write failed for " + path.string());
}

ActionEmbedding load_action_embedding(const std::filesystem::path& path, std::optional<std::uint64_t> expected_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != "HIPALEM1") throw Error("not an action embedding file: " + path.string());
  std::uint64_t header[3];
  is.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!is || header[0] > (1u << 20) || header[1] > (1u << 24)) throw Error("corrupt embedding header");
  ActionEmbedding emb;
  emb.vocab_hash = header[2];
  if (expected_hash && *expected_hash != emb.vocab_hash)
    throw ValidationError("action embedding was trained for a different vocabulary");
  emb.weights.resize(static_cast<Eigen::Index>(header[0]), static_cast<Eigen::Index>(header[1]));
  is.read(reinterpret_cast<char*>(emb.weights.data()),
          static_cast<std::streamsize>(emb.weights.size() * sizeof(double)));
  if (!is) throw Error("truncated embedding file " + path.string());
  return emb;
}

}  // namespace hipal
