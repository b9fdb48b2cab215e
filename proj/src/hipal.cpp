#include "hipal/hipal.hpp"

#include "hipal/checkpoint.hpp"
#include "hipal/error.hpp"
#include "hipal/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

namespace hipal {

ModelConfig ModelConfig::defaults(Arch arch) {
  ModelConfig c;
  c.encoder = EncoderConfig::hierarchical(arch, c.embed.joint_dim());
  return c;
}

void ModelConfig::validate() const {
  embed.validate();
  encoder.validate();
  if (encoder.input_dim != embed.joint_dim())
    throw ValidationError("encoder input_dim " + std::to_string(encoder.input_dim) + " != embedding width " +
                          std::to_string(embed.joint_dim()));
  if (lstm_hidden < 1 || mlp_hidden < 1) throw ValidationError("hidden widths must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("dropout must be in [0, 1)");
  if (max_shifts < 1) throw ValidationError("max_shifts must be >= 1");
}

std::string ModelConfig::echo() const {
  char drop[32];
  std::snprintf(drop, sizeof drop, "%.17g", dropout);
  std::ostringstream os;
  os << "action_dim=" << embed.action_dim << "\ntime_dim=" << embed.time_dim
     << "\njoin=" << (embed.join == JoinMode::add ? "add" : "concat") << "\nlstm_hidden=" << lstm_hidden
     << "\nmlp_hidden=" << mlp_hidden << "\ndropout=" << drop << "\nmax_shifts=" << max_shifts << "\n";
  std::istringstream enc(encoder.echo());
  std::string line;
  while (std::getline(enc, line)) os << "encoder." << line << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_echo(const std::string& text) {
  ModelConfig c;
  std::string enc;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key.rfind("encoder.", 0) == 0) enc += line.substr(8) + "\n";
    else if (key == "action_dim") c.embed.action_dim = std::stoi(value);
    else if (key == "time_dim") c.embed.time_dim = std::stoi(value);
    else if (key == "join") c.embed.join = value == "add" ? JoinMode::add : JoinMode::concat;
    else if (key == "lstm_hidden") c.lstm_hidden = std::stoi(value);
    else if (key == "mlp_hidden") c.mlp_hidden = std::stoi(value);
    else if (key == "dropout") c.dropout = std::stod(value);
    else if (key == "max_shifts") c.max_shifts = std::stoi(value);
  }
  c.encoder = EncoderConfig::from_echo(enc);
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (lambda < 0.0) throw ValidationError("lambda must be >= 0");
  if (tail_max_days < 0) throw ValidationError("tail_max_days must be >= 0");
  if (tail_rho < 0.0) throw ValidationError("tail_rho must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (learning_rate <= 0.0) throw ValidationError("learning_rate must be > 0");
}

MonthPrediction MonthClassifier::predict(const MonthRecord& month) const {
  ad::Tape tape;
  const MonthForward fwd = forward(tape, month, nullptr);
  MonthPrediction p;
  p.gamma = positive_probability(fwd.gamma_logits.value())(0);
  if (fwd.alpha_logits) {
    const Vector a = positive_probability(fwd.alpha_logits->value());
    p.daily_risks.assign(a.data(), a.data() + a.size());
  }
  return p;
}

Vector shift_representation(const Vector& h, std::int64_t shift_start, std::optional<std::int64_t> prev_shift_start,
                            std::int64_t month_origin, const ShiftTimeEmbedder& emb) {
  const ShiftTimeFeatures f = embed_shift_time(shift_start, prev_shift_start, month_origin, emb);
  Vector r(h.size() + f.p.size() + f.q.size());
  r << h, f.p, f.q;
  return r;
}

namespace {

void check_codes(const MonthRecord& month, int vocab_size) {
  for (const auto& s : month.shifts)
    for (const auto& e : s.events)
      if (e.code < 0 || e.code >= vocab_size)
        throw ValidationError("action code " + std::to_string(e.code) + " is outside the model vocabulary of " +
                              std::to_string(vocab_size));
}

}  // namespace

HiPALModel::HiPALModel(const ModelConfig& cfg, int vocab_size, Rng& rng) : config(cfg) {
  config.validate();
  bank = EmbeddingBank(config.embed, vocab_size, rng);
  encoder = LowLevelEncoder(config.encoder, rng);
  shift_time = ShiftTimeEmbedder(config.embed.time_dim, rng);
  lstm = LSTM(representation_dim(), config.lstm_hidden, rng);
  classifier = MLP(config.lstm_hidden, config.mlp_hidden, 2, config.dropout, rng);
  tc_head = Linear(representation_dim(), 2, rng);
}

std::span<const Shift> HiPALModel::used_shifts(const MonthRecord& month) const {
  return most_recent(std::span<const Shift>(month.shifts), static_cast<std::size_t>(config.max_shifts));
}

ad::Var HiPALModel::encode_shift(ad::Tape& tape, const Shift& shift, Rng* rng) const {
  if (shift.events.empty()) throw ContractViolation("encode_shift: empty shift");
  const auto events =
      most_recent(std::span<const Action>(shift.events), static_cast<std::size_t>(config.encoder.max_steps));
  return encoder.encode(tape, embed_sequence(tape, bank, events, shift.start_time), rng);
}

MonthForward HiPALModel::forward(ad::Tape& tape, const MonthRecord& month, Rng* rng) const {
  if (month.shifts.empty()) throw ContractViolation("forward_month: month without shifts");
  check_codes(month, vocab_size());
  const auto shifts = used_shifts(month);
  std::vector<ad::Var> hs;
  std::vector<std::int64_t> starts;
  for (const auto& s : shifts) {
    hs.push_back(encode_shift(tape, s, rng));
    starts.push_back(s.start_time);
  }
  auto r = ad::concat_rows(
      {ad::concat_cols<Real>(hs), embed_shift_times(tape, shift_time, starts, month.window_start)});
  auto v = lstm.sequence(tape, r);
  MonthForward out;
  out.gamma_logits = classifier(tape, ad::slice_cols(v, v.cols() - 1, 1), rng);
  out.alpha_logits = tc_head(tape, r);
  return out;
}

void HiPALModel::collect(std::vector<NamedParameter>& out) {
  bank.collect(out, "bank");
  encoder.collect(out, "encoder");
  shift_time.collect(out, "shift_time");
  lstm.collect(out, "lstm");
  classifier.collect(out, "classifier");
  tc_head.collect(out, "tc_head");
}

std::vector<NamedParameter> HiPALModel::parameters() {
  std::vector<NamedParameter> out;
  collect(out);
  return out;
}

void HiPALModel::save(const std::filesystem::path& path) {
  Checkpoint ck;
  ck.config = "vocab_size=" + std::to_string(vocab_size()) + "\n" + config.echo();
  ck.put(parameters());
  ck.save(path);
}

HiPALModel HiPALModel::load(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::load(path);
  const auto pos = ck.config.find("vocab_size=");
  if (pos == std::string::npos) throw Error("model checkpoint lacks vocab_size: " + path.string());
  const int vocab = std::stoi(ck.config.substr(pos + 11));
  Rng rng(0);
  HiPALModel model(ModelConfig::from_echo(ck.config), vocab, rng);
  ck.get(model.parameters());
  return model;
}

StreamingPredictor::StreamingPredictor(const HiPALModel& model, std::int64_t month_origin)
    : model_(&model), origin_(month_origin), state_(model.lstm.initial_state()) {}

double StreamingPredictor::push(const Shift& shift) {
  Vector h;
  {
    ad::Tape tape;
    h = model_->encode_shift(tape, shift, nullptr).value().col(0);
  }
  const Vector r = shift_representation(h, shift.start_time, prev_start_, origin_, model_->shift_time);
  const Matrix logits = model_->tc_head.weight.value * r + model_->tc_head.bias.value;
  const double alpha = positive_probability(logits)(0);
  state_ = model_->lstm.step(r, state_);
  prev_start_ = shift.start_time;
  risks_.push_back(alpha);
  return alpha;
}

double StreamingPredictor::gamma() const {
  if (risks_.empty()) throw ContractViolation("StreamingPredictor: no shift consumed yet");
  ad::Tape tape;
  return positive_probability(model_->classifier(tape, tape.constant(state_.h), nullptr).value())(0);
}

SingleLevelModel::SingleLevelModel(const ModelConfig& cfg, int vocab_size, Rng& rng) : config(cfg) {
  config.validate();
  bank = EmbeddingBank(config.embed, vocab_size, rng);
  encoder = LowLevelEncoder(config.encoder, rng);
  classifier = MLP(encoder.output_dim(), config.mlp_hidden, 2, config.dropout, rng);
}

MonthForward SingleLevelModel::forward(ad::Tape& tape, const MonthRecord& month, Rng* rng) const {
  if (month.shifts.empty()) throw ContractViolation("forward_month: month without shifts");
  check_codes(month, bank.vocab_size());
  std::vector<Action> events;
  events.reserve(month.num_events());
  for (const auto& s : month.shifts) events.insert(events.end(), s.events.begin(), s.events.end());
  const auto recent = most_recent(std::span<const Action>(events), static_cast<std::size_t>(config.encoder.max_steps));
  auto h = encoder.encode(tape, embed_sequence(tape, bank, recent, month.window_start), rng);
  return {classifier(tape, h, rng), std::nullopt};
}

std::vector<NamedParameter> SingleLevelModel::parameters() {
  std::vector<NamedParameter> out;
  bank.collect(out, "bank");
  encoder.collect(out, "encoder");
  classifier.collect(out, "classifier");
  return out;
}

double composite_loss(double gamma, std::span<const double> daily_risks, int y, double lambda) {
  auto ce = [y](double p) { return -std::log(y == 1 ? p : 1.0 - p); };
  double loss = ce(gamma);
  if (lambda > 0.0 && !daily_risks.empty()) {
    double tc = 0.0;
    for (double a : daily_risks) tc += ce(a);
    loss += lambda * tc / static_cast<double>(daily_risks.size());
  }
  return loss;
}

ad::Var composite_loss(const MonthForward& fwd, int y, double lambda) {
  auto loss = ad::softmax_nll(fwd.gamma_logits, {y}, {1.0});
  if (lambda > 0.0 && fwd.alpha_logits) {
    const auto t = static_cast<std::size_t>(fwd.alpha_logits->cols());
    loss = ad::add(loss, ad::softmax_nll(*fwd.alpha_logits, std::vector<int>(t, y),
                                         std::vector<double>(t, lambda / static_cast<double>(t))));
  }
  return loss;
}

std::vector<double> tail_drop_distribution(int l_max, double rho) {
  if (l_max < 0 || rho < 0.0) throw ValidationError("tail drop needs L_max >= 0 and rho >= 0");
  std::vector<double> w(static_cast<std::size_t>(l_max) + 1);
  for (int l = 0; l <= l_max; ++l) w[static_cast<std::size_t>(l)] = std::pow(static_cast<double>(l_max - l), rho);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total == 0.0) return std::vector<double>{1.0};  // L_max = 0
  for (double& x : w) x /= total;
  return w;
}

int sample_tail_drop(int l_max, double rho, Rng& rng) {
  const auto p = tail_drop_distribution(l_max, rho);
  if (p.size() == 1) return 0;
  std::discrete_distribution<int> d(p.begin(), p.end());
  return d(rng);
}

MonthRecord apply_tail_drop(const MonthRecord& month, int days) {
  if (days <= 0 || month.shifts.empty()) return month;
  constexpr std::int64_t kDay = 86400;
  const std::int64_t last = month.last_time();
  for (int l = days; l > 0; --l) {
    const std::int64_t cutoff = last - l * kDay;
    std::vector<Shift> kept;
    for (const auto& s : month.shifts) {
      if (s.end_time <= cutoff) {
        kept.push_back(s);
        continue;
      }
      std::vector<Action> events;
      for (const auto& e : s.events)
        if (e.timestamp <= cutoff) events.push_back(e);
      if (!events.empty()) kept.push_back(Shift::from_actions(std::move(events)));
    }
    if (!kept.empty()) {
      MonthRecord out = month;
      out.shifts = std::move(kept);
      return out;
    }
  }
  return month;
}

void TrainHistory::write_csv(std::ostream& out) const {
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  out << "epoch,train_loss,val_loss,train_auroc,val_auroc,seconds\n";
  for (const auto& e : epochs) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,", e.epoch, e.train_loss, e.val_loss);
    out << buf << opt(e.train_auroc) << ',' << opt(e.val_auroc) << ',';
    std::snprintf(buf, sizeof buf, "%.3f", e.seconds);
    out << buf << '\n';
  }
}

namespace {

int label_of(const MonthRecord& m) {
  if (!m.label) throw ValidationError("month " + m.participant_id + "/" + std::to_string(m.month_index) +
                                      " has no burnout label");
  return *m.label ? 1 : 0;
}

}  // namespace

TrainHistory train_model(MonthClassifier& model, std::span<const MonthRecord* const> train,
                         std::span<const MonthRecord* const> validation, const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw ValidationError("no labeled months to train on");
  std::vector<int> train_labels;
  for (const auto* m : train) train_labels.push_back(label_of(*m));
  std::vector<int> val_labels;
  for (const auto* m : validation) val_labels.push_back(label_of(*m));

  const auto params = model.parameters();
  for (const auto& np : params) {
    np.param->adam_m.resize(0, 0);
    np.param->adam_v.resize(0, 0);
  }
  Adam adam({config.learning_rate, 0.9, 0.999, 1e-8, config.clip_norm});
  Rng rng(config.seed);

  TrainHistory history;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::optional<double> best;
  std::vector<Matrix> best_values;
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> gammas(train.size());
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
      const std::size_t nb = std::min(batch, order.size() - b0);
      zero_grad(params);
      for (std::size_t j = 0; j < nb; ++j) {
        const std::size_t idx = order[b0 + j];
        const MonthRecord* month = train[idx];
        MonthRecord dropped;
        if (config.tail_drop) {
          const int l = sample_tail_drop(config.tail_max_days, config.tail_rho, rng);
          if (l > 0) {
            dropped = apply_tail_drop(*month, l);
            month = &dropped;
          }
        }
        ad::Tape tape;
        const MonthForward fwd = model.forward(tape, *month, &rng);
        auto loss = composite_loss(fwd, train_labels[idx], config.lambda);
        tape.backward(loss);
        collect_grads(tape, params, 1.0 / static_cast<double>(nb));
        loss_sum += loss.scalar();
        gammas[idx] = positive_probability(fwd.gamma_logits.value())(0);
      }
      adam.step(params);
    }
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stats.train_loss = loss_sum / static_cast<double>(train.size());
    stats.train_auroc = auroc(train_labels, gammas);
    if (!validation.empty()) {
      std::vector<double> scores;
      double vloss = 0.0;
      for (std::size_t i = 0; i < validation.size(); ++i) {
        const MonthPrediction p = model.predict(*validation[i]);
        scores.push_back(p.gamma);
        vloss += composite_loss(std::clamp(p.gamma, 1e-12, 1.0 - 1e-12), p.daily_risks, val_labels[i], config.lambda);
      }
      stats.val_loss = vloss / static_cast<double>(validation.size());
      stats.val_auroc = auroc(val_labels, scores);
    }
    history.epochs.push_back(stats);
    if (config.select_best && stats.val_auroc && (!best || *stats.val_auroc > *best)) {
      best = stats.val_auroc;
      best_values = snapshot(params);
      history.best_epoch = stats.epoch;
    }
  }
  if (config.select_best && best) {
    restore(params, best_values);
  } else if (!history.epochs.empty()) {
    history.best_epoch = history.epochs.back().epoch;
  }
  return history;
}

TrainedHiPAL train_supervised(std::span<const MonthRecord* const> train, std::span<const MonthRecord* const> validation,
                              const ModelConfig& model_config, const TrainConfig& train_config, int vocab_size,
                              const LowLevelEncoder* pretrained_encoder, const ActionEmbedding* pretrained_actions) {
  if (train.empty()) throw ValidationError("no labeled months to train on");
  Rng rng(train_config.seed);
  TrainedHiPAL out{HiPALModel(model_config, vocab_size, rng), {}};
  if (pretrained_actions) out.model.bank.set_action_weights(*pretrained_actions);
  if (pretrained_encoder) {
    if (pretrained_encoder->config() != out.model.encoder.config())
      throw ValidationError("pre-trained encoder config differs from the model's low-level encoder");
    out.model.encoder = *pretrained_encoder;
  }
  out.history = train_model(out.model, train, validation, train_config);
  return out;
}

std::vector<double> predict_scores(const MonthClassifier& model, std::span<const MonthRecord* const> months) {
  std::vector<double> out;
  out.reserve(months.size());
  for (const auto* m : months) out.push_back(model.predict(*m).gamma);
  return out;
}

}  // namespace hipal
