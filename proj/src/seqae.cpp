#include "hipal/seqae.hpp"

#include "hipal/checkpoint.hpp"
#include "hipal/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hipal {

int TimeBins::bin(std::optional<double> dt_seconds) const {
  if (!dt_seconds) return 0;
  const double x = std::log(*dt_seconds + kIntervalEpsilon);
  return 1 + static_cast<int>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin());
}

TimeBins TimeBins::fit(std::vector<double> values, int k) {
  if (k < 3) throw ValidationError("time bins need K >= 3");
  TimeBins bins;
  const int interior = k - 2;
  if (values.empty()) {
    const double hi = std::log(static_cast<double>(kDefaultGapSeconds) + kIntervalEpsilon);
    for (int i = 1; i <= interior; ++i) bins.edges.push_back(hi * i / (interior + 1));
    return bins;
  }
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size() - 1);
  for (int i = 1; i <= interior; ++i) {
    const double pos = n * i / (k - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    double e = values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    if (!bins.edges.empty() && e <= bins.edges.back()) e = std::nextafter(bins.edges.back(), HUGE_VAL);
    bins.edges.push_back(e);
  }
  return bins;
}

std::vector<double> corpus_log_intervals(std::span<const MonthRecord* const> months, int max_steps) {
  std::vector<double> out;
  for (const auto* m : months)
    for (const auto& s : m->shifts) {
      const auto ev = most_recent(std::span<const Action>(s.events), static_cast<std::size_t>(max_steps));
      for (std::size_t i = 1; i < ev.size(); ++i)
        out.push_back(std::log(static_cast<double>(ev[i].timestamp - ev[i - 1].timestamp) + kIntervalEpsilon));
    }
  return out;
}

std::vector<int> time_bin_targets(std::span<const Action> events, const TimeBins& bins) {
  std::vector<int> out;
  out.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i)
    out.push_back(i == 0 ? 0 : bins.bin(static_cast<double>(events[i].timestamp - events[i - 1].timestamp)));
  return out;
}

DecoderSpec build_decoder(const EncoderConfig& c, int n, int output_channels) {
  c.validate();
  if (n < 1) throw ContractViolation("build_decoder: input length must be >= 1");
  DecoderSpec spec;
  spec.arch = c.arch;
  spec.walk.push_back(n);
  const int last = c.n_layers - 1;
  switch (c.arch) {
    case Arch::fcn:
      spec.stages.push_back({"replicate", c.output_dim(), n, 0, 0});
      for (int l = last; l >= 0; --l) spec.stages.push_back({"conv", c.layer_filters(l), n, c.layer_kernel(l), 1});
      break;
    case Arch::restcn:
      spec.stages.push_back({"replicate", c.output_dim(), n, 0, 0});
      for (int l = last; l >= 0; --l)
        spec.stages.push_back({"residual", c.layer_filters(l), n, c.layer_kernel(l), c.layer_dilation(l)});
      break;
    case Arch::causalnet: {
      std::vector<int> lengths{n};
      for (int p = 0; p < c.pooling_layers(); ++p) {
        lengths.push_back((lengths.back() + 1) / 2);
        spec.walk.push_back(lengths.back());
      }
      spec.stages.push_back({"unflatten", c.layer_filters(last), lengths.back(), 0, 0});
      for (int l = last; l >= 0; --l) {
        spec.stages.push_back(
            {"conv", c.layer_filters(l), lengths[static_cast<std::size_t>(l)], c.layer_kernel(l), c.layer_dilation(l)});
        if (l > 0) {
          const int up = lengths[static_cast<std::size_t>(l - 1)];
          spec.stages.push_back({"upsample", c.layer_filters(l), up, 0, 0});
          spec.walk.push_back(up);
        }
      }
      break;
    }
  }
  spec.stages.push_back({"project", output_channels, n, 1, 1});
  return spec;
}

Decoder::Decoder(const EncoderConfig& config, int output_channels, Rng& rng) : config_(config) {
  config_.validate();
  const int last = config_.n_layers - 1;
  int cin = config_.arch == Arch::causalnet ? config_.layer_filters(last) : config_.output_dim();
  if (config_.arch == Arch::causalnet)
    unflatten_ = Linear(config_.h_dim, config_.flatten_size(), rng);
  for (int l = last; l >= 0; --l) {
    Conv c;
    c.kernel = config_.layer_kernel(l);
    c.dilation = config_.layer_dilation(l);
    const int cout = config_.layer_filters(l);
    c.weight = Parameter(gaussian(cout, c.kernel * cin, std::sqrt(2.0 / (c.kernel * cin)), rng));
    c.bias = Parameter(Matrix::Zero(cout, 1));
    if (config_.arch == Arch::restcn) c.gain = Parameter(c.weight.value.rowwise().norm());
    if (config_.arch == Arch::fcn) {
      c.norm_scale = Parameter(Matrix::Ones(cout, 1));
      c.norm_shift = Parameter(Matrix::Zero(cout, 1));
    }
    if (config_.arch == Arch::restcn && (last - l) % 2 == 0) {
      const int block_out = config_.layer_filters(l - 1 >= 0 ? l - 1 : l);
      projections_.push_back(cin == block_out ? Linear() : Linear(cin, block_out, rng));
    }
    convs_.push_back(std::move(c));
    conv_layer_.push_back(l);
    cin = cout;
  }
  output_ = Linear(cin, output_channels, rng);
}

ad::Var Decoder::conv(ad::Tape& tape, const Conv& c, ad::Var x) const {
  auto w = tape.param(c.weight);
  if (config_.arch == Arch::restcn) w = ad::weight_norm(w, tape.param(c.gain));
  return ad::conv1d(x, w, tape.param(c.bias), c.kernel, c.dilation, config_.arch == Arch::fcn);
}

ad::Var Decoder::decode(ad::Tape& tape, ad::Var h, int length, Rng* rng) const {
  return decode(tape, h, length, rng, nullptr);
}

ad::Var Decoder::decode(ad::Tape& tape, ad::Var h, int length, Rng* rng, ad::Var* input) const {
  if (length < 1 || length > config_.max_steps) throw ContractViolation("decode: length outside [1, max_steps]");
  const double rate = config_.dropout;
  ad::Var x;
  switch (config_.arch) {
    case Arch::fcn: {
      x = ad::repeat_cols(h, length);
      if (input) *input = x;
      for (const auto& c : convs_)
        x = ad::relu(ad::channel_norm(conv(tape, c, x), tape.param(c.norm_scale), tape.param(c.norm_shift)));
      break;
    }
    case Arch::restcn: {
      x = ad::repeat_cols(h, length);
      if (input) *input = x;
      for (std::size_t b = 0; 2 * b < convs_.size(); ++b) {
        auto y = ad::dropout(ad::relu(conv(tape, convs_[2 * b], x)), rate, rng);
        y = ad::dropout(ad::relu(conv(tape, convs_[2 * b + 1], y)), rate, rng);
        const auto& proj = projections_[b];
        x = ad::relu(ad::add(proj.weight.size() == 0 ? x : proj(tape, x), y));
      }
      break;
    }
    case Arch::causalnet: {
      std::vector<Eigen::Index> lengths{length};
      for (int p = 0; p < config_.pooling_layers(); ++p) lengths.push_back((lengths.back() + 1) / 2);
      const Eigen::Index channels = config_.layer_filters(config_.n_layers - 1);
      const Eigen::Index rows = channels * lengths.back();
      auto w = ad::slice_rows(tape.param(unflatten_.weight), 0, rows);
      auto b = ad::slice_rows(tape.param(unflatten_.bias), 0, rows);
      x = ad::reshape(ad::add(ad::matmul(w, h), b), channels, lengths.back());
      if (input) *input = x;
      for (std::size_t i = 0; i < convs_.size(); ++i) {
        x = ad::dropout(ad::relu(conv(tape, convs_[i], x)), rate, rng);
        const int l = conv_layer_[i];
        if (l > 0) x = ad::upsample2(x, lengths[static_cast<std::size_t>(l - 1)]);
      }
      break;
    }
  }
  return output_(tape, x);
}

void Decoder::collect(std::vector<NamedParameter>& out, const std::string& prefix) {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const std::string p = prefix + ".conv" + std::to_string(i);
    auto& c = convs_[i];
    out.push_back({p + ".weight", &c.weight});
    out.push_back({p + ".bias", &c.bias});
    if (c.gain.size()) out.push_back({p + ".gain", &c.gain});
    if (c.norm_scale.size()) {
      out.push_back({p + ".norm_scale", &c.norm_scale});
      out.push_back({p + ".norm_shift", &c.norm_shift});
    }
  }
  for (std::size_t b = 0; b < projections_.size(); ++b)
    if (projections_[b].weight.size()) projections_[b].collect(out, prefix + ".proj" + std::to_string(b));
  if (unflatten_.weight.size()) unflatten_.collect(out, prefix + ".unflatten");
  output_.collect(out, prefix + ".output");
}

SeqAEModel::SeqAEModel(const ModelConfig& cfg, int vocab_size, TimeBins time_bins, Rng& rng)
    : config(cfg), bins(std::move(time_bins)) {
  config.validate();
  bank = EmbeddingBank(config.embed, vocab_size, rng);
  encoder = LowLevelEncoder(config.encoder, rng);
  decoder = Decoder(config.encoder, config.embed.action_dim, rng);
  action_head = Linear(config.embed.action_dim, vocab_size, rng);
  time_head = Linear(config.embed.action_dim, bins.count(), rng);
  init_action_head_from_embedding();
}

void SeqAEModel::init_action_head_from_embedding() {
  action_head.weight.value = bank.action.value.transpose();
  action_head.bias.value.setZero();
}

std::pair<ad::Var, ad::Var> SeqAEModel::heads(ad::Tape& tape, std::span<const Action> events, std::int64_t origin,
                                              Rng* rng) const {
  auto h = encoder.encode(tape, embed_sequence(tape, bank, events, origin), rng);
  auto s = decoder.decode(tape, h, static_cast<int>(events.size()), rng);
  return {ad::relu(action_head(tape, s)), ad::relu(time_head(tape, s))};
}

SeqAEModel::Reconstruction SeqAEModel::reconstruct(const Shift& shift) const {
  if (shift.events.empty()) throw ContractViolation("reconstruct_shift: empty shift");
  const auto events =
      most_recent(std::span<const Action>(shift.events), static_cast<std::size_t>(config.encoder.max_steps));
  ad::Tape tape;
  const auto [a, t] = heads(tape, events, shift.start_time, nullptr);
  return {log_softmax_cols(a.value()), log_softmax_cols(t.value())};
}

ad::Var SeqAEModel::loss(ad::Tape& tape, const Shift& shift, Rng* rng) const {
  if (shift.events.empty()) throw ContractViolation("reconstruct_shift: empty shift");
  const auto events =
      most_recent(std::span<const Action>(shift.events), static_cast<std::size_t>(config.encoder.max_steps));
  const auto [a, t] = heads(tape, events, shift.start_time, rng);
  std::vector<int> codes;
  for (const auto& e : events) codes.push_back(e.code);
  const std::vector<double> w(events.size(), 1.0 / static_cast<double>(events.size()));
  return ad::add(ad::softmax_nll(a, std::move(codes), w), ad::softmax_nll(t, time_bin_targets(events, bins), w));
}

std::vector<NamedParameter> SeqAEModel::parameters() {
  std::vector<NamedParameter> out;
  bank.collect(out, "bank");
  encoder.collect(out, "encoder");
  decoder.collect(out, "decoder");
  action_head.collect(out, "action_head");
  time_head.collect(out, "time_head");
  return out;
}

void SeqAEModel::save(const std::filesystem::path& path) {
  Checkpoint ck;
  ck.config = "vocab_size=" + std::to_string(bank.vocab_size()) + "\n" + config.echo();
  ck.put(parameters());
  Matrix edges(1, static_cast<Eigen::Index>(bins.edges.size()));
  for (std::size_t i = 0; i < bins.edges.size(); ++i) edges(0, static_cast<Eigen::Index>(i)) = bins.edges[i];
  ck.blobs["time_bins.edges"] = edges;
  ck.save(path);
}

SeqAEModel SeqAEModel::load(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::load(path);
  const auto pos = ck.config.find("vocab_size=");
  const auto it = ck.blobs.find("time_bins.edges");
  if (pos == std::string::npos || it == ck.blobs.end()) throw Error("not an autoencoder checkpoint: " + path.string());
  TimeBins bins;
  bins.edges.assign(it->second.data(), it->second.data() + it->second.size());
  Rng rng(0);
  SeqAEModel model(ModelConfig::from_echo(ck.config), std::stoi(ck.config.substr(pos + 11)), std::move(bins), rng);
  ck.get(model.parameters());
  return model;
}

SeqAEResult pretrain_unsupervised(std::span<const MonthRecord* const> months, const ModelConfig& model_config,
                                  int vocab_size, const SeqAEConfig& config, const ActionEmbedding* pretrained_actions) {
  std::vector<const Shift*> shifts;
  for (const auto* m : months)
    for (const auto& s : m->shifts) shifts.push_back(&s);
  if (shifts.empty()) throw ValidationError("autoencoder pre-training needs at least one shift");

  Rng rng(config.seed);
  TimeBins bins = TimeBins::fit(corpus_log_intervals(months, model_config.encoder.max_steps), config.time_bins);
  SeqAEResult result{SeqAEModel(model_config, vocab_size, std::move(bins), rng), {}};
  SeqAEModel& model = result.model;
  if (pretrained_actions) {
    model.bank.set_action_weights(*pretrained_actions);
    model.init_action_head_from_embedding();
  }

  const auto params = model.parameters();
  Adam adam({config.learning_rate, 0.9, 0.999, 1e-8, config.clip_norm});
  const std::size_t batch = static_cast<std::size_t>(std::max(config.batch_shifts, 1));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(shifts.begin(), shifts.end(), rng);
    std::size_t n = shifts.size();
    if (config.max_shifts_per_epoch > 0) n = std::min(n, config.max_shifts_per_epoch);
    double total = 0.0;
    for (std::size_t b0 = 0; b0 < n; b0 += batch) {
      const std::size_t nb = std::min(batch, n - b0);
      zero_grad(params);
      for (std::size_t j = 0; j < nb; ++j) {
        ad::Tape tape;
        auto l = model.loss(tape, *shifts[b0 + j], &rng);
        tape.backward(l);
        collect_grads(tape, params, 1.0 / static_cast<double>(nb));
        total += l.scalar();
      }
      adam.step(params);
    }
    result.epoch_loss.push_back(total / static_cast<double>(n));
  }
  return result;
}

std::pair<double, double> reconstruction_nll(const SeqAEModel& model, std::span<const MonthRecord* const> months) {
  double action = 0.0, time = 0.0;
  std::size_t steps = 0;
  for (const auto* m : months)
    for (const auto& s : m->shifts) {
      const auto events =
          most_recent(std::span<const Action>(s.events), static_cast<std::size_t>(model.config.encoder.max_steps));
      const auto r = model.reconstruct(s);
      const auto bins = time_bin_targets(events, model.bins);
      for (std::size_t i = 0; i < events.size(); ++i) {
        action -= r.action_log_prob(events[i].code, static_cast<Eigen::Index>(i));
        time -= r.time_log_prob(bins[i], static_cast<Eigen::Index>(i));
      }
      steps += events.size();
    }
  if (steps == 0) throw ValidationError("reconstruction_nll: no events");
  return {action / static_cast<double>(steps), time / static_cast<double>(steps)};
}

void transfer_weights(const SeqAEModel& source, HiPALModel& target) {
  if (source.config.encoder != target.config.encoder)
    throw ValidationError("autoencoder and model low-level encoder configs differ");
  if (source.config.embed.action_dim != target.config.embed.action_dim ||
      source.config.embed.time_dim != target.config.embed.time_dim ||
      source.config.embed.join != target.config.embed.join || source.bank.vocab_size() != target.vocab_size())
    throw ValidationError("autoencoder and model embedding configs differ");
  target.encoder = source.encoder;
  target.bank = source.bank;
}

}  // namespace hipal
