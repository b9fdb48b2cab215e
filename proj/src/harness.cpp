#include "hipal/harness.hpp"

#include "hipal/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace hipal {

// ---------------------------------------------------------------------------
// ConfigMap
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigMap ConfigMap::parse(std::istream& in) {
  ConfigMap cfg;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(n, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(n, "empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

ConfigMap ConfigMap::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  try {
    return parse(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

void ConfigMap::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty())
    throw ValidationError("expected key=value, got '" + assignment + "'");
  values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

void ConfigMap::merge(const ConfigMap& overrides) {
  for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

std::string ConfigMap::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

namespace {

template <typename T, typename F>
T convert(const std::string& key, const std::string& value, F f) {
  try {
    std::size_t pos = 0;
    T v = f(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': cannot parse '" + value + "'");
  }
}

}  // namespace

int ConfigMap::get_int(const std::string& key, int fallback) const {
  if (!has(key)) return fallback;
  return convert<int>(key, get(key, ""), [](const std::string& s, std::size_t* p) { return std::stoi(s, p); });
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  return convert<double>(key, get(key, ""), [](const std::string& s, std::size_t* p) { return std::stod(s, p); });
}

std::uint64_t ConfigMap::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  return convert<std::uint64_t>(key, get(key, ""),
                                [](const std::string& s, std::size_t* p) { return std::stoull(s, p); });
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key, "");
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ValidationError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<int> ConfigMap::get_ints(const std::string& key, const std::vector<int>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<int> out;
  std::stringstream ss(get(key, ""));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(convert<int>(key, item, [](const std::string& s, std::size_t* p) { return std::stoi(s, p); }));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation splits
// ---------------------------------------------------------------------------

void CVConfig::validate() const {
  if (folds < 2) throw ValidationError("folds must be >= 2");
  if (rounds < 1) throw ValidationError("rounds must be >= 1");
  if (val_fraction <= 0.0 || val_fraction >= 1.0) throw ValidationError("val_fraction must be in (0, 1)");
}

std::vector<Split> grouped_cv_split(const Dataset& ds, const CVConfig& config) {
  config.validate();
  std::vector<std::string> ids;
  {
    std::set<std::string> seen;
    for (const auto* m : ds.labeled())
      if (seen.insert(m->participant_id).second) ids.push_back(m->participant_id);
  }
  std::sort(ids.begin(), ids.end());
  if (static_cast<int>(ids.size()) < config.folds)
    throw ValidationError("grouped CV needs at least " + std::to_string(config.folds) +
                          " labeled participants, found " + std::to_string(ids.size()));
  std::vector<Split> out;
  for (int r = 0; r < config.rounds; ++r) {
    std::seed_seq seq{config.seed, static_cast<std::uint64_t>(r), std::uint64_t{0xc5}};
    Rng rng(seq);
    std::vector<std::string> order = ids;
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n = order.size();
    for (int f = 0; f < config.folds; ++f) {
      const std::size_t lo = n * static_cast<std::size_t>(f) / static_cast<std::size_t>(config.folds);
      const std::size_t hi = n * static_cast<std::size_t>(f + 1) / static_cast<std::size_t>(config.folds);
      Split s;
      s.round = r;
      s.fold = f;
      std::vector<std::string> rest;
      for (std::size_t i = 0; i < n; ++i) (i >= lo && i < hi ? s.test : rest).push_back(order[i]);
      std::shuffle(rest.begin(), rest.end(), rng);
      std::size_t n_val = static_cast<std::size_t>(std::lround(config.val_fraction * static_cast<double>(rest.size())));
      if (rest.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, rest.size() - 1);
      else n_val = 0;
      s.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
      s.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
      std::sort(s.train.begin(), s.train.end());
      std::sort(s.val.begin(), s.val.end());
      std::sort(s.test.begin(), s.test.end());
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<const MonthRecord*> labeled_months_of(const Dataset& ds, const std::vector<std::string>& ids) {
  const std::set<std::string> want(ids.begin(), ids.end());
  std::vector<const MonthRecord*> out;
  for (const auto* m : ds.labeled())
    if (want.count(m->participant_id)) out.push_back(m);
  return out;
}

// ---------------------------------------------------------------------------
// Recipes and experiment configuration
// ---------------------------------------------------------------------------

std::vector<std::string> known_recipes() {
  return {"hipal-f",        "hipal-c",        "hipal-r",        "semi-hipal-f",   "semi-hipal-c",
          "semi-hipal-r",   "single-level-f", "single-level-c", "single-level-r", "baseline-features"};
}

bool is_known_recipe(const std::string& recipe) {
  const auto all = known_recipes();
  return std::find(all.begin(), all.end(), recipe) != all.end();
}

Recipe Recipe::parse(const std::string& name) {
  if (!is_known_recipe(name)) throw ValidationError("unknown recipe '" + name + "'");
  Recipe r;
  if (name == "baseline-features") {
    r.kind = Kind::baseline_features;
    return r;
  }
  const std::string suffix = name.substr(name.size() - 1);
  r.arch = parse_arch(suffix);
  if (name.rfind("semi-", 0) == 0) r.kind = Kind::semi_hipal;
  else if (name.rfind("single-level-", 0) == 0) r.kind = Kind::single_level;
  else r.kind = Kind::hipal;
  return r;
}

ModelConfig ExperimentConfig::model_config(const Recipe& recipe) const {
  ModelConfig mc;
  mc.embed = embed;
  mc.lstm_hidden = lstm_hidden;
  mc.mlp_hidden = mlp_hidden;
  mc.dropout = dropout;
  mc.max_shifts = max_shifts;
  EncoderConfig& e = mc.encoder;
  e.arch = recipe.arch;
  e.input_dim = embed.joint_dim();
  e.dropout = dropout;
  e.h_dim = h_dim;
  e.dilations.clear();
  const bool single = recipe.kind == Recipe::Kind::single_level;
  if (recipe.arch == Arch::fcn) {
    e.filters = fcn_filters;
    e.kernels = fcn_kernels;
    if (single) {
      e.filters.insert(e.filters.end(), fcn_filters.begin(), fcn_filters.end());
      e.kernels.insert(e.kernels.end(), fcn_kernels.begin(), fcn_kernels.end());
    }
    e.n_layers = static_cast<int>(e.filters.size());
  } else {
    e.filters = {tcn_filters};
    e.kernels.clear();
    e.n_layers = single ? single_layers : tcn_layers;
    e.kernel = single ? single_kernel : tcn_kernel;
    e.dilation_base = single ? single_dilation_base : tcn_dilation_base;
  }
  e.max_steps = single ? single_max_steps : max_steps;
  mc.validate();
  return mc;
}

void ExperimentConfig::set_seed(std::uint64_t seed) {
  train.seed = seed;
  seqae.seed = seed + 1;
  skipgram.seed = seed + 2;
  cv.seed = seed;
}

void ExperimentConfig::apply(const ConfigMap& c) {
  using Handler = std::function<void(const std::string&)>;
  auto i = [&c](int& dst) { return Handler([&c, &dst](const std::string& k) { dst = c.get_int(k, dst); }); };
  auto d = [&c](double& dst) { return Handler([&c, &dst](const std::string& k) { dst = c.get_double(k, dst); }); };
  auto b = [&c](bool& dst) { return Handler([&c, &dst](const std::string& k) { dst = c.get_bool(k, dst); }); };
  auto v = [&c](std::vector<int>& dst) {
    return Handler([&c, &dst](const std::string& k) { dst = c.get_ints(k, dst); });
  };
  std::size_t max_centers = skipgram.max_centers_per_epoch, ae_max = seqae.max_shifts_per_epoch;
  int max_centers_i = static_cast<int>(max_centers), ae_max_i = static_cast<int>(ae_max);
  int tz_hours = tz_offset_seconds / 3600;
  const std::map<std::string, Handler> handlers{
      {"action_dim", i(embed.action_dim)},
      {"time_dim", i(embed.time_dim)},
      {"join", Handler([&](const std::string& k) {
         const std::string s = c.get(k, "concat");
         if (s != "concat" && s != "add") throw ValidationError("join must be concat or add");
         embed.join = s == "add" ? JoinMode::add : JoinMode::concat;
       })},
      {"tcn_layers", i(tcn_layers)},
      {"tcn_filters", i(tcn_filters)},
      {"tcn_kernel", i(tcn_kernel)},
      {"tcn_dilation_base", i(tcn_dilation_base)},
      {"h_dim", i(h_dim)},
      {"fcn_filters", v(fcn_filters)},
      {"fcn_kernels", v(fcn_kernels)},
      {"dropout", d(dropout)},
      {"max_steps", i(max_steps)},
      {"single_layers", i(single_layers)},
      {"single_kernel", i(single_kernel)},
      {"single_dilation_base", i(single_dilation_base)},
      {"single_max_steps", i(single_max_steps)},
      {"lstm_hidden", i(lstm_hidden)},
      {"mlp_hidden", i(mlp_hidden)},
      {"max_shifts", i(max_shifts)},
      {"lambda", d(train.lambda)},
      {"tail_max_days", i(train.tail_max_days)},
      {"tail_rho", d(train.tail_rho)},
      {"tail_drop", b(train.tail_drop)},
      {"learning_rate", d(train.learning_rate)},
      {"batch_size", i(train.batch_size)},
      {"epochs", i(train.epochs)},
      {"clip_norm", d(train.clip_norm)},
      {"select_best", b(train.select_best)},
      {"ae_epochs", i(seqae.epochs)},
      {"ae_batch_shifts", i(seqae.batch_shifts)},
      {"ae_learning_rate", d(seqae.learning_rate)},
      {"ae_max_shifts_per_epoch", i(ae_max_i)},
      {"time_bins", i(seqae.time_bins)},
      {"skipgram", b(pretrain_actions)},
      {"sg_window", i(skipgram.window)},
      {"sg_epochs", i(skipgram.epochs)},
      {"sg_batch", i(skipgram.batch)},
      {"sg_learning_rate", d(skipgram.learning_rate)},
      {"sg_max_centers_per_epoch", i(max_centers_i)},
      {"folds", i(cv.folds)},
      {"rounds", i(cv.rounds)},
      {"val_fraction", d(cv.val_fraction)},
      {"max_splits", i(max_splits)},
      {"timing", b(timing)},
      {"tz_offset_hours", i(tz_hours)},
      {"seed", Handler([&](const std::string& k) { set_seed(c.get_u64(k, train.seed)); })},
  };
  for (const auto& [key, value] : c.values()) {
    const auto it = handlers.find(key);
    if (it == handlers.end()) throw ValidationError("unknown config key '" + key + "'");
    it->second(key);
  }
  if (max_centers_i < 0 || ae_max_i < 0) throw ValidationError("per-epoch caps must be >= 0");
  skipgram.max_centers_per_epoch = static_cast<std::size_t>(max_centers_i);
  seqae.max_shifts_per_epoch = static_cast<std::size_t>(ae_max_i);
  tz_offset_seconds = tz_hours * 3600;
  skipgram.dim = embed.action_dim;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  s.count = xs.size();
  if (xs.empty()) return s;
  std::vector<double> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  if (sorted.size() > 1) {
    double ss = 0.0;
    for (double x : sorted) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(sorted.size() - 1));
  }
  return s;
}

std::string fmt(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace

MetricSummary MetricsReport::auroc() const {
  std::vector<double> xs;
  for (const auto& f : folds)
    if (f.metrics.auroc) xs.push_back(*f.metrics.auroc);
  return summarize(xs);
}

MetricSummary MetricsReport::auprc() const {
  std::vector<double> xs;
  for (const auto& f : folds)
    if (f.metrics.auprc) xs.push_back(*f.metrics.auprc);
  return summarize(xs);
}

MetricSummary MetricsReport::accuracy() const {
  std::vector<double> xs;
  for (const auto& f : folds) xs.push_back(f.metrics.accuracy);
  return summarize(xs);
}

MetricSummary MetricsReport::epoch_seconds() const {
  std::vector<double> xs;
  for (const auto& f : folds)
    if (f.epoch_seconds) xs.push_back(*f.epoch_seconds);
  return summarize(xs);
}

void MetricsReport::write_csv(std::ostream& out, bool with_timing) const {
  out << "recipe,round,fold,auroc,auprc,accuracy,epoch_seconds\n";
  for (const auto& f : folds)
    out << f.recipe << ',' << f.round << ',' << f.fold << ',' << fmt(f.metrics.auroc) << ',' << fmt(f.metrics.auprc)
        << ',' << fmt(f.metrics.accuracy) << ',' << (with_timing ? fmt(f.epoch_seconds) : std::string()) << '\n';
  if (folds.empty()) return;
  const std::string recipe = folds.front().recipe;
  const auto a = auroc(), p = auprc(), c = accuracy(), t = epoch_seconds();
  const bool time_row = with_timing && t.count > 0;
  out << recipe << ",mean,," << fmt(a.mean) << ',' << fmt(p.mean) << ',' << fmt(c.mean) << ','
      << (time_row ? fmt(t.mean) : std::string()) << '\n';
  out << recipe << ",std,," << fmt(a.stddev) << ',' << fmt(p.stddev) << ',' << fmt(c.stddev) << ','
      << (time_row ? fmt(t.stddev) : std::string()) << '\n';
}

// ---------------------------------------------------------------------------
// Training recipes
// ---------------------------------------------------------------------------

namespace {

/// Logistic regression on hand-crafted features behind the month-classifier
/// interface.
class FeatureClassifier : public MonthClassifier {
 public:
  FeatureClassifier(FeatureSpec spec, LogisticRegression lr) : spec_(std::move(spec)), lr_(std::move(lr)) {}
  MonthForward forward(ad::Tape& tape, const MonthRecord& month, Rng*) const override {
    const Vector f = baseline_features(month, spec_);
    const double p = std::clamp(lr_.predict(f.transpose())(0), 1e-15, 1.0 - 1e-15);
    Matrix logits(2, 1);
    logits << 0.0, std::log(p / (1.0 - p));
    return {tape.constant(std::move(logits)), std::nullopt};
  }
  std::vector<NamedParameter> parameters() override { return {}; }

 private:
  FeatureSpec spec_;
  LogisticRegression lr_;
};

std::vector<int> labels_of(std::span<const MonthRecord* const> months) {
  std::vector<int> y;
  for (const auto* m : months) y.push_back(m->label && *m->label ? 1 : 0);
  return y;
}

FeatureSpec feature_spec(const Vocabulary* vocabulary, int tz_offset_seconds) {
  if (vocabulary && vocabulary->size() > 0) return FeatureSpec::from_vocabulary(*vocabulary, tz_offset_seconds);
  FeatureSpec spec;
  spec.tz_offset_seconds = tz_offset_seconds;
  spec.category_names = {"all"};
  return spec;
}

std::unique_ptr<MonthClassifier> fit_feature_classifier(std::span<const MonthRecord* const> train,
                                                        const FeatureSpec& spec) {
  Matrix x(static_cast<Eigen::Index>(train.size()), static_cast<Eigen::Index>(spec.names().size()));
  for (std::size_t i = 0; i < train.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = baseline_features(*train[i], spec).transpose();
  LogisticRegression lr;
  lr.fit(x, labels_of(train));
  return std::make_unique<FeatureClassifier>(spec, std::move(lr));
}

}  // namespace

Pretrained pretrain_for_recipe(const Dataset& ds, const Recipe& recipe, const ExperimentConfig& config) {
  Pretrained out;
  if (recipe.kind == Recipe::Kind::baseline_features) return out;
  const auto all = ds.all();
  if (config.pretrain_actions && config.skipgram.epochs > 0) {
    SkipGramConfig sg = config.skipgram;
    sg.dim = config.embed.action_dim;
    out.actions = pretrain_skipgram(shift_corpus(all), ds.vocab_size, sg).embedding;
  }
  if (recipe.kind == Recipe::Kind::semi_hipal) {
    const ModelConfig mc = config.model_config(recipe);
    out.autoencoder = pretrain_unsupervised(all, mc, ds.vocab_size, config.seqae, out.actions ? &*out.actions : nullptr)
                          .model;
  }
  return out;
}

TrainedModel train_recipe(const Recipe& recipe, std::span<const MonthRecord* const> train,
                          std::span<const MonthRecord* const> validation, const ExperimentConfig& config,
                          int vocab_size, const Pretrained& pretrained) {
  TrainedModel out;
  if (recipe.kind == Recipe::Kind::baseline_features) {
    std::vector<const MonthRecord*> all(train.begin(), train.end());
    all.insert(all.end(), validation.begin(), validation.end());
    out.model = fit_feature_classifier(all, feature_spec(nullptr, config.tz_offset_seconds));
    return out;
  }
  const ModelConfig mc = config.model_config(recipe);
  Rng rng(config.train.seed);
  if (recipe.kind == Recipe::Kind::single_level) {
    auto model = std::make_unique<SingleLevelModel>(mc, vocab_size, rng);
    if (pretrained.actions) model->bank.set_action_weights(*pretrained.actions);
    out.history = train_model(*model, train, validation, config.train);
    out.model = std::move(model);
    return out;
  }
  auto model = std::make_unique<HiPALModel>(mc, vocab_size, rng);
  if (pretrained.actions) model->bank.set_action_weights(*pretrained.actions);
  if (recipe.kind == Recipe::Kind::semi_hipal) {
    if (!pretrained.autoencoder) throw ContractViolation("semi-supervised recipe without a pre-trained autoencoder");
    transfer_weights(*pretrained.autoencoder, *model);
  }
  out.history = train_model(*model, train, validation, config.train);
  out.model = std::move(model);
  return out;
}

MetricsReport run_cv(const Dataset& ds, const std::string& recipe_name, const ExperimentConfig& config,
                     const Vocabulary* vocabulary) {
  const Recipe recipe = Recipe::parse(recipe_name);
  if (ds.labeled().empty()) throw ValidationError("dataset has no labeled months");
  auto splits = grouped_cv_split(ds, config.cv);
  if (config.max_splits > 0 && static_cast<std::size_t>(config.max_splits) < splits.size())
    splits.resize(static_cast<std::size_t>(config.max_splits));
  const Pretrained pretrained = pretrain_for_recipe(ds, recipe, config);
  const FeatureSpec spec = feature_spec(vocabulary, config.tz_offset_seconds);

  MetricsReport report;
  for (const auto& split : splits) {
    const auto train = labeled_months_of(ds, split.train);
    const auto val = labeled_months_of(ds, split.val);
    const auto test = labeled_months_of(ds, split.test);
    FoldResult r;
    r.recipe = recipe_name;
    r.round = split.round;
    r.fold = split.fold;
    r.test_months = test.size();
    std::unique_ptr<MonthClassifier> model;
    if (recipe.kind == Recipe::Kind::baseline_features) {
      std::vector<const MonthRecord*> fit(train.begin(), train.end());
      fit.insert(fit.end(), val.begin(), val.end());
      model = fit_feature_classifier(fit, spec);
    } else {
      ExperimentConfig cfg = config;
      cfg.train.seed = config.train.seed * 1000003ULL + static_cast<std::uint64_t>(split.round) * 101ULL +
                       static_cast<std::uint64_t>(split.fold);
      TrainedModel trained = train_recipe(recipe, train, val, cfg, ds.vocab_size, pretrained);
      std::vector<double> secs;
      for (std::size_t e = 1; e < trained.history.epochs.size(); ++e) secs.push_back(trained.history.epochs[e].seconds);
      if (secs.empty() && !trained.history.epochs.empty()) secs.push_back(trained.history.epochs[0].seconds);
      if (!secs.empty()) r.epoch_seconds = std::accumulate(secs.begin(), secs.end(), 0.0) / static_cast<double>(secs.size());
      model = std::move(trained.model);
    }
    r.metrics = compute_metrics(labels_of(test), predict_scores(*model, test));
    report.folds.push_back(std::move(r));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Offsets and risk maps
// ---------------------------------------------------------------------------

std::vector<OffsetResult> offset_evaluation(const MonthClassifier& model, std::span<const MonthRecord* const> months,
                                            const std::vector<int>& offsets) {
  const auto y = labels_of(months);
  std::vector<OffsetResult> out;
  for (int o : offsets) {
    if (o < 0) throw ValidationError("offsets must be >= 0");
    std::vector<double> scores;
    for (const auto* m : months) scores.push_back(model.predict(apply_tail_drop(*m, o)).gamma);
    out.push_back({o, auroc(y, scores)});
  }
  return out;
}

RiskMap build_risk_map(const HiPALModel& model, const Dataset& ds, const std::string& pid) {
  std::vector<const MonthRecord*> months;
  for (const auto& m : ds.months)
    if (m.participant_id == pid) months.push_back(&m);
  if (months.empty()) throw ValidationError("unknown participant '" + pid + "'");
  std::sort(months.begin(), months.end(),
            [](const MonthRecord* a, const MonthRecord* b) { return a->month_index < b->month_index; });
  RiskMap map;
  map.participant_id = pid;
  std::vector<MonthPrediction> preds;
  for (const auto* m : months) {
    preds.push_back(model.predict(*m));
    map.width = std::max(map.width, static_cast<int>(preds.back().daily_risks.size()));
  }
  for (std::size_t i = 0; i < months.size(); ++i) {
    RiskMapRow row;
    row.month_index = months[i]->month_index;
    row.gamma = preds[i].gamma;
    row.cells.assign(static_cast<std::size_t>(map.width), std::nullopt);
    const auto& a = preds[i].daily_risks;
    const std::size_t pad = static_cast<std::size_t>(map.width) - a.size();
    for (std::size_t k = 0; k < a.size(); ++k) row.cells[pad + k] = a[k];
    map.rows.push_back(std::move(row));
  }
  return map;
}

void RiskMap::write_csv(std::ostream& out) const {
  out << "month_index,gamma";
  for (int k = 1; k <= width; ++k) out << ",s" << k;
  out << '\n';
  for (const auto& r : rows) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", r.gamma);
    out << r.month_index << ',' << buf;
    for (const auto& c : r.cells) {
      out << ',';
      if (c) {
        std::snprintf(buf, sizeof buf, "%.17g", *c);
        out << buf;
      }
    }
    out << '\n';
  }
}

void RiskMap::write_ppm(const std::filesystem::path& path, int cell) const {
  if (cell < 1) throw ValidationError("cell size must be >= 1");
  const int w = std::max(width, 1) * cell, h = std::max<int>(static_cast<int>(rows.size()), 1) * cell;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << "P6\n" << w << ' ' << h << "\n255\n";
  for (int py = 0; py < h; ++py)
    for (int px = 0; px < w; ++px) {
      const std::size_t r = static_cast<std::size_t>(py / cell), c = static_cast<std::size_t>(px / cell);
      unsigned char rgb[3] = {160, 160, 160};
      if (r < rows.size() && c < rows[r].cells.size() && rows[r].cells[c]) {
        const double v = std::clamp(*rows[r].cells[c], 0.0, 1.0);
        const auto fade = static_cast<unsigned char>(std::lround(255.0 * (1.0 - v)));
        rgb[0] = 255;
        rgb[1] = fade;
        rgb[2] = fade;
      }
      os.write(reinterpret_cast<const char*>(rgb), 3);
    }
}

// ---------------------------------------------------------------------------
// Baseline features
// ---------------------------------------------------------------------------

FeatureSpec FeatureSpec::from_vocabulary(const Vocabulary& vocab, int tz_offset_seconds) {
  FeatureSpec spec;
  spec.category_names = vocab.categories();
  spec.category_of_code = vocab.category_of_code();
  spec.n_categories = static_cast<int>(spec.category_names.size());
  spec.tz_offset_seconds = tz_offset_seconds;
  return spec;
}

std::vector<std::string> FeatureSpec::names() const {
  std::vector<std::string> n{"total_hours", "after_hours", "shifts", "events", "events_per_shift", "hours_per_shift"};
  for (int c = 0; c < n_categories; ++c) {
    const std::string name =
        c < static_cast<int>(category_names.size()) ? category_names[static_cast<std::size_t>(c)] : std::to_string(c);
    n.push_back(name + "_count_per_shift");
    n.push_back(name + "_hours_per_shift");
  }
  for (const char* s : {"dt_mean", "dt_min", "dt_max", "dt_std", "dt_skewness", "dt_kurtosis", "dt_entropy",
                        "dt_energy", "dt_autocorr1", "dt_slope", "dt_degenerate"})
    n.push_back(s);
  return n;
}

Vector baseline_features(const MonthRecord& month, const FeatureSpec& spec) {
  const int n_cat = std::max(spec.n_categories, 1);
  auto category = [&](int code) {
    if (spec.category_of_code.empty()) return 0;
    if (code < 0 || code >= static_cast<int>(spec.category_of_code.size()))
      throw ValidationError("action code outside the feature vocabulary");
    return spec.category_of_code[static_cast<std::size_t>(code)];
  };
  auto after_hours = [&](std::int64_t t) {
    const std::int64_t local = ((t + spec.tz_offset_seconds) % 86400 + 86400) % 86400;
    const std::int64_t hour = local / 3600;
    return hour < 8 || hour >= 18;
  };

  const double shifts = static_cast<double>(month.shifts.size());
  const double per = std::max(shifts, 1.0);
  double total = 0.0, after = 0.0, events = 0.0;
  std::vector<double> cat_count(static_cast<std::size_t>(n_cat)), cat_time(static_cast<std::size_t>(n_cat));
  std::vector<double> dts;
  std::vector<std::size_t> pair_first;  // dts[i], dts[i + 1] inside one shift
  for (const auto& s : month.shifts) {
    total += static_cast<double>(s.end_time - s.start_time);
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      events += 1.0;
      cat_count[static_cast<std::size_t>(category(s.events[i].code))] += 1.0;
      if (i == 0) continue;
      const double dt = static_cast<double>(s.events[i].timestamp - s.events[i - 1].timestamp);
      if (i >= 2) pair_first.push_back(dts.size() - 1);
      dts.push_back(dt);
      cat_time[static_cast<std::size_t>(category(s.events[i - 1].code))] += dt;
      if (after_hours(s.events[i - 1].timestamp)) after += dt;
    }
  }

  std::vector<double> f{total / 3600.0, after / 3600.0, shifts, events, events / per, total / 3600.0 / per};
  for (int c = 0; c < n_cat; ++c) {
    f.push_back(cat_count[static_cast<std::size_t>(c)] / per);
    f.push_back(cat_time[static_cast<std::size_t>(c)] / 3600.0 / per);
  }

  const std::size_t m = dts.size();
  double mean = 0, mn = 0, mx = 0, sd = 0, skew = 0, kurt = 0, entropy = 0, energy = 0, ac = 0, slope = 0;
  bool degenerate = m < 2;
  if (m >= 1) {
    mean = std::accumulate(dts.begin(), dts.end(), 0.0) / static_cast<double>(m);
    mn = *std::min_element(dts.begin(), dts.end());
    mx = *std::max_element(dts.begin(), dts.end());
    double m2 = 0, m3 = 0, m4 = 0;
    for (double x : dts) {
      const double d = x - mean;
      m2 += d * d;
      m3 += d * d * d;
      m4 += d * d * d * d;
      energy += x * x;
    }
    m2 /= static_cast<double>(m);
    m3 /= static_cast<double>(m);
    m4 /= static_cast<double>(m);
    if (m2 > 0.0) {
      sd = std::sqrt(m2);
      skew = m3 / std::pow(m2, 1.5);
      kurt = m4 / (m2 * m2) - 3.0;
      double num = 0.0;
      for (std::size_t i : pair_first) num += (dts[i] - mean) * (dts[i + 1] - mean);
      ac = num / (m2 * static_cast<double>(m));
      const double xbar = (static_cast<double>(m) - 1.0) / 2.0;
      double sxy = 0, sxx = 0;
      for (std::size_t i = 0; i < m; ++i) {
        const double dx = static_cast<double>(i) - xbar;
        sxy += dx * (dts[i] - mean);
        sxx += dx * dx;
      }
      slope = sxx > 0 ? sxy / sxx : 0.0;
    } else {
      degenerate = true;
    }
    const int bins = std::max(spec.histogram_bins, 1);
    const double hi = std::log1p(static_cast<double>(spec.gap_seconds));
    std::vector<double> hist(static_cast<std::size_t>(bins));
    for (double x : dts) {
      const int b = std::min(bins - 1, static_cast<int>(std::log1p(x) / hi * bins));
      hist[static_cast<std::size_t>(std::max(b, 0))] += 1.0;
    }
    for (double h : hist)
      if (h > 0) {
        const double p = h / static_cast<double>(m);
        entropy -= p * std::log(p);
      }
  }
  if (m < 2) mean = mn = mx = energy = entropy = 0.0;
  for (double x : {mean, mn, mx, sd, skew, kurt, entropy, energy, ac, slope, degenerate ? 1.0 : 0.0}) f.push_back(x);
  return Eigen::Map<const Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
}

void write_feature_matrix(std::ostream& out, const FeatureSpec& spec, std::span<const MonthRecord* const> months) {
  out << "participant_id,month_index,label";
  for (const auto& n : spec.names()) out << ',' << n;
  out << '\n';
  char buf[40];
  for (const auto* m : months) {
    out << m->participant_id << ',' << m->month_index << ',' << (m->label ? (*m->label ? "1" : "0") : "");
    const Vector f = baseline_features(*m, spec);
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", f(i));
      out << ',' << buf;
    }
    out << '\n';
  }
}

void LogisticRegression::fit(const Matrix& x, std::span<const int> y) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (n == 0 || static_cast<std::size_t>(n) != y.size()) throw ValidationError("logistic regression: bad input");
  mean_ = x.colwise().mean().transpose();
  scale_ = ((x.rowwise() - mean_.transpose()).array().square().colwise().sum() / static_cast<double>(n))
               .sqrt()
               .transpose()
               .matrix();
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(scale_(j) > 1e-12)) scale_(j) = 1.0;
  Matrix z(n, p + 1);
  z.leftCols(p) = (x.rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();
  z.col(p).setOnes();
  Vector yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv(i) = y[static_cast<std::size_t>(i)];
  Vector w = Vector::Zero(p + 1);
  Vector reg = Vector::Constant(p + 1, l2_);
  reg(p) = 0.0;
  for (int iter = 0; iter < 50; ++iter) {
    const Vector prob = (1.0 / (1.0 + (-(z * w)).array().exp())).matrix();
    const Vector grad = z.transpose() * (prob - yv) + reg.cwiseProduct(w);
    const Vector s = prob.cwiseProduct((Vector::Ones(n) - prob));
    Matrix hess = z.transpose() * s.asDiagonal() * z;
    hess.diagonal() += reg + Vector::Constant(p + 1, 1e-9);
    const Vector step = hess.ldlt().solve(grad);
    w -= step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-10) break;
  }
  weights_ = w.head(p);
  bias_ = w(p);
}

Vector LogisticRegression::predict(const Matrix& x) const {
  const Matrix z = (x.rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();
  return (1.0 / (1.0 + (-((z * weights_).array() + bias_)).exp())).matrix();
}

}  // namespace hipal
