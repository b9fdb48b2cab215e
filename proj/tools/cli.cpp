#include "cli.hpp"

#include "hipal/error.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>

namespace hipal::cli {
namespace {

const std::set<std::string>& generator_keys() {
  static const std::set<std::string> keys{
      "participants", "months",          "vocab_size",      "categories",       "mean_shifts",
      "max_shifts_per_month", "mean_events", "max_events",  "interval_log_mean", "interval_log_sd",
      "signal_strength", "label_bias",   "unlabeled_fraction", "participant_sd", "month_sd",
      "intermittent",  "tail_jitter_days", "start_epoch"};
  return keys;
}

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_file, "key=value configuration file")->check(CLI::ExistingFile);
  sub->add_option("--set", c.sets, "override one configuration key (key=value), repeatable");
  sub->add_option("--seed", c.seed, "master random seed");
}

ConfigMap load_config(const Common& c) {
  ConfigMap cfg;
  if (!c.config_file.empty()) cfg = ConfigMap::read(c.config_file);
  for (const auto& s : c.sets) cfg.set(s);
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  return cfg;
}

ExperimentConfig experiment_config(const ConfigMap& cfg) {
  ExperimentConfig e;
  e.apply(split_config(cfg).second);
  return e;
}

std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  return os;
}

std::vector<const MonthRecord*> require_labeled(const Dataset& ds, const std::string& verb) {
  auto months = ds.labeled();
  if (months.empty())
    throw ValidationError(verb + ": the dataset has no labeled months (burnout labels are missing)");
  return months;
}

/// Holds out val_fraction of the labeled participants for model selection.
std::pair<std::vector<const MonthRecord*>, std::vector<const MonthRecord*>> train_val_split(
    const Dataset& ds, const ExperimentConfig& cfg) {
  std::vector<std::string> ids;
  for (const auto* m : ds.labeled())
    if (std::find(ids.begin(), ids.end(), m->participant_id) == ids.end()) ids.push_back(m->participant_id);
  std::sort(ids.begin(), ids.end());
  Rng rng(cfg.cv.seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::lround(cfg.cv.val_fraction * static_cast<double>(ids.size())));
  if (ids.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, ids.size() - 1);
  else n_val = 0;
  const std::vector<std::string> val(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  const std::vector<std::string> train(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  return {labeled_months_of(ds, train), labeled_months_of(ds, val)};
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt(std::optional<double> v) { return v ? fmt(*v) : std::string(); }

}  // namespace

void apply_generator_config(const ConfigMap& c, GeneratorConfig& g) {
  for (const auto& [k, v] : c.values())
    if (!generator_keys().count(k) && k != "seed") throw ValidationError("unknown generator key '" + k + "'");
  g.n_participants = c.get_int("participants", g.n_participants);
  g.months_per_participant = c.get_int("months", g.months_per_participant);
  g.vocab_size = c.get_int("vocab_size", g.vocab_size);
  g.n_categories = c.get_int("categories", g.n_categories);
  g.mean_shifts_per_month = c.get_double("mean_shifts", g.mean_shifts_per_month);
  g.max_shifts_per_month = c.get_int("max_shifts_per_month", g.max_shifts_per_month);
  g.mean_events_per_shift = c.get_double("mean_events", g.mean_events_per_shift);
  g.max_events_per_shift = c.get_int("max_events", g.max_events_per_shift);
  g.interval_log_mean = c.get_double("interval_log_mean", g.interval_log_mean);
  g.interval_log_sd = c.get_double("interval_log_sd", g.interval_log_sd);
  g.signal_strength = c.get_double("signal_strength", g.signal_strength);
  g.label_bias = c.get_double("label_bias", g.label_bias);
  g.unlabeled_fraction = c.get_double("unlabeled_fraction", g.unlabeled_fraction);
  g.participant_workload_sd = c.get_double("participant_sd", g.participant_workload_sd);
  g.month_workload_sd = c.get_double("month_sd", g.month_workload_sd);
  g.intermittent = c.get_bool("intermittent", g.intermittent);
  g.tail_jitter_days = c.get_int("tail_jitter_days", g.tail_jitter_days);
  g.start_epoch = static_cast<std::int64_t>(c.get_u64("start_epoch", static_cast<std::uint64_t>(g.start_epoch)));
  g.seed = c.get_u64("seed", g.seed);
  g.validate();
}

std::pair<ConfigMap, ConfigMap> split_config(const ConfigMap& config) {
  ConfigMap gen, experiment;
  for (const auto& [k, v] : config.values()) {
    if (generator_keys().count(k) || k == "seed") gen.set(k, v);
    if (!generator_keys().count(k)) experiment.set(k, v);
  }
  return {gen, experiment};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical burnout prediction from activity logs", "hipal"};
  app.require_subcommand(1);
  std::function<void()> action;

  // synth
  Common c_synth;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, c_synth);
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->callback([&] {
    action = [&] {
      const ConfigMap cfg = load_config(c_synth);
      GeneratorConfig gen;
      const auto [gen_cfg, rest] = split_config(cfg);
      ExperimentConfig unused;
      unused.apply(rest);
      apply_generator_config(gen_cfg, gen);
      const GeneratedData data = generate_dataset(gen);
      write_generated(synth_out, data);
      out << "events=" << data.counts.events << " shifts=" << data.counts.shifts << " months=" << data.counts.months
          << " labeled=" << data.counts.labeled_months << " oracle_auroc=" << fmt(oracle_auroc(data.dataset, data.truth))
          << "\n";
    };
  });

  // ingest
  Common c_ingest;
  std::string events_path, surveys_path, vocab_path, ingest_out;
  std::int64_t gap = kDefaultGapSeconds;
  int vocab_size = 0;
  auto* ingest = app.add_subcommand("ingest", "parse events and surveys into a dataset");
  add_common(ingest, c_ingest);
  ingest->add_option("--events", events_path, "events file (.csv or .jsonl)")->required()->check(CLI::ExistingFile);
  ingest->add_option("--surveys", surveys_path, "survey windows CSV")->required()->check(CLI::ExistingFile);
  ingest->add_option("--vocab", vocab_path, "vocabulary CSV")->check(CLI::ExistingFile);
  ingest->add_option("--vocab-size", vocab_size, "action vocabulary size when no vocabulary file is given");
  ingest->add_option("--gap", gap, "idle seconds that separate shifts");
  ingest->add_option("--out", ingest_out, "output dataset (.jsonl)")->required();
  ingest->callback([&] {
    action = [&] {
      load_config(c_ingest);
      int vs = vocab_size;
      if (!vocab_path.empty()) vs = read_vocabulary(vocab_path).size();
      if (vs <= 0) throw ValidationError("ingest needs --vocab or --vocab-size");
      const auto events = read_events(events_path, vs);
      const auto surveys = read_surveys(surveys_path);
      const AssembleReport rep = assemble_dataset(events, surveys, gap, vs);
      save_dataset(ingest_out, rep.dataset);
      out << "months=" << rep.dataset.months.size() << " dropped_events=" << rep.dropped_events
          << " empty_windows=" << rep.empty_windows << "\n";
    };
  });

  // stats
  Common c_stats;
  std::string stats_dataset;
  auto* stats = app.add_subcommand("stats", "summary statistics of a dataset");
  add_common(stats, c_stats);
  stats->add_option("--dataset", stats_dataset, "dataset (.jsonl)")->required()->check(CLI::ExistingFile);
  stats->callback([&] {
    action = [&] {
      load_config(c_stats);
      write_stats(out, dataset_stats(load_dataset(stats_dataset)));
    };
  });

  // pretrain-embed
  Common c_emb;
  std::string emb_dataset, emb_out, emb_vocab;
  auto* pemb = app.add_subcommand("pretrain-embed", "skip-gram pre-training of action embeddings");
  add_common(pemb, c_emb);
  pemb->add_option("--dataset", emb_dataset, "dataset (.jsonl)")->required()->check(CLI::ExistingFile);
  pemb->add_option("--vocab", emb_vocab, "vocabulary CSV (stamps its hash)")->check(CLI::ExistingFile);
  pemb->add_option("--out", emb_out, "embedding file")->required();
  pemb->callback([&] {
    action = [&] {
      const ExperimentConfig cfg = experiment_config(load_config(c_emb));
      const Dataset ds = load_dataset(emb_dataset);
      SkipGramConfig sg = cfg.skipgram;
      sg.dim = cfg.embed.action_dim;
      SkipGramResult r = pretrain_skipgram(shift_corpus(ds.all()), ds.vocab_size, sg);
      if (!emb_vocab.empty()) r.embedding.vocab_hash = read_vocabulary(emb_vocab).hash();
      save_action_embedding(emb_out, r.embedding);
      for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) out << "epoch " << e + 1 << " loss " << fmt(r.epoch_loss[e]) << "\n";
    };
  });

  // pretrain-ae
  Common c_ae;
  std::string ae_dataset, ae_out, ae_embedding, ae_arch = "causalnet";
  auto* pae = app.add_subcommand("pretrain-ae", "sequence-autoencoder pre-training of the low-level encoder");
  add_common(pae, c_ae);
  pae->add_option("--dataset", ae_dataset, "dataset (.jsonl)")->required()->check(CLI::ExistingFile);
  pae->add_option("--arch", ae_arch, "fcn | causalnet | restcn");
  pae->add_option("--embedding", ae_embedding, "pre-trained action embedding")->check(CLI::ExistingFile);
  pae->add_option("--out", ae_out, "autoencoder checkpoint")->required();
  pae->callback([&] {
    action = [&] {
      const ExperimentConfig cfg = experiment_config(load_config(c_ae));
      const Dataset ds = load_dataset(ae_dataset);
      Recipe r;
      r.kind = Recipe::Kind::semi_hipal;
      r.arch = parse_arch(ae_arch);
      std::optional<ActionEmbedding> emb;
      if (!ae_embedding.empty()) emb = load_action_embedding(ae_embedding);
      SeqAEResult res =
          pretrain_unsupervised(ds.all(), cfg.model_config(r), ds.vocab_size, cfg.seqae, emb ? &*emb : nullptr);
      res.model.save(ae_out);
      for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
        out << "epoch " << e + 1 << " loss " << fmt(res.epoch_loss[e]) << "\n";
    };
  });

  // train
  Common c_train;
  std::string tr_dataset, tr_out, tr_pretrained, tr_embedding, tr_history, tr_arch = "causalnet";
  auto* train = app.add_subcommand("train", "supervised training of the hierarchical model");
  add_common(train, c_train);
  train->add_option("--dataset", tr_dataset, "dataset (.jsonl)")->required()->check(CLI::ExistingFile);
  train->add_option("--arch", tr_arch, "fcn | causalnet | restcn");
  train->add_option("--pretrained", tr_pretrained, "autoencoder checkpoint to start from")->check(CLI::ExistingFile);
  train->add_option("--embedding", tr_embedding, "pre-trained action embedding")->check(CLI::ExistingFile);
  train->add_option("--history", tr_history, "per-epoch history CSV");
  train->add_option("--out", tr_out, "model checkpoint")->required();
  train->callback([&] {
    action = [&] {
      const ExperimentConfig cfg = experiment_config(load_config(c_train));
      const Dataset ds = load_dataset(tr_dataset);
      require_labeled(ds, "train");
      const auto [tr, va] = train_val_split(ds, cfg);
      Recipe r;
      r.arch = parse_arch(tr_arch);
      Rng rng(cfg.train.seed);
      HiPALModel model(cfg.model_config(r), ds.vocab_size, rng);
      if (!tr_embedding.empty()) model.bank.set_action_weights(load_action_embedding(tr_embedding));
      if (!tr_pretrained.empty()) transfer_weights(SeqAEModel::load(tr_pretrained), model);
      const TrainHistory hist = train_model(model, tr, va, cfg.train);
      model.save(tr_out);
      if (!tr_history.empty()) {
        auto os = open_out(tr_history);
        hist.write_csv(os);
      }
      out << "epochs=" << hist.epochs.size() << " best_epoch=" << hist.best_epoch << "\n";
    };
  });

  // cv
  Common c_cv;
  std::string cv_dataset, cv_recipe = "hipal-c", cv_out, cv_vocab;
  bool cv_timing = false;
  auto* cv = app.add_subcommand("cv", "participant-grouped repeated cross-validation");
  add_common(cv, c_cv);
  cv->add_option("--dataset", cv_dataset, "dataset (.jsonl)")->required()->check(CLI::ExistingFile);
  cv->add_option("--recipe", cv_recipe, "model recipe")->check(CLI::IsMember(known_recipes()));
  cv->add_option("--vocab", cv_vocab, "vocabulary CSV (categories for baseline features)")->check(CLI::ExistingFile);
  cv->add_option("--out", cv_out, "MetricsReport CSV (stdout when omitted)");
  cv->add_flag("--timing", cv_timing, "record per-epoch wall-clock seconds");
  cv->callback([&] {
    action = [&] {
      ExperimentConfig cfg = experiment_config(load_config(c_cv));
      if (cv_timing) cfg.timing = true;
      const Dataset ds = load_dataset(cv_dataset);
      require_labeled(ds, "cv");
      std::optional<Vocabulary> vocab;
      if (!cv_vocab.empty()) vocab = read_vocabulary(cv_vocab);
      const MetricsReport rep = run_cv(ds, cv_recipe, cfg, vocab ? &*vocab : nullptr);
      if (cv_out.empty()) {
        rep.write_csv(out, cfg.timing);
      } else {
        auto os = open_out(cv_out);
        rep.write_csv(os, cfg.timing);
      }
    };
  });

  // eval / predict / offset-eval / riskmap share --dataset and --model
  Common c_eval;
  std::string ev_dataset, ev_model;
  auto* eval = app.add_subcommand("eval", "metrics of a trained model on the labeled months");
  add_common(eval, c_eval);
  eval->add_option("--dataset", ev_dataset, "dataset (.jsonl)")->required()->check(CLI::ExistingFile);
  eval->add_option("--model", ev_model, "model checkpoint")->required()->check(CLI::ExistingFile);
  eval->callback([&] {
    action = [&] {
      load_config(c_eval);
      const Dataset ds = load_dataset(ev_dataset);
      const auto months = require_labeled(ds, "eval");
      const HiPALModel model = HiPALModel::load(ev_model);
      std::vector<int> y;
      for (const auto* m : months) y.push_back(*m->label ? 1 : 0);
      const MetricsEntry e = compute_metrics(y, predict_scores(model, months));
      out << "months,auroc,auprc,accuracy\n"
          << months.size() << ',' << fmt(e.auroc) << ',' << fmt(e.auprc) << ',' << fmt(e.accuracy) << "\n";
    };
  });

  Common c_pred;
  std::string pr_dataset, pr_model, pr_out, pr_vocab;
  bool pr_streaming = false;
  auto* predict = app.add_subcommand("predict", "monthly and daily risks for every month");
  add_common(predict, c_pred);
  predict->add_option("--dataset", pr_dataset, "dataset (.jsonl)")->required()->check(CLI::ExistingFile);
  predict->add_option("--model", pr_model, "model checkpoint")->required()->check(CLI::ExistingFile);
  predict->add_option("--vocab", pr_vocab, "vocabulary CSV; must match the model")->check(CLI::ExistingFile);
  predict->add_option("--out", pr_out, "predictions CSV (stdout when omitted)");
  predict->add_flag("--streaming", pr_streaming, "consume one shift at a time");
  predict->callback([&] {
    action = [&] {
      load_config(c_pred);
      const Dataset ds = load_dataset(pr_dataset);
      const HiPALModel model = HiPALModel::load(pr_model);
      if (ds.vocab_size != model.vocab_size())
        throw ValidationError("dataset vocabulary (" + std::to_string(ds.vocab_size) +
                              ") does not match the model vocabulary (" + std::to_string(model.vocab_size()) + ")");
      if (!pr_vocab.empty() && read_vocabulary(pr_vocab).size() != model.vocab_size())
        throw ValidationError("vocabulary file does not match the model vocabulary");
      std::ofstream file;
      if (!pr_out.empty()) file = open_out(pr_out);
      std::ostream& os = pr_out.empty() ? out : file;
      os << "participant_id,month_index,label,gamma,daily_risks\n";
      for (const auto& m : ds.months) {
        MonthPrediction p;
        if (pr_streaming) {
          StreamingPredictor s(model, m.window_start);
          for (const auto& shift : model.used_shifts(m)) s.push(shift);
          p.gamma = s.gamma();
          p.daily_risks = s.daily_risks();
        } else {
          p = model.predict(m);
        }
        os << m.participant_id << ',' << m.month_index << ',' << (m.label ? (*m.label ? "1" : "0") : "") << ','
           << fmt(p.gamma) << ',';
        for (std::size_t k = 0; k < p.daily_risks.size(); ++k) os << (k ? ";" : "") << fmt(p.daily_risks[k]);
        os << '\n';
      }
    };
  });

  Common c_off;
  std::string of_dataset, of_model;
  int of_max = 7;
  auto* offset = app.add_subcommand("offset-eval", "AUROC when the final days of each month are removed");
  add_common(offset, c_off);
  offset->add_option("--dataset", of_dataset, "dataset (.jsonl)")->required()->check(CLI::ExistingFile);
  offset->add_option("--model", of_model, "model checkpoint")->required()->check(CLI::ExistingFile);
  offset->add_option("--max-offset", of_max, "largest offset in days")->check(CLI::NonNegativeNumber);
  offset->callback([&] {
    action = [&] {
      load_config(c_off);
      const Dataset ds = load_dataset(of_dataset);
      const auto months = require_labeled(ds, "offset-eval");
      const HiPALModel model = HiPALModel::load(of_model);
      std::vector<int> offsets;
      for (int o = 0; o <= of_max; ++o) offsets.push_back(o);
      out << "offset_days,auroc\n";
      for (const auto& r : offset_evaluation(model, months, offsets)) out << r.offset_days << ',' << fmt(r.auroc) << "\n";
    };
  });

  Common c_risk;
  std::string rk_dataset, rk_model, rk_participant, rk_out, rk_ppm;
  auto* risk = app.add_subcommand("riskmap", "daily-risk grid of one participant");
  add_common(risk, c_risk);
  risk->add_option("--dataset", rk_dataset, "dataset (.jsonl)")->required()->check(CLI::ExistingFile);
  risk->add_option("--model", rk_model, "model checkpoint")->required()->check(CLI::ExistingFile);
  risk->add_option("--participant", rk_participant, "participant id")->required();
  risk->add_option("--out", rk_out, "risk map CSV")->required();
  risk->add_option("--ppm", rk_ppm, "optional heatmap image (binary PPM)");
  risk->callback([&] {
    action = [&] {
      load_config(c_risk);
      const Dataset ds = load_dataset(rk_dataset);
      const HiPALModel model = HiPALModel::load(rk_model);
      const RiskMap map = build_risk_map(model, ds, rk_participant);
      auto os = open_out(rk_out);
      map.write_csv(os);
      if (!rk_ppm.empty()) map.write_ppm(rk_ppm);
      out << "rows=" << map.rows.size() << " width=" << map.width << "\n";
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }
  try {
    if (action) action();
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace hipal::cli
