// mgf: featurize, train, cross-validate, evaluate and predict from the
// command line. Every run writes the fully resolved configuration it used.
#include <algorithm>
#include <cstdint>
#include <functional>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mgf/dataset.hpp"
#include "mgf/synthetic.hpp"
#include "mgf/train_eval.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct RunConfig {
  std::string command;
  mgf::ArchConfig arch;
  mgf::TrainConfig train;
  mgf::FeaturizeOptions feat;
  std::string manifest, embeddings, checkpoint, out;
  std::size_t workers = 1;
  // synth only
  std::size_t n_sessions = 200;
  double separation = 1.0;
};

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["command"] = c.command;
  j["arch"] = mgf::to_json(c.arch);
  j["train"] = {{"lr", c.train.lr},
                {"batch_size", c.train.batch_size},
                {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience},
                {"seed", c.train.seed},
                {"folds", c.train.folds},
                {"loso", c.train.loso},
                {"val_fraction", c.train.val_fraction}};
  j["featurize"] = {{"stat_window", c.feat.stat_window}, {"stat_hop", c.feat.stat_hop}, {"alpha", c.feat.alpha}};
  j["paths"] = {{"manifest", c.manifest}, {"embeddings", c.embeddings}, {"checkpoint", c.checkpoint}, {"out", c.out}};
  j["workers"] = c.workers;
  if (c.command == "synth") j["synth"] = {{"n", c.n_sessions}, {"separation", c.separation}};
  return j;
}

RunConfig from_json(const nlohmann::json& j) {
  RunConfig c;
  c.command = j.value("command", "");
  c.arch = mgf::arch_from_json(j.at("arch"));
  const auto& t = j.at("train");
  c.train.lr = t.at("lr").get<double>();
  c.train.batch_size = t.at("batch_size").get<std::size_t>();
  c.train.max_epochs = t.at("max_epochs").get<std::size_t>();
  c.train.patience = t.at("patience").get<std::size_t>();
  c.train.seed = t.at("seed").get<std::uint64_t>();
  c.train.folds = t.at("folds").get<std::size_t>();
  c.train.loso = t.at("loso").get<bool>();
  c.train.val_fraction = t.at("val_fraction").get<double>();
  const auto& f = j.at("featurize");
  c.feat.stat_window = f.at("stat_window").get<std::size_t>();
  c.feat.stat_hop = f.at("stat_hop").get<std::size_t>();
  c.feat.alpha = f.at("alpha").get<double>();
  const auto& p = j.at("paths");
  c.manifest = p.value("manifest", "");
  c.embeddings = p.value("embeddings", "");
  c.checkpoint = p.value("checkpoint", "");
  c.out = p.value("out", "");
  c.workers = j.value("workers", std::size_t{1});
  if (j.contains("synth")) {
    c.n_sessions = j["synth"].at("n").get<std::size_t>();
    c.separation = j["synth"].at("separation").get<double>();
  }
  return c;
}

// Raw flag values; only the ones actually given override the base config.
struct Flags {
  std::string config, task, model, combiner, manifest, embeddings, checkpoint, out;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool no_disfl = false, no_pause = false, no_lmprob = false, lm_log = false, loso = false;
  std::size_t a_timestep = 0, a_stride = 0, a_layers = 0, a_hidden = 0;
  std::size_t t_timestep = 0, t_stride = 0, t_layers = 0, t_hidden = 0;
  std::size_t highway = 0, batch = 0, epochs = 0, patience = 0, folds = 0, stat_window = 0, stat_hop = 0;
  double lr = 0, val_fraction = 0, alpha = 0;
  std::size_t n = 0;
  double separation = 0;
};

struct Options {
  CLI::App* app = nullptr;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> setters;
};

template <typename V>
void add(Options& o, Flags& f, const std::string& name, V Flags::*field, const std::string& help,
         std::function<void(RunConfig&, const V&)> apply) {
  auto* opt = o.app->add_option(name, f.*field, help);
  o.setters.emplace_back(opt, [&f, field, apply](RunConfig& c) { apply(c, f.*field); });
}

void add_flag(Options& o, Flags& f, const std::string& name, bool Flags::*field, const std::string& help,
              std::function<void(RunConfig&)> apply) {
  auto* opt = o.app->add_flag(name, f.*field, help);
  o.setters.emplace_back(opt, [apply](RunConfig& c) { apply(c); });
}

void add_common(Options& o, Flags& f, bool data, bool model) {
  auto* app = o.app;
  app->add_option("--config", f.config, "resolved config JSON from an earlier run; flags given here override it");
  add<std::string>(o, f, "--out", &Flags::out, "output directory", [](RunConfig& c, const std::string& v) { c.out = v; });
  add<std::uint64_t>(o, f, "--seed", &Flags::seed, "run seed (default 0)", [](RunConfig& c, const std::uint64_t& v) {
    c.arch.seed = v;
    c.train.seed = v;
  });
  if (data) {
    add<std::string>(o, f, "--manifest", &Flags::manifest, "session manifest CSV",
                     [](RunConfig& c, const std::string& v) { c.manifest = v; });
    add<std::string>(o, f, "--embeddings", &Flags::embeddings, "word embedding text file",
                     [](RunConfig& c, const std::string& v) { c.embeddings = v; });
    add_flag(o, f, "--no-disfl", &Flags::no_disfl, "drop the disfluency one-hot block",
             [](RunConfig& c) { c.arch.flags.disfl = false; });
    add_flag(o, f, "--no-pause", &Flags::no_pause, "drop the pause category and duration",
             [](RunConfig& c) { c.arch.flags.pause = false; });
    add_flag(o, f, "--no-lmprob", &Flags::no_lmprob, "drop the language-model probability",
             [](RunConfig& c) { c.arch.flags.lm_prob = false; });
    add_flag(o, f, "--lm-log", &Flags::lm_log, "feed log probability instead of probability",
             [](RunConfig& c) { c.arch.flags.lm_log = true; });
    add<std::size_t>(o, f, "--stat-window", &Flags::stat_window, "frames per functional step (default 100)",
                     [](RunConfig& c, const std::size_t& v) { c.feat.stat_window = v; });
    add<std::size_t>(o, f, "--stat-hop", &Flags::stat_hop, "frame hop between functional steps (default 100)",
                     [](RunConfig& c, const std::size_t& v) { c.feat.stat_hop = v; });
  }
  if (!model) return;
  const std::vector<std::string> tasks = {"ad", "mmse", "decline"};
  const std::vector<std::string> models = {"audio", "text", "fused", "late"};
  add<std::string>(o, f, "--task", &Flags::task, "ad | mmse | decline (default ad)",
                   [](RunConfig& c, const std::string& v) { c.arch.task = mgf::task_from_string(v); });
  o.setters.back().first->check(CLI::IsMember(tasks));
  add<std::string>(o, f, "--model", &Flags::model, "audio | text | fused | late (default fused)",
                   [](RunConfig& c, const std::string& v) { c.arch.kind = mgf::kind_from_string(v); });
  o.setters.back().first->check(CLI::IsMember(models));
  add<std::string>(o, f, "--late-combiner", &Flags::combiner, "late fusion of branch probabilities: mean | max | logit-mean (default mean)",
                   [](RunConfig& c, const std::string& v) { c.arch.late_combiner = mgf::combiner_from_string(v); });
  o.setters.back().first->check(CLI::IsMember(std::vector<std::string>{"mean", "max", "logit-mean"}));
  add<double>(o, f, "--alpha", &Flags::alpha, "feature-selection significance level (default 0.05)",
              [](RunConfig& c, const double& v) { c.feat.alpha = v; });
  add<std::size_t>(o, f, "--audio-timestep", &Flags::a_timestep, "audio window length (default 20)",
                   [](RunConfig& c, const std::size_t& v) { c.arch.audio.timestep = v; });
  add<std::size_t>(o, f, "--audio-stride", &Flags::a_stride, "audio window stride (default 1)",
                   [](RunConfig& c, const std::size_t& v) { c.arch.audio.stride = v; });
  add<std::size_t>(o, f, "--audio-layers", &Flags::a_layers, "audio BiLSTM layers (default 4)",
                   [](RunConfig& c, const std::size_t& v) { c.arch.audio.layers = v; });
  add<std::size_t>(o, f, "--audio-hidden", &Flags::a_hidden, "audio hidden units per direction (default 256)",
                   [](RunConfig& c, const std::size_t& v) { c.arch.audio.hidden = v; });
  add<std::size_t>(o, f, "--text-timestep", &Flags::t_timestep, "text window length (default 10)",
                   [](RunConfig& c, const std::size_t& v) { c.arch.text.timestep = v; });
  add<std::size_t>(o, f, "--text-stride", &Flags::t_stride, "text window stride (default 2)",
                   [](RunConfig& c, const std::size_t& v) { c.arch.text.stride = v; });
  add<std::size_t>(o, f, "--text-layers", &Flags::t_layers, "text BiLSTM layers (default 2)",
                   [](RunConfig& c, const std::size_t& v) { c.arch.text.layers = v; });
  add<std::size_t>(o, f, "--text-hidden", &Flags::t_hidden, "text hidden units per direction (default 16)",
                   [](RunConfig& c, const std::size_t& v) { c.arch.text.hidden = v; });
  add<std::size_t>(o, f, "--highway", &Flags::highway, "stacked highway layers (default 3)",
                   [](RunConfig& c, const std::size_t& v) { c.arch.highway_n = v; });
  add<double>(o, f, "--lr", &Flags::lr, "Adam learning rate (default 1e-4)",
              [](RunConfig& c, const double& v) { c.train.lr = v; });
  add<std::size_t>(o, f, "--batch-size", &Flags::batch, "instances per batch (default 32)",
                   [](RunConfig& c, const std::size_t& v) { c.train.batch_size = v; });
  add<std::size_t>(o, f, "--max-epochs", &Flags::epochs, "epoch cap (default 300)",
                   [](RunConfig& c, const std::size_t& v) { c.train.max_epochs = v; });
  add<std::size_t>(o, f, "--patience", &Flags::patience, "early-stopping patience in epochs (default 10)",
                   [](RunConfig& c, const std::size_t& v) { c.train.patience = v; });
  add<double>(o, f, "--val-fraction", &Flags::val_fraction, "inner validation share (default 0.2)",
              [](RunConfig& c, const double& v) { c.train.val_fraction = v; });
}

void add_cv(Options& o, Flags& f) {
  add<std::size_t>(o, f, "--folds", &Flags::folds, "k for stratified k-fold (default 5)", [](RunConfig& c, const std::size_t& v) {
    c.train.folds = v;
    c.train.loso = false;
  });
  add_flag(o, f, "--loso", &Flags::loso, "leave-one-session-out (default for --task decline)",
           [](RunConfig& c) { c.train.loso = true; });
  add<std::size_t>(o, f, "--workers", &Flags::workers, "folds trained in parallel (default 1)",
                   [](RunConfig& c, const std::size_t& v) { c.workers = v; });
}

RunConfig resolve(const std::string& command, const Flags& f, const Options& o) {
  RunConfig c;
  if (!f.config.empty()) {
    try {
      c = from_json(nlohmann::json::parse(mgf::read_file(f.config)));
    } catch (const nlohmann::json::exception& e) {
      throw mgf::ValidationError(f.config + ": " + e.what());
    }
  }
  c.command = command;
  for (const auto& [opt, apply] : o.setters)
    if (opt->count()) apply(c);
  if (command == "cv" && f.config.empty() && c.arch.task == mgf::Task::decline) {
    bool folds_given = false;
    for (const auto& s : o.setters)
      if (s.first->get_name() == "--folds" && s.first->count()) folds_given = true;
    if (!folds_given) c.train.loso = true;
  }
  return c;
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw mgf::ValidationError("missing required " + flag);
}

void require_file(const std::string& path, const std::string& flag) {
  require(path, flag);
  if (!fs::is_regular_file(path)) throw mgf::ValidationError(flag + ": file not found: " + path);
}

void write_config(const RunConfig& c) { mgf::write_file(fs::path(c.out) / "config.json", to_json(c).dump(2) + "\n"); }

struct Loaded {
  std::vector<mgf::Session> sessions;
  mgf::EmbeddingTable table;
};

Loaded load_inputs(const RunConfig& c) {
  require_file(c.manifest, "--manifest");
  require_file(c.embeddings, "--embeddings");
  Loaded l;
  l.sessions = mgf::load_dataset(c.manifest);
  try {
    l.table = mgf::load_embeddings(mgf::read_file(c.embeddings));
  } catch (const mgf::Error& e) {
    throw mgf::ValidationError(c.embeddings + ": " + e.what());
  }
  return l;
}

mgf::FeaturizeOptions feat_of(const RunConfig& c) {
  mgf::FeaturizeOptions f = c.feat;
  f.flags = c.arch.flags;
  return f;
}

int cmd_extract(const RunConfig& c) {
  require(c.out, "--out");
  auto in = load_inputs(c);
  auto feats = mgf::extract_all(in.sessions, in.table, feat_of(c));
  for (const auto& f : feats) {
    mgf::write_file(fs::path(c.out) / "functionals" / (f.record.session_id + ".csv"), mgf::functionals_to_csv(f.functionals));
    mgf::write_file(fs::path(c.out) / "lexical" / (f.record.session_id + ".csv"), mgf::lexical_to_csv(f.lexical));
  }
  write_config(c);
  std::cout << "extracted " << feats.size() << " sessions to " << c.out << "\n";
  return 0;
}

int cmd_train(const RunConfig& c) {
  require(c.out, "--out");
  c.arch.validate();
  c.train.validate();
  auto in = load_inputs(c);
  auto all = mgf::extract_all(in.sessions, in.table, feat_of(c));
  std::vector<mgf::SessionFeatures> data;
  for (auto& s : all)
    if (mgf::task_target(s.record, c.arch.task)) data.push_back(std::move(s));
  if (data.size() < 3)
    throw mgf::ValidationError("--manifest: only " + std::to_string(data.size()) + " sessions carry a " +
                               std::string(mgf::to_string(c.arch.task)) + " label");
  std::vector<double> targets;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i) {
    targets.push_back(*mgf::task_target(data[i].record, c.arch.task));
    idx.push_back(i);
  }
  auto fa = mgf::run_fold(data, targets, idx, {}, c.arch, c.train, feat_of(c), in.table);
  mgf::write_file(fs::path(c.out) / "model.ckpt", mgf::save_checkpoint(fa.training.params));
  mgf::write_file(fs::path(c.out) / "train_log.csv", mgf::training_log_csv(fa.training.log));
  write_config(c);
  std::cout << "trained on " << fa.train_ids.size() << " sessions (" << fa.val_ids.size()
            << " held out), best epoch " << fa.training.best_epoch << "\n";
  return 0;
}

int cmd_cv(const RunConfig& c) {
  require(c.out, "--out");
  auto in = load_inputs(c);
  mgf::CvOptions opt;
  opt.arch = c.arch;
  opt.train = c.train;
  opt.feat = feat_of(c);
  opt.workers = c.workers;
  auto feats = mgf::extract_all(in.sessions, in.table, opt.feat);
  auto res = mgf::run_cv(feats, in.table, opt);
  mgf::write_file(fs::path(c.out) / "report.json", mgf::to_json(res.report).dump(2) + "\n");
  write_config(c);
  const auto& r = res.report;
  std::cout << r.protocol << " " << mgf::to_string(r.task) << " n=" << r.n;
  if (r.accuracy) std::cout << " accuracy=" << *r.accuracy << " f1_mean=" << *r.f1_mean;
  if (r.rmse) std::cout << " rmse=" << *r.rmse;
  std::cout << "\n";
  return 0;
}

// Refuses to score features built differently from the training run.
void check_compatible(const mgf::ModelParams<float>& p, const RunConfig& c, const mgf::EmbeddingTable& table) {
  const auto& want = p.arch.flags;
  const auto& got = c.arch.flags;
  auto flag = [](bool enabled, const char* name) {
    return std::string(name) + (enabled ? " (enabled)" : " (disabled)");
  };
  if (want.disfl != got.disfl)
    throw mgf::ValidationError("feature flag mismatch: checkpoint has " + flag(want.disfl, "disfl") + ", run has --no-disfl " + (got.disfl ? "absent" : "set"));
  if (want.pause != got.pause)
    throw mgf::ValidationError("feature flag mismatch: checkpoint has " + flag(want.pause, "pause") + ", run has --no-pause " + (got.pause ? "absent" : "set"));
  if (want.lm_prob != got.lm_prob)
    throw mgf::ValidationError("feature flag mismatch: checkpoint has " + flag(want.lm_prob, "lmprob") + ", run has --no-lmprob " + (got.lm_prob ? "absent" : "set"));
  if (want.lm_log != got.lm_log)
    throw mgf::ValidationError("feature flag mismatch: checkpoint has " + flag(want.lm_log, "lm-log") + ", run has --lm-log " + (got.lm_log ? "set" : "absent"));
  if (mgf::uses_text(p.arch.kind) && p.meta.embedding_hash != table.content_hash)
    throw mgf::ValidationError("--embeddings: " + c.embeddings + " differs from the table the checkpoint was trained with");
}

std::vector<mgf::SessionPrediction> score(const RunConfig& c, mgf::ModelParams<float>& p, std::vector<mgf::SessionRecord>* recs) {
  require_file(c.checkpoint, "--checkpoint");
  try {
    p = mgf::load_checkpoint(mgf::read_file(c.checkpoint));
  } catch (const mgf::Error& e) {
    throw mgf::ValidationError(c.checkpoint + ": " + e.what());
  }
  auto in = load_inputs(c);
  check_compatible(p, c, in.table);
  mgf::FeaturizeOptions feat;
  feat.stat_window = p.meta.stat_window;
  feat.stat_hop = p.meta.stat_hop;
  feat.alpha = p.meta.alpha;
  feat.flags = p.arch.flags;
  auto feats = mgf::extract_all(in.sessions, in.table, feat);
  std::vector<mgf::SessionPrediction> out;
  for (const auto& f : feats) {
    if (mgf::uses_audio(p.arch.kind) && f.functionals.steps.cols() != p.meta.scaler.means.size())
      throw mgf::ValidationError("session \"" + f.record.session_id + "\": frame feature count differs from the checkpoint");
    out.push_back(mgf::predict_session(mgf::make_session_windows(f, p.meta, p.arch), p));
    if (recs) recs->push_back(f.record);
  }
  return out;
}

int cmd_eval(const RunConfig& c) {
  require(c.out, "--out");
  mgf::ModelParams<float> p;
  std::vector<mgf::SessionRecord> recs;
  auto preds = score(c, p, &recs);
  std::vector<mgf::SessionPrediction> labelled;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (mgf::task_target(recs[i], p.arch.task)) labelled.push_back(preds[i]);
  auto r = mgf::evaluate(labelled, recs, p.arch.task);
  r.protocol = "checkpoint";
  r.seed = p.arch.seed;
  mgf::write_file(fs::path(c.out) / "report.json", mgf::to_json(r).dump(2) + "\n");
  write_config(c);
  std::cout << "evaluated " << r.n << " sessions\n";
  return 0;
}

int cmd_predict(const RunConfig& c) {
  require(c.out, "--out");
  mgf::ModelParams<float> p;
  auto preds = score(c, p, nullptr);
  const bool cls = mgf::is_classification(p.arch.task);
  std::string csv = cls ? "session_id,score,label\n" : "session_id,score\n";
  for (const auto& sp : preds) {
    csv += mgf::csv::quote(sp.session_id) + "," + mgf::csv::format_double(sp.score);
    if (cls) csv += "," + std::to_string(sp.label);
    csv += "\n";
  }
  mgf::write_file(fs::path(c.out) / "predictions.csv", csv);
  write_config(c);
  std::cout << "wrote " << preds.size() << " predictions\n";
  return 0;
}

int cmd_synth(const RunConfig& c) {
  require(c.out, "--out");
  auto ds = mgf::make_synthetic(c.arch.seed, c.n_sessions, c.separation);
  mgf::write_synthetic(ds, c.out);
  write_config(c);
  std::cout << "wrote " << ds.sessions.size() << " synthetic sessions to " << c.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mgf: multimodal gated fusion pipeline for speech-based cognitive assessment"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  struct Sub {
    std::string name;
    std::string help;
    bool data, model, cv;
    int (*run)(const RunConfig&);
  };
  const std::vector<Sub> subs = {
      {"extract", "write per-session functional and lexical feature CSVs", true, false, false, cmd_extract},
      {"train", "train one model (80/20 holdout for early stopping)", true, true, false, cmd_train},
      {"cv", "cross-validate and write report.json", true, true, true, cmd_cv},
      {"eval", "score a checkpoint on a labelled manifest", true, false, false, cmd_eval},
      {"predict", "write per-session predictions for a manifest", true, false, false, cmd_predict},
      {"synth", "write a seeded synthetic dataset", false, false, false, cmd_synth},
  };
  std::vector<Flags> flags(subs.size());
  std::vector<Options> options(subs.size());
  std::vector<CLI::App*> apps;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    auto* sub = app.add_subcommand(subs[i].name, subs[i].help);
    options[i].app = sub;
    add_common(options[i], flags[i], subs[i].data, subs[i].model);
    if (subs[i].cv) add_cv(options[i], flags[i]);
    if (subs[i].name == "eval" || subs[i].name == "predict")
      add<std::string>(options[i], flags[i], "--checkpoint", &Flags::checkpoint, "model checkpoint",
                       [](RunConfig& c, const std::string& v) { c.checkpoint = v; });
    if (subs[i].name == "synth") {
      add<std::size_t>(options[i], flags[i], "--n", &Flags::n, "session count, even and >= 4 (default 200)",
                       [](RunConfig& c, const std::size_t& v) { c.n_sessions = v; });
      add<double>(options[i], flags[i], "--separation", &Flags::separation, "class signal strength in [0,1] (default 1)",
                  [](RunConfig& c, const double& v) { c.separation = v; });
    }
    apps.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!apps[i]->parsed()) continue;
    try {
      RunConfig c = resolve(subs[i].name, flags[i], options[i]);
      return subs[i].run(c);
    } catch (const mgf::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}
