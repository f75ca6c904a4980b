// SPDX-License-Identifier: Apache-2.0
// Command-line driver: synthetic data, baselines, cross-validated regressors,
// listener agreement, piece-level evaluation and the toy embedder.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "spksim/cross_validation.hpp"
#include "spksim/dataset.hpp"
#include "spksim/embedding_space.hpp"
#include "spksim/report.hpp"
#include "spksim/score_stats.hpp"
#include "spksim/synthetic.hpp"
#include "spksim/toy_embedder.hpp"
#include "spksim/trainer.hpp"

extern char** environ;

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using namespace spksim;
namespace fs = std::filesystem;

constexpr std::uint64_t kDefaultSeed = 1;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config_path;
};

struct DataArgs {
  std::string dir;
  std::string evaluations;
  std::string embeddings;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

const std::vector<std::string> kSections = {"synthetic", "net",         "train",  "cv",      "loss",
                                            "pieces",    "upper_bound", "corpus", "encoder", "toy"};

/// Parses an override value as JSON when possible, otherwise as a string.
json parse_override(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

/// Applies SPKSIM_<SECTION>_<KEY>=value and SPKSIM_SEED=value overrides.
void apply_env_overrides(json& cfg) {
  const std::string prefix = "SPKSIM_";
  for (char** env = environ; *env != nullptr; ++env) {
    const std::string entry(*env);
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string name = entry.substr(prefix.size(), eq - prefix.size());
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    const json value = parse_override(entry.substr(eq + 1));
    if (name == "seed") {
      cfg["seed"] = value;
      continue;
    }
    bool matched = false;
    for (const auto& section : kSections) {
      if (name.rfind(section + "_", 0) == 0 && name.size() > section.size() + 1) {
        cfg[section][name.substr(section.size() + 1)] = value;
        matched = true;
        break;
      }
    }
    if (!matched) throw Error(ErrorCode::invalid_config, "unknown environment override '" + entry.substr(0, eq) + "'");
  }
}

json load_config(const Globals& g) {
  json cfg = json::object();
  if (!g.config_path.empty()) {
    const auto text = read_text_file(g.config_path);
    try {
      cfg = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::parse, g.config_path + ": " + e.what());
    }
    if (!cfg.is_object()) throw Error(ErrorCode::invalid_config, "config root must be an object");
  }
  apply_env_overrides(cfg);
  for (const auto& item : cfg.items()) {
    if (item.key() == "seed") continue;
    if (std::find(kSections.begin(), kSections.end(), item.key()) == kSections.end()) {
      throw Error(ErrorCode::invalid_config, "unknown config section '" + item.key() + "'");
    }
  }
  return cfg;
}

json section(const json& cfg, const char* name) { return cfg.contains(name) ? cfg.at(name) : json::object(); }

std::uint64_t resolve_seed(const Globals& g, const json& cfg) {
  if (g.seed) return *g.seed;
  if (cfg.contains("seed")) {
    std::uint64_t s = kDefaultSeed;
    config::read(cfg, "seed", s);
    return s;
  }
  return kDefaultSeed;
}

struct PiecesSettings {
  double jitter_sd = 0.01;
  std::size_t per_utterance = 3;
};

PiecesSettings pieces_settings(const json& j) {
  config::check_keys(j, "pieces", {"jitter_sd", "per_utterance"});
  PiecesSettings p;
  config::read(j, "jitter_sd", p.jitter_sd);
  config::read(j, "per_utterance", p.per_utterance);
  if (!(p.jitter_sd >= 0.0)) throw Error(ErrorCode::invalid_config, "jitter_sd must be >= 0");
  if (p.per_utterance < 1) throw Error(ErrorCode::invalid_config, "per_utterance must be >= 1");
  return p;
}

std::size_t upper_bound_trials(const json& j) {
  config::check_keys(j, "upper_bound", {"n_trials"});
  std::size_t n = 100;
  config::read(j, "n_trials", n);
  if (n < 1) throw Error(ErrorCode::invalid_config, "n_trials must be >= 1");
  return n;
}

std::size_t toy_examples(const json& j) {
  config::check_keys(j, "toy", {"n_examples"});
  std::size_t n = 200;
  config::read(j, "n_examples", n);
  if (n < 2) throw Error(ErrorCode::invalid_config, "toy n_examples must be >= 2");
  return n;
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

class OutDir {
 public:
  explicit OutDir(std::string path) : path_(std::move(path)) {
    if (path_.empty()) return;
    std::error_code ec;
    fs::create_directories(path_, ec);
    if (ec) throw Error(ErrorCode::io, "cannot create '" + path_ + "': " + ec.message());
  }

  bool enabled() const { return !path_.empty(); }
  std::string file(const std::string& name) const { return (fs::path(path_) / name).string(); }
  void write(const std::string& name, const std::string& contents) const {
    if (enabled()) write_text_file(file(name), contents);
  }

 private:
  std::string path_;
};

std::string dump_json(const ordered_json& j) { return j.dump(2) + "\n"; }

void require_out(const Globals& g, const char* command) {
  if (g.out.empty()) throw Error(ErrorCode::invalid_argument, std::string(command) + " requires --out");
}

EvaluationDataset load_data(const DataArgs& d) {
  std::string ev = d.evaluations;
  std::string em = d.embeddings;
  if (!d.dir.empty()) {
    if (ev.empty()) ev = (fs::path(d.dir) / "evaluations.jsonl").string();
    if (em.empty()) em = (fs::path(d.dir) / "embeddings.jsonl").string();
  }
  if (ev.empty() || em.empty()) {
    throw Error(ErrorCode::invalid_argument, "dataset paths missing: use --data DIR or --evaluations and --embeddings");
  }
  return load_dataset(ev, em);
}

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--data", d.dir, "Directory with evaluations.jsonl and embeddings.jsonl");
  cmd->add_option("--evaluations", d.evaluations, "Evaluations JSONL file");
  cmd->add_option("--embeddings", d.embeddings, "Embeddings JSONL file");
}

struct ModelSettings {
  LossSpec loss;
  NetConfig net;
  TrainConfig train;
  CvSettings cv;
};

ModelSettings model_settings(const json& cfg, const std::string& loss_flag) {
  ModelSettings s;
  s.loss = loss_spec_from_json(section(cfg, "loss"));
  if (!loss_flag.empty()) s.loss.kind = parse_loss_kind(loss_flag);
  s.net = net_config_from_json(section(cfg, "net"));
  s.train = train_config_from_json(section(cfg, "train"));
  s.cv = cv_settings_from_json(section(cfg, "cv"));
  return s;
}

ordered_json model_config_json(const ModelSettings& s, std::uint64_t seed) {
  ordered_json j;
  j["seed"] = seed;
  j["loss"] = to_json(s.loss);
  j["net"] = to_json(s.net);
  j["train"] = to_json(s.train);
  j["cv"] = to_json(s.cv);
  return j;
}

std::vector<ScatterPoint> scatter_points(const CvResult& r) {
  std::vector<ScatterPoint> pts;
  for (const auto& p : r.predictions) pts.push_back({p.id, p.value, p.mean, p.sd});
  return pts;
}

/// Writes the result JSON, predictions, curves, figures and fold checkpoints.
void write_cv_outputs(const OutDir& out, const std::string& result_name, const CvResult& r,
                      const EvaluationDataset& ds, const ordered_json& extra) {
  ordered_json j = extra;
  const auto report = to_json(r);
  for (const auto& [k, v] : report.items()) j[k] = v;
  out.write(result_name, dump_json(j));
  out.write("predictions.jsonl", predictions_jsonl(r));
  out.write("training_curves.csv", fold_curves_csv(r));
  const auto pts = scatter_points(r);
  out.write("scatter.svg", scatter_svg(pts, "Predictions vs mean scores"));
  const auto disc = score_discrepancies(ds);
  const auto disc_edges = uniform_edges(-100.0, 100.0, 40);
  out.write("hist_discrepancy.svg",
            histogram_svg(histogram(disc, disc_edges), "Mean minus individual score", "discrepancy"));
  std::vector<double> means;
  for (const auto& d : distributions_of(ds)) means.push_back(d.mean);
  const auto mean_edges = uniform_edges(0.0, 100.0, 20);
  out.write("hist_mean_scores.svg", histogram_svg(histogram(means, mean_edges), "Mean scores", "mean score"));
  if (out.enabled() && !r.models.empty()) {
    fs::create_directories(out.file("checkpoints"));
    std::size_t k = 0;
    for (const auto& f : r.folds) {
      if (f.skipped) continue;
      out.write("checkpoints/fold_" + std::to_string(f.fold) + ".json", checkpoint_to_json(r.models[k++]).dump() + "\n");
    }
  }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct Outcome {
  ordered_json stdout_json;
  RunManifest manifest;
};

Outcome cmd_synth(const Globals& g, const json& cfg) {
  require_out(g, "synth");
  auto syn_json = section(cfg, "synthetic");
  auto syn = synthetic_config_from_json(syn_json);
  if (g.seed) {
    syn.rng_seed = *g.seed;
  } else if (!syn_json.contains("rng_seed")) {
    syn.rng_seed = resolve_seed(g, cfg);
  }
  syn.validate();
  const auto world = generate_synthetic(syn);
  OutDir out(g.out);
  save_dataset(world.dataset, out.file("evaluations.jsonl"), out.file("embeddings.jsonl"));
  out.write("latent_truth.jsonl", latent_truth_jsonl(world.truth));
  Outcome o;
  o.manifest.command = "synth";
  o.manifest.config["synthetic"] = to_json(syn);
  o.manifest.dataset_fingerprint = dataset_fingerprint(world.dataset);
  o.stdout_json["examples"] = world.dataset.examples().size();
  o.stdout_json["embeddings"] = world.dataset.embeddings().size();
  o.stdout_json["dataset_fingerprint"] = o.manifest.dataset_fingerprint;
  return o;
}

Outcome cmd_baseline(const Globals& g, const DataArgs& d, const std::string& metric_name, bool normalize) {
  const auto metric = parse_distance_metric(metric_name);
  const auto ds = load_data(d);
  Outcome o;
  o.stdout_json["metric"] = std::string(to_string(metric));
  o.stdout_json["normalize_first"] = normalize;
  o.stdout_json["pearson"] = baseline_correlation(ds, metric, normalize);
  o.stdout_json["n"] = ds.examples().size();
  o.stdout_json["dataset_fingerprint"] = dataset_fingerprint(ds);
  o.manifest.command = "baseline";
  o.manifest.config["metric"] = std::string(to_string(metric));
  o.manifest.config["normalize_first"] = normalize;
  o.manifest.dataset_fingerprint = o.stdout_json["dataset_fingerprint"].get<std::string>();
  OutDir(g.out).write("baseline.json", dump_json(o.stdout_json));
  return o;
}

Outcome cmd_cv(const Globals& g, const json& cfg, const DataArgs& d, const std::string& loss_flag) {
  require_out(g, "cv");
  const auto ds = load_data(d);
  const auto s = model_settings(cfg, loss_flag);
  const auto seed = resolve_seed(g, cfg);
  const auto plan = make_cv_plan(ds, s.cv.n_folds, s.cv.grouping, seed);
  const auto result = cross_validate(ds, s.loss, s.net, s.train, plan);
  OutDir out(g.out);
  ordered_json extra;
  extra["loss"] = std::string(to_string(s.loss.kind));
  extra["dataset_fingerprint"] = dataset_fingerprint(ds);
  write_cv_outputs(out, "cv_result.json", result, ds, extra);
  Outcome o;
  o.manifest.command = "cv";
  o.manifest.config = model_config_json(s, seed);
  o.manifest.dataset_fingerprint = extra["dataset_fingerprint"].get<std::string>();
  o.stdout_json = extra;
  o.stdout_json["pooled"] = to_json(result.pooled);
  return o;
}

Outcome cmd_upper_bound(const Globals& g, const json& cfg, const DataArgs& d, std::optional<std::size_t> trials) {
  const auto ds = load_data(d);
  const auto n_trials = trials ? *trials : upper_bound_trials(section(cfg, "upper_bound"));
  if (n_trials < 1) throw Error(ErrorCode::invalid_argument, "--trials must be >= 1");
  const auto seed = resolve_seed(g, cfg);
  const auto ub = listener_split_upper_bound(ds, n_trials, seed);
  Outcome o;
  o.stdout_json = to_json(ub);
  o.stdout_json["n_trials"] = n_trials;
  o.stdout_json["dataset_fingerprint"] = dataset_fingerprint(ds);
  o.manifest.command = "upper-bound";
  o.manifest.config["n_trials"] = n_trials;
  o.manifest.config["seed"] = seed;
  o.manifest.dataset_fingerprint = o.stdout_json["dataset_fingerprint"].get<std::string>();
  OutDir(g.out).write("upper_bound.json", dump_json(o.stdout_json));
  return o;
}

Outcome cmd_pieces(const Globals& g, const json& cfg, const DataArgs& d, const std::string& loss_flag,
                   std::optional<double> jitter, std::optional<std::size_t> per_utt) {
  require_out(g, "pieces");
  auto ds = load_data(d);
  auto ps = pieces_settings(section(cfg, "pieces"));
  if (jitter) ps.jitter_sd = *jitter;
  if (per_utt) ps.per_utterance = *per_utt;
  const auto seed = resolve_seed(g, cfg);
  const bool generated = !ds.has_pieces();
  if (generated) ds = split_into_pieces(ds, ps.jitter_sd, ps.per_utterance, derive_seed(seed, 101));
  const auto s = model_settings(cfg, loss_flag);
  const auto plan = make_cv_plan(ds, s.cv.n_folds, s.cv.grouping, seed);
  const auto result = evaluate_pieces(ds, s.loss, s.net, s.train, plan);
  OutDir out(g.out);
  if (generated) save_dataset(ds, out.file("evaluations.jsonl"), out.file("embeddings.jsonl"));
  ordered_json extra;
  extra["loss"] = std::string(to_string(s.loss.kind));
  extra["dataset_fingerprint"] = dataset_fingerprint(ds);
  extra["pieces_generated"] = generated;
  if (generated) extra["pieces"] = {{"jitter_sd", ps.jitter_sd}, {"per_utterance", ps.per_utterance}};
  write_cv_outputs(out, "pieces_result.json", result, ds, extra);
  Outcome o;
  o.manifest.command = "pieces";
  o.manifest.config = model_config_json(s, seed);
  o.manifest.config["pieces"] = {{"jitter_sd", ps.jitter_sd}, {"per_utterance", ps.per_utterance}};
  o.manifest.dataset_fingerprint = extra["dataset_fingerprint"].get<std::string>();
  o.stdout_json = extra;
  o.stdout_json["pooled"] = to_json(result.pooled);
  return o;
}

Outcome cmd_embedder_demo(const Globals& g, const json& cfg, const std::string& objective_name) {
  require_out(g, "embedder-demo");
  const auto objective = parse_embedder_objective(objective_name);
  auto corpus = corpus_config_from_json(section(cfg, "corpus"));
  const auto enc = encoder_config_from_json(section(cfg, "encoder"));
  const auto n_toy = toy_examples(section(cfg, "toy"));
  const auto seed = resolve_seed(g, cfg);
  if (!section(cfg, "corpus").contains("rng_seed")) corpus.rng_seed = seed;
  const auto result = train_toy_embedder(objective, corpus, enc, seed);
  const auto ds = toy_evaluation_dataset(result, corpus, n_toy, derive_seed(seed, 7));
  OutDir out(g.out);
  save_dataset(ds, out.file("evaluations.jsonl"), out.file("embeddings.jsonl"));
  const auto quality = quality_report(result);
  out.write("quality.json", dump_json(quality));
  std::string curve = "step,loss\n";
  for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
    curve += std::to_string(i + 1) + "," + json(result.loss_curve[i]).dump() + "\n";
  }
  out.write("loss_curve.csv", curve);
  Outcome o;
  o.manifest.command = "embedder-demo";
  o.manifest.config["objective"] = std::string(to_string(objective));
  o.manifest.config["corpus"] = to_json(corpus);
  o.manifest.config["encoder"] = to_json(enc);
  o.manifest.config["toy"] = {{"n_examples", n_toy}};
  o.manifest.config["seed"] = seed;
  o.manifest.dataset_fingerprint = dataset_fingerprint(ds);
  o.stdout_json = quality;
  return o;
}

Outcome cmd_predict(const Globals& g, const DataArgs& d, const std::string& checkpoint, const std::string& source,
                    const std::string& reference, const std::vector<std::string>& ids) {
  const auto text = read_text_file(checkpoint);
  json cj;
  try {
    cj = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, checkpoint + ": " + e.what());
  }
  const auto model = checkpoint_from_json(cj);
  Outcome o;
  o.manifest.command = "predict";
  o.manifest.config["checkpoint"] = checkpoint;
  o.manifest.config["checkpoint_fingerprint"] = fingerprint({text});
  if (!source.empty() || !reference.empty()) {
    if (source.empty() || reference.empty()) {
      throw Error(ErrorCode::invalid_argument, "--source and --reference must be given together");
    }
    if (d.embeddings.empty()) throw Error(ErrorCode::invalid_argument, "pair prediction requires --embeddings");
    const auto embs = load_embeddings(d.embeddings);
    auto find = [&](const std::string& id) -> const SpeakerEmbedding& {
      for (const auto& e : embs) {
        if (e.id == id) return e;
      }
      throw Error(ErrorCode::unknown_id, "unknown embedding id '" + id + "'");
    };
    const auto& src = find(source);
    const auto& ref = find(reference);
    if (model.net_config.features.dim(src.vector.size()) != model.net.input_dim()) {
      throw Error(ErrorCode::dimension_mismatch, "embedding dimension does not match the model");
    }
    const double raw = model.raw_predict(src.vector, ref.vector);
    o.stdout_json["source"] = source;
    o.stdout_json["reference"] = reference;
    o.stdout_json["score"] = clamp_score(raw);
    o.stdout_json["raw"] = raw;
    o.manifest.dataset_fingerprint = fingerprint({read_text_file(d.embeddings)});
    OutDir(g.out).write("prediction.json", dump_json(o.stdout_json));
    return o;
  }
  const auto ds = load_data(d);
  const auto chosen = ids.empty() ? ds.example_ids() : ids;
  const auto preds = predict(model, ds, chosen);
  std::string lines;
  std::map<std::string, double> by_id;
  for (const auto& p : preds) {
    ordered_json j;
    j["example_id"] = p.example_id;
    j["prediction"] = p.value;
    j["raw"] = p.raw;
    lines += j.dump() + "\n";
    by_id[p.example_id] = p.value;
  }
  OutDir out(g.out);
  out.write("predictions.jsonl", lines);
  o.manifest.dataset_fingerprint = dataset_fingerprint(ds);
  o.stdout_json["n"] = preds.size();
  o.stdout_json["dataset_fingerprint"] = o.manifest.dataset_fingerprint;
  if (preds.size() >= 2) {
    std::vector<double> pv;
    std::vector<const ScoreDistribution*> dp;
    std::vector<ScoreDistribution> dists;
    for (const auto& p : preds) dists.push_back(distribution_of(ds.example(p.example_id)));
    for (std::size_t i = 0; i < preds.size(); ++i) {
      pv.push_back(preds[i].value);
      dp.push_back(&dists[i]);
    }
    try {
      o.stdout_json["report"] = to_json(score_predictions(pv, dp));
    } catch (const Error&) {
      // correlation undefined on constant inputs; predictions are still written
    }
  }
  if (!out.enabled()) {
    auto values = ordered_json::array();
    for (const auto& p : preds) values.push_back(p.value);
    o.stdout_json["predictions"] = values;
  }
  return o;
}

void print_error(const std::string& code, const std::string& message) {
  ordered_json j;
  j["error"] = {{"code", code}, {"message", message}};
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  const auto start = std::chrono::steady_clock::now();
  CLI::App app{"Speaker similarity evaluation toolkit"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Base RNG seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--config", g.config_path, "JSON config file");

  DataArgs data;
  std::string metric = "cosine";
  bool normalize = false;
  std::string loss;
  std::size_t trials_value = 0;
  double jitter_value = 0.0;
  std::size_t per_utt_value = 0;
  std::string objective = "ge2e";
  std::string checkpoint;
  std::string source;
  std::string reference;
  std::vector<std::string> ids;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic evaluation dataset");
  auto* baseline = app.add_subcommand("baseline", "Correlation of embedding distances with mean scores");
  add_data_options(baseline, data);
  baseline->add_option("--metric", metric, "Distance metric: euclidean | cosine");
  baseline->add_flag("--normalize", normalize, "Unit-normalize embeddings first");
  auto* cv = app.add_subcommand("cv", "Cross-validate the score regressor");
  add_data_options(cv, data);
  cv->add_option("--loss", loss, "mse | wmse | mahalanobis | mahalanobis-single");
  auto* ub = app.add_subcommand("upper-bound", "Listener split-half agreement");
  add_data_options(ub, data);
  auto* trials_opt = ub->add_option("--trials", trials_value, "Number of random splits");
  auto* pieces = app.add_subcommand("pieces", "Piece-level cross-validation");
  add_data_options(pieces, data);
  pieces->add_option("--loss", loss, "mse | wmse | mahalanobis | mahalanobis-single");
  auto* jitter_opt = pieces->add_option("--jitter", jitter_value, "Piece jitter sd");
  auto* per_utt_opt = pieces->add_option("--pieces", per_utt_value, "Pieces per utterance");
  auto* demo = app.add_subcommand("embedder-demo", "Train the toy speaker encoder");
  demo->add_option("--objective", objective, "ge2e | bce");
  auto* pred = app.add_subcommand("predict", "Score pairs with a saved checkpoint");
  add_data_options(pred, data);
  pred->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
  pred->add_option("--source", source, "Source embedding id");
  pred->add_option("--reference", reference, "Reference embedding id");
  pred->add_option("--ids", ids, "Example ids (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;

  try {
    const json cfg = load_config(g);
    Outcome o;
    if (synth->parsed()) {
      o = cmd_synth(g, cfg);
    } else if (baseline->parsed()) {
      o = cmd_baseline(g, data, metric, normalize);
    } else if (cv->parsed()) {
      o = cmd_cv(g, cfg, data, loss);
    } else if (ub->parsed()) {
      o = cmd_upper_bound(g, cfg, data,
                          trials_opt->count() ? std::optional<std::size_t>(trials_value) : std::nullopt);
    } else if (pieces->parsed()) {
      o = cmd_pieces(g, cfg, data, loss, jitter_opt->count() ? std::optional<double>(jitter_value) : std::nullopt,
                     per_utt_opt->count() ? std::optional<std::size_t>(per_utt_value) : std::nullopt);
    } else if (demo->parsed()) {
      o = cmd_embedder_demo(g, cfg, objective);
    } else if (pred->parsed()) {
      o = cmd_predict(g, data, checkpoint, source, reference, ids);
    }
    o.manifest.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    OutDir(g.out).write("manifest.json", dump_json(to_json(o.manifest)));
    std::cout << o.stdout_json.dump() << std::endl;
    return 0;
  } catch (const Error& e) {
    print_error(std::string(to_string(e.code())), e.what());
  } catch (const std::exception& e) {
    print_error("internal", e.what());
  }
  return 1;
}
