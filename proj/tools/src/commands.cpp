#include "stripereid/cli/commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "stripereid/cli/activations.hpp"
#include "stripereid/rng.hpp"
#include "stripereid/synthdata.hpp"

namespace fs = std::filesystem;

namespace stripereid::cli {

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

/// Creates `out`, or reuses it when it is empty, when resuming, or when
/// --force is given for a directory this tool wrote before.
void prepare_out(const fs::path& out, bool force, bool resume = false) {
  if (!fs::exists(out)) {
    fs::create_directories(out);
    return;
  }
  if (!fs::is_directory(out)) throw std::runtime_error("'" + out.string() + "' exists and is not a directory");
  if (fs::is_empty(out) || resume) return;
  if (!force) throw std::runtime_error("output directory '" + out.string() + "' is not empty; pass --force to overwrite");
  if (!fs::exists(out / kConfigEcho)) {
    throw std::runtime_error("refusing to clear '" + out.string() + "': it has no " + kConfigEcho +
                             " and was not written by this tool");
  }
  for (const auto& entry : fs::directory_iterator(out)) fs::remove_all(entry.path());
}

std::vector<Setting> common_train_settings() {
  return {
      {"data", "", "dataset directory written by gendata", false, true},
      {"out", "", "output directory", false, true},
      {"epochs", "40", "total training epochs"},
      {"lr", "0.01", "learning rate after warmup"},
      {"warmup", "0.125", "warmup length as a fraction of the run"},
      {"milestones", "0.5,0.75", "decay points as fractions of the run"},
      {"decay", "0.1", "learning-rate factor applied at each milestone"},
      {"p", "8", "identities per batch"},
      {"k", "4", "images per identity in a batch"},
      {"margin", "0.3", "triplet margin"},
      {"epsilon", "0.1", "label smoothing"},
      {"drop_ratio", "0.3", "fraction of feature rows dropped"},
      {"drop_p", "2", "activation exponent"},
      {"global_dim", "128", "global stream feature size"},
      {"drop_dim", "128", "drop stream feature size"},
      {"flip_prob", "0.5", "horizontal flip probability"},
      {"zoom_min", "0.9", "smallest zoom factor"},
      {"zoom_max", "1.1", "largest zoom factor"},
      {"erase_prob", "0.5", "random erasing probability"},
      {"erase_area_min", "0.02", "smallest erased area fraction"},
      {"erase_area_max", "0.2", "largest erased area fraction"},
      {"rerank", "false", "also report re-ranked metrics", true},
      {"k1", "20", "re-ranking k1 (capped at half the gallery)"},
      {"k2", "6", "re-ranking k2"},
      {"lambda", "0.3", "re-ranking weight of the original distance"},
      {"max_rank", "10", "longest CMC rank reported"},
      {"checkpoint_every", "10", "epochs between checkpoints (0 = only at the end)"},
      {"resume", "false", "continue from checkpoints found in --out", true},
      {"force", "false", "overwrite a previous output directory", true},
      {"quiet", "false", "suppress per-epoch progress", true},
  };
}

std::optional<eval::RerankParams> rerank_params(const RunConfig& rc) {
  if (!rc.get_bool("rerank")) return std::nullopt;
  eval::RerankParams p;
  p.k1 = rc.get_int("k1");
  p.k2 = rc.get_int("k2");
  p.lambda = rc.get_double("lambda");
  return p;
}

struct SeedRun {
  eval::RunResult result;
  std::uint64_t augment_digest = 0;
};

SeedRun run_seed(const train::TrainingSet& data, const train::TrainConfig& tc, const fs::path& dir, const RunConfig& rc,
                 std::ostream& log) {
  fs::create_directories(dir);
  train::Trainer trainer(tc, data);
  const auto ckpt = dir / "checkpoint.ckpt";
  if (rc.get_bool("resume") && fs::exists(ckpt)) {
    trainer.load_checkpoint(ckpt);
    log << "resumed " << dir.string() << " at epoch " << trainer.next_epoch() << "\n";
  }
  const auto every = rc.get_int("checkpoint_every");
  const bool quiet = rc.get_bool("quiet");
  const auto total = tc.schedule.total_epochs;
  trainer.fit([&](const train::EpochMetrics& m) {
    if (!quiet) {
      log << net::to_string(tc.variant) << " seed " << tc.seed << " epoch " << m.epoch + 1 << "/" << total << " lr "
          << fmt(m.lr, "%.3g") << " loss " << fmt(m.total_loss, "%.4f") << "\n";
      log.flush();
    }
    if (every > 0 && (m.epoch + 1) % every == 0 && m.epoch + 1 < total) trainer.save_checkpoint(ckpt);
  });
  trainer.save_checkpoint(ckpt);
  write_text(dir / "history.csv", train::format_history(trainer.history()));

  auto& model = trainer.model();
  model.set_mode(Mode::eval);
  const auto query = train::embed_split(model, data, synth::Split::query);
  const auto gallery = train::embed_split(model, data, synth::Split::gallery);
  auto params = rerank_params(rc);
  if (params) *params = params->scaled_for(gallery.size());
  SeedRun run;
  run.result = eval::evaluate_run(query, gallery, params, rc.get_int("max_rank"));
  write_text(dir / "results.csv", eval::format_results(run.result));
  run.augment_digest = 0xcbf29ce484222325ULL;
  for (const auto& h : trainer.history()) {
    run.augment_digest = fnv1a64(std::string_view(reinterpret_cast<const char*>(&h.augment_digest), sizeof h.augment_digest),
                                 run.augment_digest);
  }
  return run;
}

std::string summary_csv(const std::vector<eval::RunResult>& runs) {
  std::map<std::string, std::vector<double>> values;
  std::vector<std::string> order;
  auto add = [&](const std::string& k, double v) {
    if (!values.count(k)) order.push_back(k);
    values[k].push_back(v);
  };
  for (const auto& r : runs) {
    add("mAP", r.raw.mean_ap);
    for (const std::int64_t k : {1, 5, 10}) {
      if (k <= static_cast<std::int64_t>(r.raw.cmc.size())) add("rank" + std::to_string(k), r.raw.rank(k));
    }
    if (r.reranked) {
      add("rerank_mAP", r.reranked->mean_ap);
      add("rerank_rank1", r.reranked->rank(1));
    }
  }
  std::string out = "metric,mean,std,n\n";
  for (const auto& k : order) {
    const auto s = summarize(k, values[k]);
    out += k + "," + fmt(s.mean) + "," + fmt(s.std) + "," + std::to_string(s.n) + "\n";
  }
  return out;
}

void print_result(std::ostream& log, const std::string& label, const eval::EvalResult& r) {
  log << label << " mAP " << fmt(r.mean_ap, "%.4f") << " rank-1 " << fmt(r.rank(1), "%.4f");
  for (const std::int64_t k : {5, 10}) {
    if (k <= static_cast<std::int64_t>(r.cmc.size())) log << " rank-" << k << " " << fmt(r.rank(k), "%.4f");
  }
  log << "\n";
}

}  // namespace

MetricSummary summarize(const std::string& metric, const std::vector<double>& values) {
  MetricSummary s{metric, 0.0, 0.0, values.size()};
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (const double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Schemas

std::vector<Setting> gendata_schema() {
  return {
      {"out", "", "output directory", false, true},
      {"ids", "32", "number of identities"},
      {"cams", "4", "number of cameras"},
      {"per", "4", "images per identity and camera"},
      {"occlusion", "0", "probability of a gray occluder over one band"},
      {"height", "64", "image height"},
      {"width", "32", "image width"},
      {"noise", "0.03", "pixel noise standard deviation"},
      {"seed", "1", "generator seed"},
      {"force", "false", "overwrite a previous output directory", true},
  };
}

std::vector<Setting> train_schema() {
  auto s = common_train_settings();
  s.insert(s.begin() + 2, {"variant", "full", "full | no-drop | no-reg | baseline-bdb"});
  s.insert(s.begin() + 3, {"seed", "1", "training seed"});
  s.insert(s.begin() + 4, {"seeds", "", "comma-separated seeds; overrides --seed and writes summary.csv"});
  return s;
}

std::vector<Setting> eval_schema() {
  return {
      {"data", "", "dataset directory written by gendata", false, true},
      {"out", "", "output directory", false, true},
      {"checkpoint", "", "checkpoint written by train"},
      {"query_embeddings", "", "query embedding CSV, used instead of a checkpoint"},
      {"gallery_embeddings", "", "gallery embedding CSV, used instead of a checkpoint"},
      {"rerank", "false", "also report re-ranked metrics", true},
      {"k1", "20", "re-ranking k1 (capped at half the gallery)"},
      {"k2", "6", "re-ranking k2"},
      {"lambda", "0.3", "re-ranking weight of the original distance"},
      {"max_rank", "10", "longest CMC rank reported"},
      {"force", "false", "overwrite a previous output directory", true},
  };
}

std::vector<Setting> activations_schema() {
  return {
      {"checkpoint", "", "checkpoint written by train", false, true},
      {"out", "", "output directory", false, true},
      {"data", "", "dataset directory; images are taken from --split"},
      {"split", "query", "dataset split to export"},
      {"limit", "8", "number of dataset images to export"},
      {"inputs", "", "comma-separated PPM files, used instead of --data"},
      {"threshold", "0.5", "mask threshold as a fraction of the maximum activation"},
      {"show_dropmask", "false", "also export the drop mask", true},
      {"force", "false", "overwrite a previous output directory", true},
  };
}

std::vector<Setting> ablation_schema() {
  auto s = common_train_settings();
  s.insert(s.begin() + 2, {"seeds", "1,2,3,4,5", "comma-separated seeds shared by every variant"});
  return s;
}

train::TrainConfig train_config_from(const RunConfig& rc) {
  train::TrainConfig tc;
  tc.schedule.total_epochs = rc.get_int("epochs");
  tc.schedule.base_lr = rc.get_double("lr");
  tc.schedule.warmup_fraction = rc.get_double("warmup");
  tc.schedule.milestones = rc.get_double_list("milestones");
  tc.schedule.decay_factor = rc.get_double("decay");
  tc.batch.p = rc.get_int("p");
  tc.batch.k = rc.get_int("k");
  tc.margin = rc.get_double("margin");
  tc.epsilon = rc.get_double("epsilon");
  tc.drop.height_ratio = rc.get_double("drop_ratio");
  tc.drop.p = rc.get_double("drop_p");
  tc.global_dim = rc.get_int("global_dim");
  tc.drop_dim = rc.get_int("drop_dim");
  tc.augment.flip_prob = rc.get_double("flip_prob");
  tc.augment.zoom_min = rc.get_double("zoom_min");
  tc.augment.zoom_max = rc.get_double("zoom_max");
  tc.augment.erase_prob = rc.get_double("erase_prob");
  tc.augment.erase_area_min = rc.get_double("erase_area_min");
  tc.augment.erase_area_max = rc.get_double("erase_area_max");
  tc.validate();
  return tc;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_gendata(const RunConfig& rc, std::ostream& log) {
  synth::GeneratorConfig g;
  g.num_ids = rc.get_int("ids");
  g.num_cams = rc.get_int("cams");
  g.per_id_per_cam = rc.get_int("per");
  g.occlusion_prob = rc.get_double("occlusion");
  g.height = rc.get_int("height");
  g.width = rc.get_int("width");
  g.noise_std = rc.get_double("noise");
  g.seed = rc.get_u64("seed");
  g.validate();
  const fs::path out = rc.get("out");
  const auto dataset = synth::generate_dataset(g);
  prepare_out(out, rc.get_bool("force"));
  synth::write_dataset(dataset, out);
  write_text(out / kConfigEcho, rc.echo("gendata"));
  log << "wrote " << dataset.images.size() << " images to " << out.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc, std::ostream& log) {
  auto tc = train_config_from(rc);
  tc.variant = net::parse_variant(rc.get("variant"));
  const fs::path out = rc.get("out");
  const auto data = train::TrainingSet::load(rc.get("data"));
  const bool multi = rc.has("seeds");
  const auto seeds = multi ? rc.get_u64_list("seeds") : std::vector<std::uint64_t>{rc.get_u64("seed")};
  if (seeds.empty()) throw ConfigError("--seeds lists no seeds");
  // Fail on unusable batch settings before touching the output directory.
  synth::PkSampler(data.manifest, tc.batch, 0);
  prepare_out(out, rc.get_bool("force"), rc.get_bool("resume"));
  write_text(out / kConfigEcho, rc.echo("train"));

  std::vector<eval::RunResult> results;
  for (const auto seed : seeds) {
    tc.seed = seed;
    const auto dir = multi ? out / ("seed_" + std::to_string(seed)) : out;
    const auto run = run_seed(data, tc, dir, rc, log);
    print_result(log, "seed " + std::to_string(seed), run.result.raw);
    if (run.result.reranked) print_result(log, "seed " + std::to_string(seed) + " re-ranked", *run.result.reranked);
    results.push_back(run.result);
  }
  if (multi) write_text(out / "summary.csv", summary_csv(results));
  return 0;
}

int cmd_eval(const RunConfig& rc, std::ostream& log) {
  eval::EmbeddingSet query;
  eval::EmbeddingSet gallery;
  if (rc.has("query_embeddings") || rc.has("gallery_embeddings")) {
    query = eval::load_embeddings(rc.get("query_embeddings"));
    gallery = eval::load_embeddings(rc.get("gallery_embeddings"));
  } else {
    if (!rc.has("checkpoint")) throw ConfigError("eval needs --checkpoint or both embedding files");
    const fs::path ckpt = rc.get("checkpoint");
    if (!fs::exists(ckpt)) throw std::runtime_error("checkpoint '" + ckpt.string() + "' does not exist");
    const auto model = train::load_model(ckpt);
    const auto data = train::TrainingSet::load(rc.get("data"));
    const auto& bb = model.config().backbone;
    if (data.image_height() != bb.input_height || data.image_width() != bb.input_width) {
      throw std::runtime_error("dataset images are " + std::to_string(data.image_height()) + "x" +
                               std::to_string(data.image_width()) + " but the checkpoint expects " +
                               std::to_string(bb.input_height) + "x" + std::to_string(bb.input_width));
    }
    query = train::embed_split(model, data, synth::Split::query);
    gallery = train::embed_split(model, data, synth::Split::gallery);
  }
  auto params = rerank_params(rc);
  if (params) *params = params->scaled_for(gallery.size());
  const auto result = eval::evaluate_run(query, gallery, params, rc.get_int("max_rank"));

  const fs::path out = rc.get("out");
  prepare_out(out, rc.get_bool("force"));
  eval::save_embeddings(query, out / "query_embeddings.csv");
  eval::save_embeddings(gallery, out / "gallery_embeddings.csv");
  write_text(out / "results.csv", eval::format_results(result));
  write_text(out / kConfigEcho, rc.echo("eval"));
  print_result(log, "raw", result.raw);
  if (result.reranked) print_result(log, "re-ranked", *result.reranked);
  return 0;
}

int cmd_activations(const RunConfig& rc, std::ostream& log) {
  const fs::path ckpt = rc.get("checkpoint");
  if (!fs::exists(ckpt)) throw std::runtime_error("checkpoint '" + ckpt.string() + "' does not exist");
  const auto model = train::load_model(ckpt);

  std::vector<std::pair<std::string, ImageF>> inputs;
  if (rc.has("inputs")) {
    std::stringstream ss(rc.get("inputs"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) inputs.emplace_back(fs::path(item).stem().string(), to_float(read_pnm(item)));
    }
  } else if (rc.has("data")) {
    const fs::path root = rc.get("data");
    const auto manifest = synth::load_manifest(root / "manifest.csv");
    const auto limit = rc.get_int("limit");
    for (const auto i : manifest.indices(synth::parse_split(rc.get("split")))) {
      if (static_cast<std::int64_t>(inputs.size()) >= limit) break;
      const auto& rec = manifest.records[i];
      inputs.emplace_back(fs::path(rec.image_path).stem().string(), to_float(read_pnm(root / rec.image_path)));
    }
  } else {
    throw ConfigError("activations needs --inputs or --data");
  }
  if (inputs.empty()) throw ConfigError("activations: no input images selected");

  const double threshold = rc.get_double("threshold");
  const bool show_drop = rc.get_bool("show_dropmask");
  std::vector<std::pair<std::string, ActivationReport>> reports;
  for (const auto& [name, image] : inputs) reports.emplace_back(name, analyze_image(model, image, threshold));

  const fs::path out = rc.get("out");
  prepare_out(out, rc.get_bool("force"));
  std::string csv = "image,row,relevance,dropped\n";
  for (const auto& [name, r] : reports) {
    write_pnm(out / (name + "_activation.pgm"), r.activation);
    write_pnm(out / (name + "_mask.pgm"), r.threshold);
    write_pnm(out / (name + "_overlay.ppm"), r.overlay);
    if (show_drop) write_pnm(out / (name + "_dropmask.pgm"), r.drop_mask);
    for (std::size_t j = 0; j < r.relevance.rows.size(); ++j) {
      const auto row = static_cast<std::int64_t>(j);
      csv += name + "," + std::to_string(j) + "," + fmt(r.relevance.rows[j], "%.17g") + "," +
             (r.mask.keeps_row(row) ? "0" : "1") + "\n";
    }
  }
  write_text(out / "activations.csv", csv);
  write_text(out / kConfigEcho, rc.echo("activations"));
  log << "exported " << reports.size() << " images to " << out.string() << "\n";
  return 0;
}

int cmd_ablation(const RunConfig& rc, std::ostream& log) {
  auto tc = train_config_from(rc);
  const fs::path out = rc.get("out");
  const auto data = train::TrainingSet::load(rc.get("data"));
  const auto seeds = rc.get_u64_list("seeds");
  if (seeds.empty()) throw ConfigError("--seeds lists no seeds");
  synth::PkSampler(data.manifest, tc.batch, 0);
  prepare_out(out, rc.get_bool("force"), rc.get_bool("resume"));
  write_text(out / kConfigEcho, rc.echo("ablation"));

  constexpr std::array<net::Variant, 4> kVariants{net::Variant::full, net::Variant::no_drop, net::Variant::no_reg,
                                                  net::Variant::baseline_bdb};
  std::string table = "variant,map_mean,map_std,rank1_mean,rank1_std,runs\n";
  std::string runs_csv = "variant,seed,map,rank1,augment_digest\n";
  for (const auto variant : kVariants) {
    tc.variant = variant;
    std::vector<double> maps;
    std::vector<double> rank1;
    for (const auto seed : seeds) {
      tc.seed = seed;
      const auto dir = out / std::string(net::to_string(variant)) / ("seed_" + std::to_string(seed));
      const auto run = run_seed(data, tc, dir, rc, log);
      print_result(log, std::string(net::to_string(variant)) + " seed " + std::to_string(seed), run.result.raw);
      maps.push_back(run.result.raw.mean_ap);
      rank1.push_back(run.result.raw.rank(1));
      char digest[24];
      std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(run.augment_digest));
      runs_csv += std::string(net::to_string(variant)) + "," + std::to_string(seed) + "," + fmt(maps.back()) + "," +
                  fmt(rank1.back()) + "," + digest + "\n";
    }
    const auto m = summarize("mAP", maps);
    const auto r = summarize("rank1", rank1);
    table += std::string(net::to_string(variant)) + "," + fmt(m.mean) + "," + fmt(m.std) + "," + fmt(r.mean) + "," +
             fmt(r.std) + "," + std::to_string(m.n) + "\n";
  }
  write_text(out / "runs.csv", runs_csv);
  write_text(out / "ablation.csv", table);
  log << table;
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stripe-dropping person re-identification at desk scale"};
  app.require_subcommand(1);

  struct Command {
    std::string name;
    std::string help;
    std::vector<Setting> schema;
    int (*fn)(const RunConfig&, std::ostream&) = nullptr;
    CLI::App* sub = nullptr;
    std::string config_path;
    std::map<std::string, std::string> values;
    std::map<std::string, bool> flags;
  };
  std::vector<Command> commands(5);
  auto define = [&](std::size_t i, std::string name, std::string help, std::vector<Setting> schema,
                    int (*fn)(const RunConfig&, std::ostream&)) {
    commands[i].name = std::move(name);
    commands[i].help = std::move(help);
    commands[i].schema = std::move(schema);
    commands[i].fn = fn;
  };
  define(0, "gendata", "generate a synthetic dataset", gendata_schema(), &cmd_gendata);
  define(1, "train", "train one variant for one or more seeds", train_schema(), &cmd_train);
  define(2, "eval", "evaluate a checkpoint or embedding files", eval_schema(), &cmd_eval);
  define(3, "activations", "export activation maps and masks", activations_schema(), &cmd_activations);
  define(4, "ablation", "train and compare all four variants", ablation_schema(), &cmd_ablation);

  for (auto& c : commands) {
    c.sub = app.add_subcommand(c.name, c.help);
    c.sub->add_option("--config", c.config_path, "flat key = value file; flags override it");
    for (const auto& s : c.schema) {
      if (s.is_flag) {
        c.sub->add_flag(flag_name(s.key), c.flags[s.key], s.help);
      } else {
        const auto help = s.required ? s.help + " (required)" : s.help + " (default: " + s.default_value + ")";
        c.sub->add_option(flag_name(s.key), c.values[s.key], help)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
      }
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  for (auto& c : commands) {
    if (!c.sub->parsed()) continue;
    try {
      RunConfig rc(c.schema);
      if (!c.config_path.empty()) rc.merge_file(c.config_path);
      for (const auto& s : c.schema) {
        if (c.sub->count(flag_name(s.key)) == 0) continue;
        rc.set(s.key, s.is_flag ? "true" : c.values[s.key]);
      }
      rc.require_complete();
      return c.fn(rc, out);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}

}  // namespace stripereid::cli
