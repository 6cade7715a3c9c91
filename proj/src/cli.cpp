#include "autocl/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "autocl/config.hpp"
#include "autocl/eval.hpp"
#include "autocl/training.hpp"

namespace autocl::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

json parse_value(const std::string& raw) {
  const std::string v = trim(raw);
  try {
    return json::parse(v);
  } catch (const json::exception&) {
    return v;  // bare strings such as E or data/syn
  }
}

json finetune_defaults() {
  const FinetuneConfig f;
  return {{"epochs", f.epochs}, {"batch_size", f.batch_size}, {"lr", f.lr},     {"weight_decay", f.weight_decay},
          {"decay_mode", "decoupled"}, {"seed", f.seed},      {"fraction", 0.2}};
}

FinetuneConfig finetune_from_json(const json& j) {
  FinetuneConfig f;
  f.epochs = j.at("epochs").get<int>();
  f.batch_size = j.at("batch_size").get<Index>();
  f.lr = j.at("lr").get<double>();
  f.weight_decay = j.at("weight_decay").get<double>();
  const auto mode = j.at("decay_mode").get<std::string>();
  if (mode != "decoupled" && mode != "l2") throw std::invalid_argument("finetune.decay_mode must be 'decoupled' or 'l2'");
  f.decay_mode = mode == "decoupled" ? WeightDecayMode::decoupled : WeightDecayMode::l2;
  f.seed = j.at("seed").get<std::uint64_t>();
  return f;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

std::string require_path(const json& cfg, const char* key, const char* flag) {
  if (cfg.at(key).is_null()) throw UsageError(std::string("missing ") + flag);
  return cfg.at(key).get<std::string>();
}

fs::path checkpoint_path(const json& cfg) {
  if (!cfg.at("checkpoint").is_null()) return cfg["checkpoint"].get<std::string>();
  return fs::path(require_path(cfg, "out", "--out")) / "checkpoint.bin";
}

WindowedDataset load_data(const json& cfg) { return load_container(require_path(cfg, "data", "--data")); }

// ---------------------------------------------------------------- commands

void cmd_prepare(json& cfg, std::ostream& out) {
  const std::string source = require_path(cfg, "source", "--source");
  const fs::path dest = require_path(cfg, "out", "--out");
  const auto colon = source.find(':');
  if (colon == std::string::npos) throw UsageError("--source must be ucihar:<path> or synthetic:<spec-file>");
  const std::string kind = source.substr(0, colon), arg = source.substr(colon + 1);
  WindowedDataset ds;
  if (kind == "ucihar") {
    ds = import_ucihar(arg);
  } else if (kind == "synthetic") {
    ds = generate_synthetic(synthetic_spec_from_json(read_config_file(arg)));
  } else {
    throw UsageError("unknown source kind '" + kind + "' (expected ucihar or synthetic)");
  }
  ds.manifest.source = source;
  save_container(ds, dest);
  out << manifest_to_json(ds.manifest, ds.num_windows(), ds.num_channels(), ds.labeled()) << "\n";
}

void cmd_pretrain(json& cfg, std::ostream& out, std::ostream& err) {
  const fs::path run = require_path(cfg, "out", "--out");
  const WindowedDataset ds = load_data(cfg);
  const TrainConfig tc = train_config_from_json(cfg["train"]);
  const ModelSpec spec = spec_for(ds, model_spec_from_json(cfg["model"]));
  cfg["model"] = to_json(spec);
  fs::create_directories(run);
  write_text(run / "config.resolved.json", cfg.dump(2) + "\n");

  std::ofstream log(run / "train_log.jsonl", std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + (run / "train_log.jsonl").string());
  log.precision(17);
  const Checkpoint ckpt = pretrain(ds, spec, tc, [&](const EpochRecord& r) {
    log << to_json(r).dump() << "\n" << std::flush;
    err << "epoch " << r.epoch << " loss " << r.loss << "\n";
  });
  save_checkpoint(ckpt, checkpoint_path(cfg));
  out << "pretrained " << to_string(tc.method) << " for " << ckpt.history.size() << " epochs, best epoch " << ckpt.best_epoch << "\n";
}

// Evaluate/visualize inherit the model and training sections from the
// checkpoint so the resolved config describes the whole run.
Checkpoint load_for(json& cfg) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path(cfg));
  cfg["model"] = to_json(ckpt.spec);
  cfg["train"] = to_json(ckpt.config);
  return ckpt;
}

void cmd_evaluate(json& cfg, std::ostream& out) {
  const fs::path run = require_path(cfg, "out", "--out");
  const WindowedDataset ds = load_data(cfg);
  if (!ds.labeled()) throw std::invalid_argument("evaluate needs a labeled container");
  Checkpoint ckpt = load_for(cfg);
  const FinetuneConfig fc = finetune_from_json(cfg["finetune"]);
  const double fraction = cfg["finetune"]["fraction"].get<double>();
  write_text(run / "config.resolved.json", cfg.dump(2) + "\n");

  const auto [tune, test] = split_few_shot(ds, fraction, fc.seed);
  const auto result = finetune(ckpt.model.encoder, ckpt.spec, tune, test, fc);
  const EvalReport& report = result.second;
  write_text(run / "eval_report.json", eval_report_json(report) + "\n");
  write_text(run / "confusion.csv", confusion_csv(report.confusion));
  out << "top10_mean_accuracy " << report.top10_mean_accuracy << "\n";
}

void cmd_visualize(json& cfg, std::ostream& out) {
  const fs::path run = require_path(cfg, "out", "--out");
  const json& v = cfg["visualize"];
  const bool emb = v.at("embeddings").get<bool>(), views = v.at("aug_views").get<bool>();
  if (!emb && !views) throw UsageError("visualize needs --embeddings and/or --aug-views");
  const WindowedDataset ds = load_data(cfg);
  Checkpoint ckpt = load_for(cfg);
  const auto source_name = v.at("embedding_source").get<std::string>();
  if (source_name != "encoder" && source_name != "projector") throw std::invalid_argument("visualize.embedding_source must be encoder or projector");
  write_text(run / "config.resolved.json", cfg.dump(2) + "\n");
  if (emb) {
    export_embeddings(ckpt.model, ds, run / "embeddings.csv", source_name == "encoder" ? EmbeddingSource::encoder : EmbeddingSource::projector);
    out << "wrote " << (run / "embeddings.csv").string() << "\n";
  }
  if (views) {
    export_augmentation_views(ckpt.model, ds, v.at("k").get<Index>(), v.at("seed").get<std::uint64_t>(), run / "aug_views.csv");
    out << "wrote " << (run / "aug_views.csv").string() << "\n";
  }
}

}  // namespace

json default_run_config() {
  json model = to_json(ModelSpec{});
  model["gru_hidden"] = 0;  // 0: four times the channel count
  return {{"command", nullptr},
          {"data", nullptr},
          {"out", nullptr},
          {"checkpoint", nullptr},
          {"source", nullptr},
          {"model", model},
          {"train", to_json(TrainConfig{})},
          {"finetune", finetune_defaults()},
          {"visualize", {{"embeddings", false}, {"aug_views", false}, {"k", 3}, {"seed", 0}, {"embedding_source", "encoder"}}}};
}

json read_config_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config file " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return json::parse(text);
    } catch (const json::exception& e) {
      throw std::invalid_argument(path.string() + ": " + e.what());
    }
  }
  json out = json::object();
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    if (t.find('=') == std::string::npos) throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    apply_assignment(out, t);
  }
  return out;
}

void merge_config(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw std::invalid_argument("config" + (where.empty() ? "" : " section " + where) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw std::invalid_argument("unknown config key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object() && value.is_object()) {
      merge_config(slot, value, path);
    } else if (slot.is_object()) {
      throw std::invalid_argument("config key '" + path + "' must be an object");
    } else {
      slot = value;
    }
  }
}

void apply_assignment(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("expected key=value, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  if (key.empty()) throw std::invalid_argument("empty key in '" + assignment + "'");
  json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = parse_value(assignment.substr(eq + 1));
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"AutoCL: contrastive pretraining with a learned augmentation generator"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::string> data, out_dir, checkpoint, source;
  auto common = [&](CLI::App* sub, bool needs_data) {
    sub->add_option("--config", config_file, "JSON or key=value config file");
    sub->add_option("--set", sets, "Override a config key, e.g. --set train.lr=1e-4")->take_all();
    sub->add_option("--out", out_dir, "Output directory");
    if (needs_data) sub->add_option("--data", data, "Dataset container directory");
  };

  auto* prepare = app.add_subcommand("prepare", "Import or generate a dataset container");
  common(prepare, false);
  prepare->add_option("--source", source, "ucihar:<path> or synthetic:<spec-file>");

  auto* pre = app.add_subcommand("pretrain", "Self-supervised pretraining");
  common(pre, true);
  std::optional<std::string> method, variant, aug;
  std::optional<int> epochs, patience;
  std::optional<Index> batch;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  bool no_sg = false, no_cr = false;
  pre->add_option("--method", method, "autocl or simclr");
  pre->add_flag("--no-sg", no_sg, "Disable stop-gradient");
  pre->add_flag("--no-cr", no_cr, "Disable correlation reduction");
  pre->add_option("--variant", variant, "Generator input: E (embedding) or D (data)");
  pre->add_option("--aug", aug, "SimCLR augmentation pair, e.g. SP");
  pre->add_option("--epochs", epochs, "Maximum number of epochs");
  pre->add_option("--patience", patience, "Early-stopping patience");
  pre->add_option("--batch-size", batch, "Batch size");
  pre->add_option("--lr", lr, "Learning rate");
  pre->add_option("--seed", seed, "Random seed");
  pre->add_option("--checkpoint", checkpoint, "Checkpoint path (default <out>/checkpoint.bin)");

  auto* ev = app.add_subcommand("evaluate", "Few-shot fine-tuning on a frozen encoder");
  common(ev, true);
  std::optional<double> fraction;
  std::optional<int> ft_epochs;
  std::optional<std::uint64_t> ft_seed;
  ev->add_option("--checkpoint", checkpoint, "Checkpoint path (default <out>/checkpoint.bin)");
  ev->add_option("--fraction", fraction, "Labelled fraction used for fine-tuning (default 0.2)");
  ev->add_option("--epochs", ft_epochs, "Fine-tuning epochs");
  ev->add_option("--seed", ft_seed, "Split and head seed");

  auto* vis = app.add_subcommand("visualize", "Export embeddings and generated views");
  common(vis, true);
  bool emb = false, views = false;
  std::optional<Index> k;
  std::optional<std::uint64_t> vis_seed;
  std::optional<std::string> emb_source;
  vis->add_option("--checkpoint", checkpoint, "Checkpoint path (default <out>/checkpoint.bin)");
  vis->add_flag("--embeddings", emb, "Write embeddings.csv");
  vis->add_flag("--aug-views", views, "Write aug_views.csv");
  vis->add_option("-k", k, "Number of windows for --aug-views");
  vis->add_option("--seed", vis_seed, "Window sampling seed");
  vis->add_option("--embedding-source", emb_source, "encoder or projector");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return 1;
  }

  try {
    json cfg = default_run_config();
    if (!config_file.empty()) merge_config(cfg, read_config_file(config_file));
    for (const auto& s : sets) {
      json patch = json::object();
      apply_assignment(patch, s);
      merge_config(cfg, patch);
    }
    if (data) cfg["data"] = *data;
    if (out_dir) cfg["out"] = *out_dir;
    if (checkpoint) cfg["checkpoint"] = *checkpoint;
    if (source) cfg["source"] = *source;

    if (prepare->parsed()) {
      cfg["command"] = "prepare";
      cmd_prepare(cfg, out);
    } else if (pre->parsed()) {
      cfg["command"] = "pretrain";
      TrainConfig tc = train_config_from_json(cfg["train"]);
      if (method) tc.method = parse_method(*method);
      if (tc.method == Method::autocl && aug) throw UsageError("--aug applies to simclr only; autocl learns its own augmentation");
      if (tc.method == Method::simclr && (no_sg || no_cr || variant))
        throw UsageError("--no-sg, --no-cr and --variant apply to autocl only");
      if (aug) std::tie(tc.aug_a, tc.aug_b) = augment::parse_pair(*aug);
      if (no_sg) tc.loss.sg_enabled = false;
      if (no_cr) tc.loss.cr_enabled = false;
      if (epochs) tc.max_epochs = *epochs;
      if (patience) tc.patience = *patience;
      if (batch) tc.batch_size = *batch;
      if (lr) tc.lr = *lr;
      if (seed) tc.seed = *seed;
      tc.validate();
      cfg["train"] = to_json(tc);
      if (variant) cfg["model"]["variant"] = to_string(parse_variant(*variant));
      cmd_pretrain(cfg, out, err);
    } else if (ev->parsed()) {
      cfg["command"] = "evaluate";
      if (fraction) cfg["finetune"]["fraction"] = *fraction;
      if (ft_epochs) cfg["finetune"]["epochs"] = *ft_epochs;
      if (ft_seed) cfg["finetune"]["seed"] = *ft_seed;
      cmd_evaluate(cfg, out);
    } else if (vis->parsed()) {
      cfg["command"] = "visualize";
      if (emb) cfg["visualize"]["embeddings"] = true;
      if (views) cfg["visualize"]["aug_views"] = true;
      if (k) cfg["visualize"]["k"] = *k;
      if (vis_seed) cfg["visualize"]["seed"] = *vis_seed;
      if (emb_source) cfg["visualize"]["embedding_source"] = *emb_source;
      cmd_visualize(cfg, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace autocl::cli
