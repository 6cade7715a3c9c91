#include "autocl/training.hpp"

#include <cstring>
#include <map>
#include <sstream>

#include "autocl/config.hpp"
#include "autocl/pipeline.hpp"
#include "binary_io.hpp"

namespace autocl {

using json = nlohmann::json;
namespace fs = std::filesystem;

EarlyStopDecision early_stop_update(TrainState& state, double epoch_loss, int patience, int max_epochs) {
  EarlyStopDecision d;
  ++state.epoch;
  state.history.push_back(epoch_loss);
  if (epoch_loss < state.best_loss) {
    state.best_loss = epoch_loss;
    state.best_epoch = state.epoch;
    state.epochs_since_best = 0;
    d.improved = true;
  } else {
    ++state.epochs_since_best;
  }
  d.stop = state.epochs_since_best >= patience || state.epoch >= max_epochs;
  return d;
}

ModelSpec spec_for(const WindowedDataset& dataset, ModelSpec base) {
  base.window = dataset.window_size();
  base.channels = dataset.num_channels();
  base.validate();
  return base;
}

namespace {

ParamRefs<float> collect(AutoclModel<float>& model, bool xi_only) {
  ParamRefs<float> refs;
  auto add = [&](nn::Param<float>& p) { refs.push_back(&p); };
  if (xi_only) {
    model.visit_xi(add);
  } else {
    model.visit_params(add);
  }
  return refs;
}

std::string describe_components(double loss, double nt, const std::optional<double>& cr) {
  std::ostringstream s;
  s << "loss=" << loss << " nt_xent=" << nt;
  if (cr) s << " cr=" << *cr;
  return s.str();
}

// Shared epoch/early-stopping loop. `step` runs one batch (gradients
// accumulated into the model) and reports its loss components.
struct BatchLoss {
  double loss = 0, nt_xent = 0, mean_pearson = 0, mean_abs_pearson = 0;
  std::optional<double> cr;
};

template <typename Step>
Checkpoint run_training(const WindowedDataset& dataset, const ModelSpec& spec, const TrainConfig& cfg, const EpochCallback& on_epoch,
                        Step&& step) {
  cfg.validate();
  if (dataset.num_windows() < cfg.batch_size)
    throw TrainingError("dataset has " + std::to_string(dataset.num_windows()) + " windows, fewer than one batch of " +
                        std::to_string(cfg.batch_size));
  if (dataset.window_size() != spec.window || dataset.num_channels() != spec.channels)
    throw TrainingError("dataset window shape does not match the model spec");

  Checkpoint ckpt;
  ckpt.spec = spec;
  ckpt.config = cfg;
  ckpt.model = init_model<float>(spec, cfg.seed);
  AutoclModel<float>& model = ckpt.model;
  AutoclModel<float> best = model;

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto all_params = collect(model, false);
  const auto xi_params = collect(model, true);
  AdamState<float> adam;
  AdamConfig adam_cfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay, cfg.decay_mode};

  TrainState state;
  const Index batches = dataset.num_windows() / cfg.batch_size;  // incomplete last batch dropped
  for (;;) {
    const auto order = rng.permutation(static_cast<std::size_t>(dataset.num_windows()));
    BatchLoss sum;
    bool any_cr = false;
    for (Index b = 0; b < batches; ++b) {
      const auto first = order.begin() + static_cast<std::ptrdiff_t>(b * cfg.batch_size);
      std::vector<std::size_t> idx(first, first + static_cast<std::ptrdiff_t>(cfg.batch_size));
      Sequences<float> x = gather(dataset.samples, idx);
      model.zero_grad();
      BatchLoss bl = step(model, x, rng);
      if (!std::isfinite(bl.loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(state.epoch + 1) + ", batch " + std::to_string(b) + ": " +
                            describe_components(bl.loss, bl.nt_xent, bl.cr));
      if (cfg.grad_clip > 0.0) clip_grad_norm(xi_params, cfg.grad_clip);
      try {
        adam_step(all_params, adam, adam_cfg);
      } catch (const std::domain_error& e) {
        throw TrainingError("epoch " + std::to_string(state.epoch + 1) + ", batch " + std::to_string(b) + ": " + e.what() + " (" +
                            describe_components(bl.loss, bl.nt_xent, bl.cr) + ")");
      }
      sum.loss += bl.loss;
      sum.nt_xent += bl.nt_xent;
      sum.mean_pearson += bl.mean_pearson;
      sum.mean_abs_pearson += bl.mean_abs_pearson;
      if (bl.cr) {
        any_cr = true;
        sum.cr = sum.cr.value_or(0.0) + *bl.cr;
      }
    }
    const auto nb = static_cast<double>(batches);
    EpochRecord rec;
    rec.loss = sum.loss / nb;
    rec.nt_xent = sum.nt_xent / nb;
    if (any_cr) rec.cr = *sum.cr / nb;
    rec.mean_pearson = sum.mean_pearson / nb;
    rec.mean_abs_pearson = sum.mean_abs_pearson / nb;

    const auto decision = early_stop_update(state, rec.loss, cfg.patience, cfg.max_epochs);
    rec.epoch = state.epoch;
    rec.epochs_since_best = state.epochs_since_best;
    if (decision.improved) best = model;
    ckpt.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (decision.stop) break;
  }
  ckpt.best_epoch = state.best_epoch;
  ckpt.model = std::move(best);
  return ckpt;
}

}  // namespace

Checkpoint pretrain_autocl(const WindowedDataset& dataset, const ModelSpec& spec, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  TrainConfig c = cfg;
  c.method = Method::autocl;
  return run_training(dataset, spec, c, on_epoch, [&](AutoclModel<float>& model, const Sequences<float>& x, Rng& rng) {
    auto r = autocl_step(model, x, c.loss, rng);
    BatchLoss bl;
    bl.loss = r.value;
    bl.nt_xent = r.nt_xent;
    if (r.pearson) bl.cr = *r.pearson;
    bl.mean_pearson = r.mean_pearson;
    bl.mean_abs_pearson = r.mean_abs_pearson;
    return bl;
  });
}

Checkpoint pretrain_simclr(const WindowedDataset& dataset, const ModelSpec& spec, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  TrainConfig c = cfg;
  c.method = Method::simclr;
  return run_training(dataset, spec, c, on_epoch, [&](AutoclModel<float>& model, const Sequences<float>& x, Rng& rng) {
    auto [va, vb] = augment::make_views(x, c.aug_a, c.aug_b, rng);
    BatchLoss bl;
    bl.loss = simclr_step(model, va, vb, c.loss, rng);
    bl.nt_xent = bl.loss;
    return bl;
  });
}

Checkpoint pretrain(const WindowedDataset& dataset, const ModelSpec& spec, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  return cfg.method == Method::autocl ? pretrain_autocl(dataset, spec, cfg, on_epoch) : pretrain_simclr(dataset, spec, cfg, on_epoch);
}

// ---------------------------------------------------------------- checkpoint archive
//
// Layout: "AUTOCLCK" | u32 version | u64 header length | header JSON | float32-LE arrays.

namespace {

constexpr char kMagic[8] = {'A', 'U', 'T', 'O', 'C', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename Fn>
void visit_arrays(AutoclModel<float>& model, Fn&& fn) {
  model.visit_params([&](nn::Param<float>& p) { fn(p.name, p.value, "param"); });
  model.visit_buffers([&](nn::Buffer<float>& b) { fn(b.name, b.value, "buffer"); });
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  AutoclModel<float> model = ckpt.model;
  json header;
  header["format"] = "autocl-checkpoint";
  header["version"] = kVersion;
  header["spec"] = to_json(ckpt.spec);
  header["config"] = to_json(ckpt.config);
  header["best_epoch"] = ckpt.best_epoch;
  header["history"] = json::array();
  for (const auto& r : ckpt.history) header["history"].push_back(to_json(r));
  header["arrays"] = json::array();

  std::string payload;
  std::size_t offset = 0;
  visit_arrays(model, [&](const std::string& name, const Mat<float>& v, const char* kind) {
    header["arrays"].push_back({{"name", name}, {"kind", kind}, {"rows", v.rows()}, {"cols", v.cols()}, {"offset", offset}});
    io::append_le<float>(payload, std::span<const float>(v.data(), static_cast<std::size_t>(v.size())));
    offset += static_cast<std::size_t>(v.size());
  });

  const std::string head = header.dump();
  std::string bytes(kMagic, sizeof(kMagic));
  io::append_le<std::uint32_t>(bytes, kVersion);
  io::append_le<std::uint64_t>(bytes, head.size());
  bytes += head;
  bytes += payload;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_file(path, bytes);
}

Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw IntegrityError("checkpoint not found: " + path.string());
  const std::string bytes = io::read_file(path);
  constexpr std::size_t prefix = sizeof(kMagic) + 4 + 8;
  if (bytes.size() < prefix || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IntegrityError("not an AutoCL checkpoint: " + path.string());
  const auto version = io::decode_le<std::uint32_t>(bytes.data() + 8, 1)[0];
  if (version != kVersion) throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  const auto head_len = io::decode_le<std::uint64_t>(bytes.data() + 12, 1)[0];
  if (bytes.size() < prefix + head_len) throw IntegrityError("checkpoint header truncated");

  json header;
  try {
    header = json::parse(bytes.substr(prefix, head_len));
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const char* payload = bytes.data() + prefix + head_len;
  const std::size_t payload_floats = (bytes.size() - prefix - head_len) / sizeof(float);

  Checkpoint ckpt;
  ckpt.spec = model_spec_from_json(header.at("spec"));
  ckpt.config = train_config_from_json(header.at("config"));
  ckpt.best_epoch = header.at("best_epoch").get<int>();
  for (const auto& r : header.at("history")) ckpt.history.push_back(epoch_record_from_json(r));
  ckpt.model = AutoclModel<float>(ckpt.spec);

  std::map<std::string, json> arrays;
  for (const auto& a : header.at("arrays")) arrays[a.at("name").get<std::string>()] = a;
  std::size_t restored = 0;
  visit_arrays(ckpt.model, [&](const std::string& name, Mat<float>& v, const char*) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw IntegrityError("checkpoint is missing array " + name);
    const auto rows = it->second.at("rows").get<Index>();
    const auto cols = it->second.at("cols").get<Index>();
    const auto off = it->second.at("offset").get<std::size_t>();
    if (rows != v.rows() || cols != v.cols()) throw IntegrityError("checkpoint array " + name + " has the wrong shape");
    if (off + static_cast<std::size_t>(rows * cols) > payload_floats) throw IntegrityError("checkpoint array " + name + " is truncated");
    const auto values = io::decode_le<float>(payload + off * sizeof(float), static_cast<std::size_t>(rows * cols));
    std::copy(values.begin(), values.end(), v.data());
    ++restored;
  });
  if (restored != arrays.size()) throw IntegrityError("checkpoint has arrays the model does not define");
  return ckpt;
}

}  // namespace autocl
