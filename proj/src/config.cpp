#include "autocl/config.hpp"

#include <stdexcept>

namespace autocl {

using json = nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string merge_name(nn::BiMerge m) { return m == nn::BiMerge::sum ? "sum" : "concat"; }

nn::BiMerge parse_merge(const std::string& s) {
  if (s == "sum") return nn::BiMerge::sum;
  if (s == "concat") return nn::BiMerge::concat;
  throw std::invalid_argument("gru_merge must be 'sum' or 'concat', got '" + s + "'");
}

json op_to_json(const augment::AugmentationOp& op) {
  return {{"kind", std::string(1, augment::code(op.kind))}, {"sigma", op.sigma}, {"num_segments", op.num_segments}};
}

augment::AugmentationOp op_from_json(const json& j) {
  reject_unknown_keys(j, {"kind", "sigma", "num_segments"}, "augmentation");
  auto op = augment::parse_op(j.at("kind").get<std::string>().at(0));
  read_if(j, "sigma", op.sigma);
  read_if(j, "num_segments", op.num_segments);
  return op;
}

}  // namespace

json to_json(const ModelSpec& s) {
  return {{"window", s.window},
          {"channels", s.channels},
          {"conv_channels", s.conv_channels},
          {"conv_kernel", s.conv_kernel},
          {"pool", s.pool},
          {"dropout", s.dropout},
          {"proj_hidden", s.proj_hidden},
          {"proj_out", s.proj_out},
          {"gru_layers", s.gru_layers},
          {"gru_hidden", s.hidden_size()},
          {"projector_softmax", s.projector_softmax},
          {"variant", to_string(s.variant)},
          {"gru_merge", merge_name(s.gru_merge)},
          {"head_hidden", s.head_hidden}};
}

ModelSpec model_spec_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"window", "channels", "conv_channels", "conv_kernel", "pool", "dropout", "proj_hidden", "proj_out", "gru_layers",
                       "gru_hidden", "projector_softmax", "variant", "gru_merge", "head_hidden"},
                      "model");
  ModelSpec s;
  read_if(j, "window", s.window);
  read_if(j, "channels", s.channels);
  read_if(j, "conv_channels", s.conv_channels);
  read_if(j, "conv_kernel", s.conv_kernel);
  read_if(j, "pool", s.pool);
  read_if(j, "dropout", s.dropout);
  read_if(j, "proj_hidden", s.proj_hidden);
  read_if(j, "proj_out", s.proj_out);
  read_if(j, "gru_layers", s.gru_layers);
  read_if(j, "gru_hidden", s.gru_hidden);
  read_if(j, "projector_softmax", s.projector_softmax);
  if (j.contains("variant")) s.variant = parse_variant(j["variant"].get<std::string>());
  if (j.contains("gru_merge")) s.gru_merge = parse_merge(j["gru_merge"].get<std::string>());
  read_if(j, "head_hidden", s.head_hidden);
  return s;
}

json to_json(const LossConfig& c) {
  return {{"tau", c.tau},
          {"cr_enabled", c.cr_enabled},
          {"cr_weight", c.cr_weight},
          {"sg_enabled", c.sg_enabled},
          {"sg_mode", c.sg_mode == StopGradientMode::chain ? "chain" : "detach"},
          {"denominator_mode", c.denominator_mode == DenominatorMode::symmetric ? "symmetric" : "first_view_only"},
          {"correlation_mode", c.correlation_mode == CorrelationMode::per_sample ? "per_sample" : "whole_batch"}};
}

LossConfig loss_config_from_json(const json& j) {
  reject_unknown_keys(j, {"tau", "cr_enabled", "cr_weight", "sg_enabled", "sg_mode", "denominator_mode", "correlation_mode"}, "loss");
  LossConfig c;
  read_if(j, "tau", c.tau);
  read_if(j, "cr_enabled", c.cr_enabled);
  read_if(j, "cr_weight", c.cr_weight);
  read_if(j, "sg_enabled", c.sg_enabled);
  if (j.contains("sg_mode")) {
    const auto m = j["sg_mode"].get<std::string>();
    if (m != "chain" && m != "detach") throw std::invalid_argument("sg_mode must be 'chain' or 'detach'");
    c.sg_mode = m == "chain" ? StopGradientMode::chain : StopGradientMode::detach;
  }
  if (j.contains("denominator_mode")) {
    const auto m = j["denominator_mode"].get<std::string>();
    if (m != "symmetric" && m != "first_view_only") throw std::invalid_argument("denominator_mode must be 'symmetric' or 'first_view_only'");
    c.denominator_mode = m == "symmetric" ? DenominatorMode::symmetric : DenominatorMode::first_view_only;
  }
  if (j.contains("correlation_mode")) {
    const auto m = j["correlation_mode"].get<std::string>();
    if (m != "per_sample" && m != "whole_batch") throw std::invalid_argument("correlation_mode must be 'per_sample' or 'whole_batch'");
    c.correlation_mode = m == "per_sample" ? CorrelationMode::per_sample : CorrelationMode::whole_batch;
  }
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"method", to_string(c.method)},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"decay_mode", c.decay_mode == WeightDecayMode::decoupled ? "decoupled" : "l2"},
          {"patience", c.patience},
          {"max_epochs", c.max_epochs},
          {"seed", c.seed},
          {"grad_clip", c.grad_clip},
          {"loss", to_json(c.loss)},
          {"aug_a", op_to_json(c.aug_a)},
          {"aug_b", op_to_json(c.aug_b)}};
}

TrainConfig train_config_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"method", "batch_size", "lr", "weight_decay", "decay_mode", "patience", "max_epochs", "seed", "grad_clip", "loss",
                       "aug_a", "aug_b"},
                      "train");
  TrainConfig c;
  if (j.contains("method")) c.method = parse_method(j["method"].get<std::string>());
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "lr", c.lr);
  read_if(j, "weight_decay", c.weight_decay);
  if (j.contains("decay_mode")) {
    const auto m = j["decay_mode"].get<std::string>();
    if (m != "decoupled" && m != "l2") throw std::invalid_argument("decay_mode must be 'decoupled' or 'l2'");
    c.decay_mode = m == "decoupled" ? WeightDecayMode::decoupled : WeightDecayMode::l2;
  }
  read_if(j, "patience", c.patience);
  read_if(j, "max_epochs", c.max_epochs);
  read_if(j, "seed", c.seed);
  read_if(j, "grad_clip", c.grad_clip);
  if (j.contains("loss")) c.loss = loss_config_from_json(j["loss"]);
  if (j.contains("aug_a")) c.aug_a = op_from_json(j["aug_a"]);
  if (j.contains("aug_b")) c.aug_b = op_from_json(j["aug_b"]);
  c.validate();
  return c;
}

json to_json(const EpochRecord& r) {
  json comp = {{"nt_xent", r.nt_xent}};
  if (r.cr) comp["cr"] = *r.cr;
  return {{"epoch", r.epoch},
          {"loss", r.loss},
          {"components", comp},
          {"diagnostics", {{"mean_pearson", r.mean_pearson}, {"mean_abs_pearson", r.mean_abs_pearson}}},
          {"epochs_since_best", r.epochs_since_best}};
}

EpochRecord epoch_record_from_json(const json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.loss = j.at("loss").get<double>();
  r.nt_xent = j.at("components").at("nt_xent").get<double>();
  if (j["components"].contains("cr")) r.cr = j["components"]["cr"].get<double>();
  r.mean_pearson = j.at("diagnostics").at("mean_pearson").get<double>();
  r.mean_abs_pearson = j.at("diagnostics").at("mean_abs_pearson").get<double>();
  r.epochs_since_best = j.at("epochs_since_best").get<int>();
  return r;
}

json to_json(const SyntheticSpec& s) {
  return {{"num_classes", s.num_classes}, {"windows_per_class", s.windows_per_class}, {"window", s.window},
          {"channels", s.channels},       {"noise_sigma", s.noise_sigma},             {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  reject_unknown_keys(j, {"num_classes", "windows_per_class", "window", "channels", "noise_sigma", "seed"}, "synthetic spec");
  SyntheticSpec s;
  read_if(j, "num_classes", s.num_classes);
  read_if(j, "windows_per_class", s.windows_per_class);
  read_if(j, "window", s.window);
  read_if(j, "channels", s.channels);
  read_if(j, "noise_sigma", s.noise_sigma);
  read_if(j, "seed", s.seed);
  s.validate();
  return s;
}

}  // namespace autocl
