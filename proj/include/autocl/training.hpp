#ifndef AUTOCL_TRAINING_HPP
#define AUTOCL_TRAINING_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "autocl/augment.hpp"
#include "autocl/data.hpp"
#include "autocl/losses.hpp"
#include "autocl/models.hpp"
#include "autocl/optim.hpp"

namespace autocl {

enum class Method { autocl, simclr };

inline std::string to_string(Method m) { return m == Method::autocl ? "autocl" : "simclr"; }

inline Method parse_method(const std::string& s) {
  if (s == "autocl") return Method::autocl;
  if (s == "simclr") return Method::simclr;
  throw std::invalid_argument("unknown method '" + s + "' (expected autocl or simclr)");
}

struct TrainConfig {
  Method method = Method::autocl;
  Index batch_size = 256;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  WeightDecayMode decay_mode = WeightDecayMode::decoupled;
  int patience = 5;
  int max_epochs = 200;
  std::uint64_t seed = 0;
  double grad_clip = 5.0;  // max L2 norm of generator gradients; <= 0 disables
  LossConfig loss;
  augment::AugmentationOp aug_a = augment::AugmentationOp::scale();
  augment::AugmentationOp aug_b = augment::AugmentationOp::permute();

  void validate() const {
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
    if (!(lr > 0.0) || !(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive and weight_decay nonnegative");
    loss.validate();
  }
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double nt_xent = 0.0;
  std::optional<double> cr;       // mean Pearson term, present iff CR contributes to the loss
  double mean_pearson = 0.0;  // diagnostics for AutoCL runs
  double mean_abs_pearson = 0.0;
  int epochs_since_best = 0;
};

// Early-stopping bookkeeping. Improvement means a strict decrease of best_loss.
struct TrainState {
  int epoch = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_since_best = 0;
  std::vector<double> history;
};

struct EarlyStopDecision {
  bool improved = false;
  bool stop = false;
};

EarlyStopDecision early_stop_update(TrainState& state, double epoch_loss, int patience, int max_epochs = std::numeric_limits<int>::max());

struct Checkpoint {
  ModelSpec spec;
  TrainConfig config;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  AutoclModel<float> model;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// AutoCL pretraining: first stream, generator, second stream, combined loss,
// one Adam step on (theta, xi) per batch; early stopping on the mean epoch
// loss; returns the parameters of the lowest-loss epoch.
Checkpoint pretrain_autocl(const WindowedDataset& dataset, const ModelSpec& spec, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// SimCLR baseline with two manual augmentations and NT-Xent only.
Checkpoint pretrain_simclr(const WindowedDataset& dataset, const ModelSpec& spec, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

Checkpoint pretrain(const WindowedDataset& dataset, const ModelSpec& spec, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Model spec matching a dataset's window shape.
ModelSpec spec_for(const WindowedDataset& dataset, ModelSpec base = {});

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace autocl

#endif  // AUTOCL_TRAINING_HPP
