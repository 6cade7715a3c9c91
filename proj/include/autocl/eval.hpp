#ifndef AUTOCL_EVAL_HPP
#define AUTOCL_EVAL_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "autocl/data.hpp"
#include "autocl/models.hpp"
#include "autocl/optim.hpp"

namespace autocl {

struct FinetuneConfig {
  int epochs = 100;
  Index batch_size = 128;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  WeightDecayMode decay_mode = WeightDecayMode::decoupled;
  std::uint64_t seed = 0;
};

using ConfusionMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EvalReport {
  std::vector<double> test_accuracy_history;
  double top10_mean_accuracy = 0.0;
  double final_accuracy = 0.0;
  ConfusionMatrix confusion;  // rows: true class, cols: predicted class (final epoch)
  std::vector<double> per_class_recall;
  Index tune_size = 0;
  Index test_size = 0;
};

// Mean of the ten largest entries.
double top10_average(const std::vector<double>& history);

ConfusionMatrix confusion_matrix(const std::vector<std::int32_t>& predictions, const std::vector<std::int32_t>& labels, Index num_classes);

double accuracy(const ConfusionMatrix& m);

std::vector<std::int32_t> argmax_rows(const Mat<float>& probs);

// Trains a fresh prediction head on frozen encoder features (eval-mode
// encoder, no gradient reaches it) and records test accuracy after every epoch.
std::pair<PredictionHead<float>, EvalReport> finetune(Encoder<float>& encoder, const ModelSpec& spec, const WindowedDataset& tune,
                                                      const WindowedDataset& test, const FinetuneConfig& cfg);

std::string eval_report_json(const EvalReport& report, int indent = 2);
std::string confusion_csv(const ConfusionMatrix& m);

enum class EmbeddingSource { encoder, projector };

// CSV: header, then one row per window: label (or -1), features.
void export_embeddings(AutoclModel<float>& model, const WindowedDataset& dataset, const std::filesystem::path& out,
                       EmbeddingSource source = EmbeddingSource::encoder);

// CSV: window_id,channel,t,original,generated for k windows drawn with `seed`.
void export_augmentation_views(AutoclModel<float>& model, const WindowedDataset& dataset, Index k, std::uint64_t seed,
                               const std::filesystem::path& out);

// Eval-mode generator output for a batch of windows.
Sequences<float> generate_views(AutoclModel<float>& model, const Sequences<float>& x);

}  // namespace autocl

#endif  // AUTOCL_EVAL_HPP
