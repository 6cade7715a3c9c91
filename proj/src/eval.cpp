#include "autocl/eval.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "autocl/pipeline.hpp"

namespace autocl {

namespace fs = std::filesystem;
using json = nlohmann::json;

double top10_average(const std::vector<double>& history) {
  if (history.size() < 10) throw std::invalid_argument("top10_average: need at least 10 entries, got " + std::to_string(history.size()));
  std::vector<double> v = history;
  std::partial_sort(v.begin(), v.begin() + 10, v.end(), std::greater<>());
  double s = 0.0;
  for (int i = 0; i < 10; ++i) s += v[static_cast<std::size_t>(i)];
  return s / 10.0;
}

ConfusionMatrix confusion_matrix(const std::vector<std::int32_t>& predictions, const std::vector<std::int32_t>& labels, Index num_classes) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("confusion_matrix: predictions and labels differ in length");
  ConfusionMatrix m = ConfusionMatrix::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto t = labels[i], p = predictions[i];
    if (t < 0 || t >= num_classes) throw std::invalid_argument("confusion_matrix: label " + std::to_string(t) + " out of range");
    if (p < 0 || p >= num_classes) throw std::invalid_argument("confusion_matrix: prediction " + std::to_string(p) + " out of range");
    ++m(t, p);
  }
  return m;
}

double accuracy(const ConfusionMatrix& m) {
  const auto total = m.sum();
  return total == 0 ? 0.0 : static_cast<double>(m.trace()) / static_cast<double>(total);
}

std::vector<std::int32_t> argmax_rows(const Mat<float>& probs) {
  std::vector<std::int32_t> out(static_cast<std::size_t>(probs.rows()));
  for (Index i = 0; i < probs.rows(); ++i) {
    Index k = 0;
    probs.row(i).maxCoeff(&k);
    out[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(k);
  }
  return out;
}

std::pair<PredictionHead<float>, EvalReport> finetune(Encoder<float>& encoder, const ModelSpec& spec, const WindowedDataset& tune,
                                                      const WindowedDataset& test, const FinetuneConfig& cfg) {
  if (!tune.labeled() || !test.labeled()) throw std::invalid_argument("finetune: tune and test sets must be labeled");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("finetune: epochs and batch_size must be positive");
  const std::set<std::int32_t> tune_classes(tune.labels->begin(), tune.labels->end());
  const std::set<std::int32_t> test_classes(test.labels->begin(), test.labels->end());
  if (tune_classes != test_classes) throw std::invalid_argument("finetune: tune and test sets cover different label sets");

  Index K = std::max<Index>(tune.manifest.num_classes, test.manifest.num_classes);
  K = std::max<Index>(K, *tune_classes.rbegin() + 1);

  const Mat<float> z_tune = encode(encoder, tune.samples);
  const Mat<float> z_test = encode(encoder, test.samples);

  Rng rng(cfg.seed);
  PredictionHead<float> head(spec.embedding_size(), spec.head_hidden, K);
  head.init(rng);
  ParamRefs<float> params;
  head.visit([&](nn::Param<float>& p) { params.push_back(&p); });
  AdamState<float> adam;
  const AdamConfig adam_cfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay, cfg.decay_mode};

  EvalReport report;
  report.tune_size = tune.num_windows();
  report.test_size = test.num_windows();
  std::vector<std::int32_t> predictions;
  const Index n = z_tune.rows();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = rng.permutation(static_cast<std::size_t>(n));
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index len = std::min(cfg.batch_size, n - start);
      if (len < 2 && n > 1) continue;  // batch norm needs two rows
      Mat<float> zb(len, z_tune.cols());
      std::vector<std::int32_t> yb(static_cast<std::size_t>(len));
      for (Index i = 0; i < len; ++i) {
        const auto src = static_cast<Index>(order[static_cast<std::size_t>(start + i)]);
        zb.row(i) = z_tune.row(src);
        yb[static_cast<std::size_t>(i)] = (*tune.labels)[static_cast<std::size_t>(src)];
      }
      for (auto* p : params) p->zero_grad();
      typename PredictionHead<float>::Cache cache;
      head.forward(zb, true, cache);
      head.backward_cross_entropy(cache, yb);
      adam_step(params, adam, adam_cfg);
    }
    predictions = argmax_rows(head.predict(z_test));
    const auto cm = confusion_matrix(predictions, *test.labels, K);
    report.test_accuracy_history.push_back(accuracy(cm));
  }
  report.confusion = confusion_matrix(predictions, *test.labels, K);
  report.final_accuracy = accuracy(report.confusion);
  report.top10_mean_accuracy = report.test_accuracy_history.size() >= 10
                                   ? top10_average(report.test_accuracy_history)
                                   : *std::max_element(report.test_accuracy_history.begin(), report.test_accuracy_history.end());
  for (Index k = 0; k < K; ++k) {
    const auto row = report.confusion.row(k).sum();
    report.per_class_recall.push_back(row == 0 ? 0.0 : static_cast<double>(report.confusion(k, k)) / static_cast<double>(row));
  }
  return {std::move(head), std::move(report)};
}

std::string eval_report_json(const EvalReport& r, int indent) {
  json j;
  j["test_accuracy_history"] = r.test_accuracy_history;
  j["top10_mean_accuracy"] = r.top10_mean_accuracy;
  j["final_accuracy"] = r.final_accuracy;
  j["per_class_recall"] = r.per_class_recall;
  j["confusion"] = json::array();
  for (Index i = 0; i < r.confusion.rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < r.confusion.cols(); ++k) row.push_back(r.confusion(i, k));
    j["confusion"].push_back(row);
  }
  j["tune_size"] = r.tune_size;
  j["test_size"] = r.test_size;
  return j.dump(indent);
}

std::string confusion_csv(const ConfusionMatrix& m) {
  std::ostringstream s;
  s << "true\\pred";
  for (Index k = 0; k < m.cols(); ++k) s << "," << k;
  s << "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    s << i;
    for (Index k = 0; k < m.cols(); ++k) s << "," << m(i, k);
    s << "\n";
  }
  return s.str();
}

namespace {

std::ofstream open_out(const fs::path& out) {
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + out.string());
  f.precision(9);
  return f;
}

}  // namespace

void export_embeddings(AutoclModel<float>& model, const WindowedDataset& dataset, const fs::path& out, EmbeddingSource source) {
  Mat<float> feats = encode(model.encoder, dataset.samples);
  if (source == EmbeddingSource::projector) {
    typename Projector<float>::Cache cache;
    feats = model.projector.forward(feats, false, cache);
  }
  auto f = open_out(out);
  f << "label";
  for (Index k = 0; k < feats.cols(); ++k) f << ",f" << k;
  f << "\n";
  for (Index i = 0; i < feats.rows(); ++i) {
    f << (dataset.labels ? (*dataset.labels)[static_cast<std::size_t>(i)] : -1);
    for (Index k = 0; k < feats.cols(); ++k) f << "," << feats(i, k);
    f << "\n";
  }
  if (!f) throw std::runtime_error("write failed for " + out.string());
}

Sequences<float> generate_views(AutoclModel<float>& model, const Sequences<float>& x) {
  typename Generator<float>::Cache gcache;
  if (model.spec.variant == GeneratorVariant::data) return model.generator.forward_data(x, false, gcache);
  StreamCache<float> sc;
  Mat<float> y = stream_forward(model, x, false, nullptr, sc);
  return model.generator.forward_embedding(y, false, gcache);
}

void export_augmentation_views(AutoclModel<float>& model, const WindowedDataset& dataset, Index k, std::uint64_t seed, const fs::path& out) {
  if (k < 1) throw std::invalid_argument("export_augmentation_views: k must be positive");
  if (k > dataset.num_windows())
    throw std::invalid_argument("export_augmentation_views: k=" + std::to_string(k) + " exceeds dataset size " + std::to_string(dataset.num_windows()));
  Rng rng(seed);
  auto perm = rng.permutation(static_cast<std::size_t>(dataset.num_windows()));
  std::vector<std::size_t> chosen(perm.begin(), perm.begin() + k);
  std::sort(chosen.begin(), chosen.end());
  const Sequences<float> x = gather(dataset.samples, chosen);
  const Sequences<float> g = generate_views(model, x);

  auto f = open_out(out);
  f << "window_id,channel,t,original,generated\n";
  for (Index i = 0; i < x.count; ++i)
    for (Index c = 0; c < x.channels(); ++c)
      for (Index t = 0; t < x.length; ++t) f << chosen[static_cast<std::size_t>(i)] << "," << c << "," << t << "," << x(i, t, c) << "," << g(i, t, c) << "\n";
  if (!f) throw std::runtime_error("write failed for " + out.string());
}

}  // namespace autocl
