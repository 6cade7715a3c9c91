#include "autocl/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "autocl/random.hpp"
#include "binary_io.hpp"

namespace autocl {

namespace fs = std::filesystem;
using json = nlohmann::json;

void DatasetManifest::validate() const {
  if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("manifest: sample_rate_hz must be positive");
  if (num_classes < 0 || num_subjects < 0) throw std::invalid_argument("manifest: counts must be nonnegative");
  if (window_size < 2) throw std::invalid_argument("manifest: window_size must be >= 2");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) throw std::invalid_argument("manifest: overlap_fraction must be in [0, 1)");
}

void WindowedDataset::validate() const {
  manifest.validate();
  if (samples.length != manifest.window_size) throw std::invalid_argument("dataset: window length disagrees with manifest");
  if (!samples.values.allFinite()) throw std::invalid_argument("dataset: samples contain NaN or Inf");
  if (labels) {
    if (static_cast<Index>(labels->size()) != samples.count) throw std::invalid_argument("dataset: label count differs from window count");
    for (auto l : *labels)
      if (l < 0 || l >= manifest.num_classes) throw std::invalid_argument("dataset: label " + std::to_string(l) + " out of range");
  }
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("synthetic: need at least 2 classes");
  if (windows_per_class < 1 || window < 2 || channels < 1) throw std::invalid_argument("synthetic: counts must be positive");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synthetic: noise_sigma must be nonnegative");
}

// ---------------------------------------------------------------- UCIHAR

namespace {

constexpr std::array<const char*, 9> kUciSignals = {
    "body_acc_x", "body_acc_y", "body_acc_z", "body_gyro_x", "body_gyro_y", "body_gyro_z", "total_acc_x", "total_acc_y", "total_acc_z",
};

constexpr std::array<const char*, 6> kUciClasses = {
    "WALKING", "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS", "SITTING", "STANDING", "LAYING",
};

constexpr Index kUciWindow = 128;

std::vector<std::vector<double>> read_rows(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IngestError("missing or unreadable file: " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<double> row;
    const char* p = line.c_str();
    char* end = nullptr;
    for (;;) {
      const double v = std::strtod(p, &end);
      if (end == p) break;
      row.push_back(v);
      p = end;
    }
    while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
    if (*p != '\0') throw FormatError(file.string() + ": unparsable token in row " + std::to_string(rows.size()));
    if (row.empty()) continue;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

WindowedDataset import_ucihar(const fs::path& root) {
  if (!fs::is_directory(root)) throw IngestError("UCIHAR root is not a directory: " + root.string());
  std::vector<std::string> parts;
  for (const char* p : {"train", "test"})
    if (fs::is_directory(root / p)) parts.emplace_back(p);
  if (parts.empty()) throw IngestError("UCIHAR root has neither train/ nor test/: " + root.string());

  std::vector<Mat<float>> blocks;
  std::vector<std::int32_t> labels;
  DatasetManifest m;
  m.name = "ucihar";
  m.source = "ucihar:" + root.string();
  m.sample_rate_hz = 50.0;
  m.num_classes = 6;
  m.num_subjects = 30;
  m.window_size = kUciWindow;
  m.overlap_fraction = 0.5;
  m.class_names.assign(kUciClasses.begin(), kUciClasses.end());

  Index total = 0;
  for (const auto& part : parts) {
    const fs::path dir = root / part;
    const auto y_rows = read_rows(dir / ("y_" + part + ".txt"));
    const Index n = static_cast<Index>(y_rows.size());
    Mat<float> block(n * kUciWindow, static_cast<Index>(kUciSignals.size()));
    for (std::size_t c = 0; c < kUciSignals.size(); ++c) {
      const fs::path file = dir / "Inertial Signals" / (std::string(kUciSignals[c]) + "_" + part + ".txt");
      const auto rows = read_rows(file);
      if (static_cast<Index>(rows.size()) != n)
        throw FormatError(file.string() + ": has " + std::to_string(rows.size()) + " rows, label file has " + std::to_string(n));
      for (Index r = 0; r < n; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        if (static_cast<Index>(row.size()) != kUciWindow)
          throw FormatError(file.string() + ": row " + std::to_string(r) + " has " + std::to_string(row.size()) + " values, expected 128");
        for (Index t = 0; t < kUciWindow; ++t) block(r * kUciWindow + t, static_cast<Index>(c)) = static_cast<float>(row[static_cast<std::size_t>(t)]);
      }
    }
    for (Index r = 0; r < n; ++r) {
      const auto& row = y_rows[static_cast<std::size_t>(r)];
      if (row.size() != 1 || row[0] < 1 || row[0] > 6 || row[0] != std::floor(row[0]))
        throw FormatError((dir / ("y_" + part + ".txt")).string() + ": row " + std::to_string(r) + " is not a label in 1..6");
      labels.push_back(static_cast<std::int32_t>(row[0]) - 1);
    }
    m.origin.push_back({part, n});
    total += n;
    blocks.push_back(std::move(block));
  }

  WindowedDataset ds;
  ds.samples = Sequences<float>(total, kUciWindow, static_cast<Index>(kUciSignals.size()));
  Index row = 0;
  for (const auto& b : blocks) {
    ds.samples.values.middleRows(row, b.rows()) = b;
    row += b.rows();
  }
  ds.labels = std::move(labels);
  ds.manifest = std::move(m);
  if (!ds.samples.values.allFinite()) throw FormatError("UCIHAR: non-finite sample values");
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------- windowing

std::vector<Index> window_starts(Index stream_length, Index window_size, double overlap_fraction) {
  if (window_size < 1) throw std::invalid_argument("window_series: window size must be positive");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) throw std::invalid_argument("window_series: overlap must be in [0, 1)");
  if (stream_length < window_size) throw std::invalid_argument("window_series: stream shorter than window");
  const auto stride = std::max<Index>(1, static_cast<Index>(std::llround(static_cast<double>(window_size) * (1.0 - overlap_fraction))));
  std::vector<Index> starts;
  for (Index s = 0; s + window_size <= stream_length; s += stride) starts.push_back(s);
  return starts;
}

WindowedDataset window_series(const Mat<float>& stream, Index window_size, double overlap_fraction) {
  const auto starts = window_starts(stream.rows(), window_size, overlap_fraction);
  WindowedDataset ds;
  ds.samples = Sequences<float>(static_cast<Index>(starts.size()), window_size, stream.cols());
  for (std::size_t i = 0; i < starts.size(); ++i) ds.samples.sequence(static_cast<Index>(i)) = stream.middleRows(starts[i], window_size);
  ds.manifest.name = "windowed";
  ds.manifest.window_size = window_size;
  ds.manifest.overlap_fraction = overlap_fraction;
  return ds;
}

// ---------------------------------------------------------------- synthetic

WindowedDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Index K = spec.num_classes, W = spec.window, C = spec.channels;
  Rng rng(spec.seed);

  // Class prototypes: one sinusoid per (class, channel) with its own frequency, amplitude and phase.
  Mat<double> freq(K, C), amp(K, C), phase(K, C);
  for (Index k = 0; k < K; ++k)
    for (Index c = 0; c < C; ++c) {
      freq(k, c) = rng.uniform(1.0, 8.0);
      amp(k, c) = rng.uniform(0.5, 2.0);
      phase(k, c) = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }

  WindowedDataset ds;
  ds.samples = Sequences<float>(K * spec.windows_per_class, W, C);
  std::vector<std::int32_t> labels;
  labels.reserve(static_cast<std::size_t>(K * spec.windows_per_class));
  Index n = 0;
  for (Index k = 0; k < K; ++k) {
    for (Index i = 0; i < spec.windows_per_class; ++i, ++n) {
      for (Index t = 0; t < W; ++t)
        for (Index c = 0; c < C; ++c) {
          const double clean = amp(k, c) * std::sin(2.0 * std::numbers::pi * freq(k, c) * static_cast<double>(t) / static_cast<double>(W) + phase(k, c));
          const double noise = spec.noise_sigma > 0.0 ? rng.normal(0.0, spec.noise_sigma) : 0.0;
          ds.samples(n, t, c) = static_cast<float>(clean + noise);
        }
      labels.push_back(static_cast<std::int32_t>(k));
    }
  }
  ds.labels = std::move(labels);
  auto& m = ds.manifest;
  m.name = "synthetic";
  m.source = "synthetic";
  m.sample_rate_hz = 50.0;
  m.num_classes = K;
  m.num_subjects = 0;
  m.window_size = W;
  m.overlap_fraction = 0.0;
  for (Index k = 0; k < K; ++k) m.class_names.push_back("class_" + std::to_string(k));
  m.seed = static_cast<std::int64_t>(spec.seed);
  return ds;
}

// ---------------------------------------------------------------- splitting

WindowedDataset subset(const WindowedDataset& dataset, const std::vector<Index>& indices) {
  WindowedDataset out;
  out.samples = gather(dataset.samples, indices);
  if (dataset.labels) {
    std::vector<std::int32_t> l;
    l.reserve(indices.size());
    for (Index i : indices) l.push_back((*dataset.labels)[static_cast<std::size_t>(i)]);
    out.labels = std::move(l);
  }
  out.manifest = dataset.manifest;
  out.manifest.origin.clear();
  return out;
}

SplitIndices split_few_shot_indices(const WindowedDataset& dataset, double fraction, std::uint64_t seed) {
  if (!dataset.labels) throw std::invalid_argument("split_few_shot: dataset has no labels");
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split_few_shot: fraction must be in (0, 1)");
  const auto& labels = *dataset.labels;
  std::int64_t classes = dataset.manifest.num_classes;
  for (auto l : labels) classes = std::max<std::int64_t>(classes, l + 1);

  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));

  Rng rng(seed);
  SplitIndices out;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& members = by_class[k];
    if (members.empty()) continue;
    rng.shuffle(members);
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    if (take < 1) throw std::invalid_argument("split_few_shot: class " + std::to_string(k) + " gets no tuning samples (class starvation)");
    out.tune.insert(out.tune.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
  }
  std::sort(out.tune.begin(), out.tune.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::pair<WindowedDataset, WindowedDataset> split_few_shot(const WindowedDataset& dataset, double fraction, std::uint64_t seed) {
  const auto idx = split_few_shot_indices(dataset, fraction, seed);
  auto tune = subset(dataset, idx.tune);
  auto test = subset(dataset, idx.test);
  tune.manifest.name += ".tune";
  test.manifest.name += ".test";
  return {std::move(tune), std::move(test)};
}

// ---------------------------------------------------------------- container

namespace {

json manifest_json_value(const DatasetManifest& m, Index num_windows, Index num_channels, bool has_labels) {
  json j;
  j["format"] = "autocl-dataset/1";
  j["name"] = m.name;
  j["sample_rate_hz"] = m.sample_rate_hz;
  j["num_classes"] = m.num_classes;
  j["num_subjects"] = m.num_subjects;
  j["window_size"] = m.window_size;
  j["overlap_fraction"] = m.overlap_fraction;
  j["class_names"] = m.class_names;
  j["seed"] = m.seed ? json(*m.seed) : json(nullptr);
  j["source"] = m.source;
  j["origin"] = json::array();
  for (const auto& o : m.origin) j["origin"].push_back({{"partition", o.name}, {"count", o.count}});
  j["num_windows"] = num_windows;
  j["num_channels"] = num_channels;
  j["has_labels"] = has_labels;
  return j;
}

}  // namespace

std::string manifest_to_json(const DatasetManifest& manifest, Index num_windows, Index num_channels, bool has_labels, int indent) {
  return manifest_json_value(manifest, num_windows, num_channels, has_labels).dump(indent);
}

void save_container(const WindowedDataset& dataset, const fs::path& dir) {
  dataset.validate();
  fs::create_directories(dir);
  io::write_file(dir / "manifest.json",
                 manifest_to_json(dataset.manifest, dataset.num_windows(), dataset.num_channels(), dataset.labeled()) + "\n");
  std::string bytes;
  io::append_le<float>(bytes, std::span<const float>(dataset.samples.values.data(), static_cast<std::size_t>(dataset.samples.values.size())));
  io::write_file(dir / "samples.bin", bytes);
  const fs::path labels_path = dir / "labels.bin";
  if (dataset.labels) {
    std::string lb;
    io::append_le<std::int32_t>(lb, std::span<const std::int32_t>(*dataset.labels));
    io::write_file(labels_path, lb);
  } else if (fs::exists(labels_path)) {
    fs::remove(labels_path);
  }
}

WindowedDataset load_container(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw IntegrityError("container has no manifest.json: " + dir.string());
  json j;
  try {
    j = json::parse(io::read_file(manifest_path));
  } catch (const json::exception& e) {
    throw IntegrityError("manifest.json is not valid JSON: " + std::string(e.what()));
  }

  WindowedDataset ds;
  Index num_windows = 0, num_channels = 0;
  try {
    auto& m = ds.manifest;
    m.name = j.at("name").get<std::string>();
    m.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    m.num_classes = j.at("num_classes").get<std::int64_t>();
    m.num_subjects = j.at("num_subjects").get<std::int64_t>();
    m.window_size = j.at("window_size").get<std::int64_t>();
    m.overlap_fraction = j.at("overlap_fraction").get<double>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (j.contains("seed") && !j["seed"].is_null()) m.seed = j["seed"].get<std::int64_t>();
    m.source = j.value("source", std::string());
    if (j.contains("origin"))
      for (const auto& o : j["origin"]) m.origin.push_back({o.at("partition").get<std::string>(), o.at("count").get<std::int64_t>()});
    num_windows = j.at("num_windows").get<Index>();
    num_channels = j.at("num_channels").get<Index>();
  } catch (const json::exception& e) {
    throw IntegrityError("manifest.json is missing or has malformed fields: " + std::string(e.what()));
  }
  if (num_windows < 0 || num_channels < 1 || ds.manifest.window_size < 1) throw IntegrityError("manifest.json declares an invalid shape");

  const std::string samples = io::read_file(dir / "samples.bin");
  const auto expected = static_cast<std::size_t>(num_windows * ds.manifest.window_size * num_channels);
  if (samples.size() != expected * sizeof(float))
    throw IntegrityError("samples.bin has " + std::to_string(samples.size()) + " bytes, manifest implies " + std::to_string(expected * sizeof(float)));
  const auto values = io::decode_le<float>(samples.data(), expected);
  ds.samples = Sequences<float>(num_windows, ds.manifest.window_size, num_channels);
  std::copy(values.begin(), values.end(), ds.samples.values.data());

  const bool has_labels = j.value("has_labels", fs::exists(dir / "labels.bin"));
  if (has_labels) {
    if (!fs::exists(dir / "labels.bin")) throw IntegrityError("manifest declares labels but labels.bin is missing");
    const std::string lb = io::read_file(dir / "labels.bin");
    if (lb.size() != static_cast<std::size_t>(num_windows) * sizeof(std::int32_t))
      throw IntegrityError("labels.bin has " + std::to_string(lb.size()) + " bytes, expected " + std::to_string(num_windows * 4));
    ds.labels = io::decode_le<std::int32_t>(lb.data(), static_cast<std::size_t>(num_windows));
  }
  try {
    ds.validate();
  } catch (const std::invalid_argument& e) {
    throw IntegrityError(std::string("container failed validation: ") + e.what());
  }
  return ds;
}

}  // namespace autocl
