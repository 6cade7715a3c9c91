#ifndef AUTOCL_DATA_HPP
#define AUTOCL_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "autocl/tensor.hpp"

namespace autocl {

struct IngestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Where a block of windows came from (e.g. UCIHAR's published train/test partitions).
struct OriginPartition {
  std::string name;
  std::int64_t count = 0;
};

struct DatasetManifest {
  std::string name;
  double sample_rate_hz = 1.0;
  std::int64_t num_classes = 0;
  std::int64_t num_subjects = 0;
  std::int64_t window_size = 128;
  double overlap_fraction = 0.0;
  std::vector<std::string> class_names;
  std::optional<std::int64_t> seed;
  std::string source;
  std::vector<OriginPartition> origin;

  void validate() const;
};

// Windows [num_windows, W, C] as float32, optional integer labels.
struct WindowedDataset {
  Sequences<float> samples;
  std::optional<std::vector<std::int32_t>> labels;
  DatasetManifest manifest;

  Index num_windows() const { return samples.count; }
  Index window_size() const { return samples.length; }
  Index num_channels() const { return samples.channels(); }
  bool labeled() const { return labels.has_value(); }

  // Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

struct SyntheticSpec {
  std::int64_t num_classes = 3;
  std::int64_t windows_per_class = 100;
  std::int64_t window = 128;
  std::int64_t channels = 6;
  double noise_sigma = 0.1;
  std::uint64_t seed = 7;

  void validate() const;
};

WindowedDataset import_ucihar(const std::filesystem::path& root);

// Slides a window over a [T, C] stream with stride round(window * (1 - overlap)).
WindowedDataset window_series(const Mat<float>& stream, Index window_size, double overlap_fraction);

std::vector<Index> window_starts(Index stream_length, Index window_size, double overlap_fraction);

WindowedDataset generate_synthetic(const SyntheticSpec& spec);

struct SplitIndices {
  std::vector<Index> tune;
  std::vector<Index> test;
};

// Stratified per-class split; tune gets round(fraction * class_count) of each class.
SplitIndices split_few_shot_indices(const WindowedDataset& dataset, double fraction, std::uint64_t seed);
std::pair<WindowedDataset, WindowedDataset> split_few_shot(const WindowedDataset& dataset, double fraction, std::uint64_t seed);

WindowedDataset subset(const WindowedDataset& dataset, const std::vector<Index>& indices);

void save_container(const WindowedDataset& dataset, const std::filesystem::path& dir);
WindowedDataset load_container(const std::filesystem::path& dir);

std::string manifest_to_json(const DatasetManifest& manifest, Index num_windows, Index num_channels, bool has_labels, int indent = 2);

}  // namespace autocl

#endif  // AUTOCL_DATA_HPP
