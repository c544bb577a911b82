#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "protoeeg/archive.hpp"
#include "protoeeg/atlas.hpp"
#include "protoeeg/model.hpp"
#include "protoeeg/spectrogram.hpp"

namespace protoeeg {

struct ColorScheme {
  std::string id;
  std::string name;
  std::string kind;  // "class" or "scalar"
  std::string description;
};

// Human majority, model prediction, prediction entropy and the six per-class probabilities.
const std::vector<ColorScheme>& color_schemes();

struct SnapshotConfig {
  EmbeddingConfig embedding;
  std::uint64_t seed = 0;
  int waveform_columns = 1000;  // min/max pairs per channel
  SpectrogramConfig spectrogram;

  nlohmann::json to_json() const;
};

struct SnapshotSample {
  std::string id;
  std::string patient_id;
  Split split = Split::Test;
  bool on_map = true;  // test samples; prototype sources from the train split are off-map
  VoteDistribution votes;
  ClassLabel majority = ClassLabel::Other;
  std::optional<BlendInfo> blend;
  Eigen::VectorXd probabilities;
  Eigen::VectorXd logits;
  Eigen::VectorXd latent;
  double x = 0.0;
  double y = 0.0;
  // channels x columns, row-major.
  std::vector<float> wave_min;
  std::vector<float> wave_max;
  Spectrogram spectrogram;

  ClassLabel predicted() const;
  double entropy() const;
};

struct SnapshotPrototype {
  int index = 0;
  PrototypeInfo info;
  Eigen::VectorXd class_connections;  // 6
};

struct AtlasSnapshot {
  SnapshotConfig config;
  std::string model_config_hash;
  double scale = kDefaultScale;
  int channels = 0;
  int sample_rate = 0;
  int waveform_columns = 0;
  std::vector<SnapshotSample> samples;  // on-map samples first, then off-map prototype sources
  std::vector<SnapshotPrototype> prototypes;
  Eigen::MatrixXd prototype_latents;  // m x D
  std::string hash;                   // SHA-256 of the serialized archive

  std::optional<std::size_t> find(std::string_view id) const;
  std::size_t map_size() const;
  // Prototype layer only (no extractor); enough for explanations.
  PrototypeModel prototype_layer() const;
  // On-map samples as scored samples, in snapshot order.
  std::vector<ScoredSample> map_samples() const;
  Eigen::MatrixXd map_coordinates() const;

  TensorArchive to_archive() const;
  static AtlasSnapshot from_archive(const TensorArchive& archive, const std::string& hash);
  void save(const std::filesystem::path& path) const;
  static AtlasSnapshot load(const std::filesystem::path& path);
};

struct SnapshotError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Min/max pairs over `columns` equal time bins of every channel.
void downsample_minmax(const EegSample& sample, int columns, std::vector<float>& mins, std::vector<float>& maxs);

// Embeds the test split together with every prototype source sample. Throws SnapshotError for
// a model whose prototypes were never projected.
AtlasSnapshot build_snapshot(const PrototypeModel& model, const Dataset& dataset, const SnapshotConfig& config);

enum class PanelMode { Nearest, PerClass };
std::optional<PanelMode> parse_panel_mode(std::string_view name);

// Explanation records for a snapshot sample; throws std::out_of_range for unknown ids.
std::vector<SimilarityRecord> prototype_panel(const AtlasSnapshot& snapshot, std::string_view sample_id,
                                              PanelMode mode, int k = 3,
                                              std::optional<ClassLabel> target = std::nullopt);

}  // namespace protoeeg
