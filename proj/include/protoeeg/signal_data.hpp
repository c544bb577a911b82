#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace protoeeg {

// Class indices are fixed everywhere: serialization, training, metrics and UI.
enum class ClassLabel : int { Other = 0, Seizure = 1, LPD = 2, GPD = 3, LRDA = 4, GRDA = 5 };

inline constexpr int kNumClasses = 6;
inline constexpr double kSampleDurationSeconds = 50.0;

inline constexpr std::array<std::string_view, kNumClasses> kClassNames{
    "Other", "Seizure", "LPD", "GPD", "LRDA", "GRDA"};

inline constexpr int index_of(ClassLabel c) { return static_cast<int>(c); }
inline constexpr ClassLabel label_at(int i) { return static_cast<ClassLabel>(i); }
std::string_view class_name(ClassLabel c);
std::optional<ClassLabel> parse_class(std::string_view name);

using ClassVector = std::array<double, kNumClasses>;

struct VoteDistribution {
  std::array<int, kNumClasses> counts{};

  int total() const;
  ClassVector normalized() const;
  // Majority vote; ties go to the lowest class index.
  ClassLabel majority() const;
  bool operator==(const VoteDistribution&) const = default;
};

enum class Split { Train, Test };
std::string_view split_name(Split s);

// Generator provenance for a sample: signal = (1 - beta) * pattern_a + beta * pattern_b.
struct BlendInfo {
  ClassLabel pattern_a = ClassLabel::Other;
  ClassLabel pattern_b = ClassLabel::Other;
  double beta = 0.0;
  bool bridge = false;
  bool operator==(const BlendInfo&) const = default;
};

struct EegSample {
  std::string id;
  std::string patient_id;
  int channels = 0;
  int sample_rate = 0;
  // channels x timesteps, row-major, microvolts.
  std::vector<float> signal;
  VoteDistribution votes;
  Split split = Split::Train;
  bool prototype_candidate = false;
  std::optional<BlendInfo> blend;

  int timesteps() const { return channels > 0 ? static_cast<int>(signal.size()) / channels : 0; }
  double duration() const { return sample_rate > 0 ? double(timesteps()) / sample_rate : 0.0; }
  ClassLabel majority() const { return votes.majority(); }
  std::span<const float> channel(int c) const {
    return {signal.data() + std::size_t(c) * timesteps(), std::size_t(timesteps())};
  }
};

struct GeneratorConfig {
  std::array<int, kNumClasses> per_class{200, 200, 200, 200, 200, 200};
  int patients = 120;
  double blend_fraction = 0.2;
  // Extra blends on an evenly spaced beta grid in [0, 1] for every unordered class pair.
  int bridges_per_pair = 0;
  int channels = 16;
  int sample_rate = 200;
  double rater_concentration = 8.0;
  // Share of the Dirichlet mean spread uniformly over all classes.
  double rater_floor = 0.05;
  int min_votes = 10;
  int max_votes = 20;
  double test_patient_fraction = 0.5;
};

struct Dataset {
  static constexpr int kSchemaVersion = 1;

  int channels = 16;
  int sample_rate = 200;
  std::vector<EegSample> samples;
  std::optional<GeneratorConfig> generator;
  std::optional<std::uint64_t> seed;

  int timesteps() const { return static_cast<int>(sample_rate * kSampleDurationSeconds); }
  std::vector<std::size_t> indices(Split s) const;
  std::vector<std::size_t> projection_indices() const;
  // Throws std::out_of_range for unknown ids.
  std::size_t index_of(std::string_view id) const;
  const EegSample& at(std::string_view id) const { return samples[index_of(id)]; }
  void rebuild_index();

 private:
  std::unordered_map<std::string, std::size_t> by_id_;
};

// Error taxonomy for dataset persistence; each failure is a distinct type.
struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingSignalFile : DatasetError {
  MissingSignalFile(const std::string& id, const std::string& path);
  std::string sample_id;
};
struct SignalLengthMismatch : DatasetError {
  SignalLengthMismatch(const std::string& id, std::uintmax_t expected, std::uintmax_t actual);
  std::string sample_id;
};
struct UnsupportedSchema : DatasetError {
  explicit UnsupportedSchema(int version);
};
struct ManifestError : DatasetError {
  using DatasetError::DatasetError;
};

// Invalid configuration supplied by the caller (bad counts, channel layout, flags).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

Dataset generate_dataset(const GeneratorConfig& config, std::uint64_t seed);

// Mean of the rater Dirichlet for a blend: the per-class vote probabilities before sampling.
ClassVector vote_probability_mean(const BlendInfo& blend, double rater_floor);

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);
// SHA-256 over the manifest bytes followed by every signal file in manifest order.
std::string dataset_hash(const std::filesystem::path& dir);

bool check_invariants(const Dataset& dataset, std::string* why = nullptr);

}  // namespace protoeeg
