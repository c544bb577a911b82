#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "protoeeg/extractor.hpp"
#include "protoeeg/model.hpp"
#include "protoeeg/objectives.hpp"
#include "protoeeg/signal_data.hpp"

namespace protoeeg {

struct TrainConfig {
  int epochs_total = 80;
  int warm_epochs = 10;
  int joint_epochs_per_cycle = 10;
  int last_layer_epochs_per_cycle = 10;
  double lr_warm_prototypes = 0.002;
  double lr_joint_extractor = 0.0002;
  double lr_joint_prototypes = 0.003;
  double lr_joint_last_layer = 0.001;
  double lr_last_layer = 0.001;
  int batch_size = 32;
  std::uint64_t seed = 0;
  LossWeights weights;
  Aggregation aggregation = Aggregation::Max;
  bool soft_labels = false;
  double margin = 0.0;  // additive cosine margin; 0 disables it
  double scale = kDefaultScale;

  int pretrain_epochs = 20;
  double lr_pretrain = 0.001;
  double validation_fraction = 0.1;

  // Extractor shape overrides; channel count and window length come from the dataset.
  int base_width = 16;
  int window_features = 255;
  Precision precision = Precision::F32;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  // SHA-256 of the canonical JSON form.
  std::string hash() const;
  void validate() const;  // throws ConfigError
};

struct ScheduledEpoch {
  int epoch = 0;  // 1-based
  Stage stage = Stage::Warm;
  bool project_after = false;
};

// Warm-up, then cycles of [joint -> projection -> last layer] truncated at epochs_total. A
// projection follows every joint phase that runs to completion.
std::vector<ScheduledEpoch> training_schedule(const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  Stage stage = Stage::Warm;
  LossBreakdown loss;  // stage objective over the full fitting set after the epoch
  double train_accuracy = 0.0;
  std::optional<double> val_cross_entropy;
  std::optional<double> val_accuracy;
};

struct ProjectionEvent {
  int epoch = 0;
  int prototype = 0;
  std::string source_sample_id;
  double similarity_before = 0.0;  // similarity of the old prototype to the chosen feature
  double similarity_after = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::vector<ProjectionEvent> projections;
  std::vector<double> pretrain_loss;  // running mean per pretraining epoch
  std::optional<double> pretrain_accuracy;

  nlohmann::json to_json() const;
  static TrainingHistory from_json(const nlohmann::json& j);
  // epoch,stage,cross_entropy,cluster,separation,orthogonality,last_layer_l1,margin,total,...
  std::string csv() const;
};

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Train/validation partition of the train split by patient.
struct FitSplit {
  std::vector<std::size_t> fit;
  std::vector<std::size_t> validation;
};
FitSplit fit_split(const Dataset& dataset, double validation_fraction, std::uint64_t seed);

ExtractorConfig extractor_config(const Dataset& dataset, const TrainConfig& config);

struct PretrainResult {
  ExtractorWeights weights;
  std::vector<double> epoch_loss;
  double head_accuracy = 0.0;  // on the fitting set after the last epoch
  Eigen::MatrixXd head_weight;  // 6 x feature_dim
  Eigen::VectorXd head_bias;
};

// Extractor plus a temporary affine softmax head trained with class-weighted cross-entropy on
// majority labels. With zero epochs the random initialization is returned unchanged.
PretrainResult pretrain_extractor(const Dataset& dataset, const TrainConfig& config);

// Untrained model: the given extractor, +/-1 class connections and prototypes set to unit-norm
// features of randomly drawn projection-set samples of the prototype's class.
PrototypeModel init_model(const Dataset& dataset, const TrainConfig& config, const ExtractorWeights& extractor,
                          std::uint64_t seed);

// Replaces every prototype with the feature of its most similar candidate; ties go to the lowest
// sample id. `features` holds one row per candidate, aligned with `candidate_ids`.
std::vector<ProjectionEvent> project_prototypes(PrototypeModel& model, const Eigen::MatrixXd& features,
                                                std::span<const std::string> candidate_ids, int epoch = 0);
std::vector<ProjectionEvent> project_prototypes(PrototypeModel& model, const Dataset& dataset, int epoch = 0);

struct TrainResult {
  PrototypeModel model;
  TrainingHistory history;
};

// Called after each epoch; `projected` is set when a projection ran after it.
using EpochCallback = std::function<void(const PrototypeModel&, const TrainingHistory&, bool projected)>;

TrainResult train(const Dataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch = {});
TrainResult train(const Dataset& dataset, const TrainConfig& config, const PretrainResult& pretrained,
                  const EpochCallback& on_epoch = {});

// Uninterpretable counterpart: extractor plus affine softmax head.
struct BaselineModel {
  ExtractorWeights extractor;
  Eigen::MatrixXd head_weight;  // 6 x feature_dim
  Eigen::VectorXd head_bias;
  std::string config_hash;

  Eigen::VectorXd logits(const FeatureVector& f) const { return head_weight * f + head_bias; }
};

struct BaselineResult {
  BaselineModel model;
  TrainingHistory history;
};

// Starts from the pretrained extractor and head and trains both for epochs_total epochs with
// class-weighted cross-entropy (extractor at lr_joint_extractor, head at lr_last_layer).
BaselineResult train_baseline(const Dataset& dataset, const TrainConfig& config, const PretrainResult& pretrained);
BaselineResult train_baseline(const Dataset& dataset, const TrainConfig& config);

// Features for the given dataset indices, one row each.
Eigen::MatrixXd extract_features(const Dataset& dataset, std::span<const std::size_t> indices,
                                 const ExtractorWeights& weights);

}  // namespace protoeeg
