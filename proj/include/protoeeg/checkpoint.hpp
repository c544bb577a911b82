#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>

#include "json.hpp"
#include "protoeeg/archive.hpp"
#include "protoeeg/trainer.hpp"

namespace protoeeg {

// Model checkpoint inside a TensorArchive. Tensors: extractor.<layer>, prototypes (m x D),
// class_connections (m x 6), scale (1), or head.weight / head.bias for baselines. The meta block
// carries the config hash, training config, extractor shape, prototype metadata and history.
struct Checkpoint {
  std::variant<PrototypeModel, BaselineModel> model;
  nlohmann::json train_config;
  TrainingHistory history;

  bool is_baseline() const { return std::holds_alternative<BaselineModel>(model); }
  const PrototypeModel& prototype_model() const;
  const BaselineModel& baseline_model() const;
  const ExtractorWeights& extractor() const;
  int prototype_count() const;
};

TensorArchive to_archive(const Checkpoint& checkpoint);
Checkpoint from_archive(const TensorArchive& archive);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace protoeeg
