#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "protoeeg/checkpoint.hpp"
#include "protoeeg/metrics.hpp"

namespace protoeeg {

std::vector<ScoredSample> score_samples(const PrototypeModel& model, const Dataset& dataset,
                                        std::span<const std::size_t> indices);
std::vector<ScoredSample> score_samples(const BaselineModel& model, const Dataset& dataset,
                                        std::span<const std::size_t> indices);
std::vector<ScoredSample> score_split(const Checkpoint& checkpoint, const Dataset& dataset, Split split = Split::Test);

struct EvalConfig {
  int n_boot = 1000;
  std::uint64_t seed = 0;
  int k = 10;
  int permutation_rounds = 10000;
  std::vector<BootstrapUnit> units{BootstrapUnit::Sample, BootstrapUnit::Patient};

  nlohmann::json to_json() const;
};

struct NamedScores {
  std::string name;
  std::vector<ScoredSample> samples;
};

// Report over one or two scored models. With two, the samples must be aligned by id and a
// comparison block is added (first model vs second).
struct MetricsReport {
  nlohmann::json json;
  std::map<std::string, std::string> csv_tables;  // file name -> contents

  // Writes metrics_report.json plus every CSV table into dir.
  void write(const std::filesystem::path& dir) const;
};

MetricsReport build_report(const std::vector<NamedScores>& models, const EvalConfig& config);

// Metric names in report order.
inline const std::vector<std::string>& report_metric_names() {
  static const std::vector<std::string> names{"auroc", "auprc", "neighborhood_max", "neighborhood_vote"};
  return names;
}

}  // namespace protoeeg
