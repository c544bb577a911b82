#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "protoeeg/signal_data.hpp"

namespace protoeeg {

using FeatureVector = Eigen::VectorXd;

enum class Precision { F32, F64 };

// Shared per-window encoder: `blocks` x (conv kernel/stride, ELU) with widths doubling from
// base_width, global average pool over time, affine map to window_features. A sample is
// `windows` consecutive non-overlapping windows; their outputs are concatenated in order.
struct ExtractorConfig {
  int input_channels = 16;
  int window_samples = 2000;
  int windows = 5;
  int blocks = 4;
  int base_width = 16;
  int kernel = 7;
  int stride = 2;
  int window_features = 255;
  // Multiplies the microvolt input before the first convolution.
  double input_scale = 1.0 / 50.0;
  Precision precision = Precision::F32;

  int feature_dim() const { return windows * window_features; }
  int block_width(int b) const { return base_width << b; }
  bool operator==(const ExtractorConfig&) const = default;

  static ExtractorConfig for_dataset(int channels, int sample_rate);
};

struct TensorSlice {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return std::size_t(rows) * cols; }
};

std::vector<TensorSlice> extractor_layout(const ExtractorConfig& config);
std::size_t extractor_parameter_count(const ExtractorConfig& config);

// All extractor parameters in one flat vector; tensors are column-major slices (see layout).
struct ExtractorWeights {
  ExtractorConfig config;
  Eigen::VectorXd params;

  static ExtractorWeights random(const ExtractorConfig& config, std::uint64_t seed);
};

// Maps an upstream gradient request: given the sample's feature, return dLoss/dfeature.
using FeatureGradientFn = std::function<Eigen::VectorXd(const FeatureVector&)>;

class FeatureExtractor {
 public:
  explicit FeatureExtractor(const ExtractorWeights& weights);
  ~FeatureExtractor();
  FeatureExtractor(FeatureExtractor&&) noexcept;
  FeatureExtractor& operator=(FeatureExtractor&&) noexcept;

  const ExtractorConfig& config() const;

  // Throws std::invalid_argument when the sample does not have exactly windows x window_samples
  // timesteps on input_channels channels.
  FeatureVector extract(const EegSample& sample) const;
  // Output of a single window starting at timestep `offset`.
  Eigen::VectorXd extract_window(const EegSample& sample, int offset) const;

  // Forward pass, then backpropagates grad_fn(feature) and adds dLoss/dparams into grad.
  FeatureVector forward_backward(const EegSample& sample, const FeatureGradientFn& grad_fn,
                                 Eigen::VectorXd& grad) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Convenience wrapper: feature_extract(sample, weights).
FeatureVector feature_extract(const EegSample& sample, const ExtractorWeights& weights);

}  // namespace protoeeg
