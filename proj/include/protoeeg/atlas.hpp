#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "protoeeg/metrics.hpp"

namespace protoeeg {

enum class EmbeddingSpace { ClassScores, Latent };
std::string_view embedding_space_name(EmbeddingSpace s);
EmbeddingSpace parse_embedding_space(std::string_view name);  // "scores" | "latent"

// Pair-based 2D embedding: per point, `neighbors` near pairs chosen by locally scaled distance,
// mid-near pairs (second closest of six random points) and further pairs (random non-neighbors),
// optimized with Adam under a three-phase weight schedule.
struct EmbeddingConfig {
  int neighbors = 10;
  double mid_near_ratio = 0.5;
  double further_ratio = 2.0;
  int iterations = 450;
  int phase1_iterations = 100;  // mid-near weight decays 1000 -> 3
  int phase2_iterations = 100;  // balanced
  double learning_rate = 1.0;
  int pca_dims = 100;  // inputs wider than this are reduced first
  EmbeddingSpace space = EmbeddingSpace::ClassScores;

  nlohmann::json to_json() const;
};

struct EmbeddingPoint {
  std::string sample_id;
  double x = 0.0;
  double y = 0.0;
  EmbeddingSpace source = EmbeddingSpace::ClassScores;
};

// Rows of `vectors` are points; returns n x 2 coordinates.
Eigen::MatrixXd embed_2d(const Eigen::MatrixXd& vectors, const EmbeddingConfig& config, std::uint64_t seed);
std::vector<EmbeddingPoint> embed_points(std::span<const std::string> ids, const Eigen::MatrixXd& vectors,
                                         const EmbeddingConfig& config, std::uint64_t seed);

// Stacks scores or latents of scored samples, one row each.
Eigen::MatrixXd embedding_input(std::span<const ScoredSample> samples, EmbeddingSpace space);

// Mean over points of |kNN_high ∩ kNN_2d| / k under Euclidean distance (ties: lower index).
double knn_preservation(const Eigen::MatrixXd& high, const Eigen::MatrixXd& low, int k = 10);

struct ContinuumPath {
  ClassLabel class_a = ClassLabel::Other;
  ClassLabel class_b = ClassLabel::Other;
  std::vector<std::size_t> indices;
  std::vector<std::string> sample_ids;
  std::vector<double> step_distance;  // 2D distance of each consecutive hop
  double epsilon = 0.0;

  nlohmann::json to_json() const;
};

struct NoPathError : std::runtime_error {
  NoPathError(ClassLabel a, ClassLabel b, double epsilon, double minimal_epsilon);
  double epsilon;
  double minimal_epsilon;  // smallest radius connecting the endpoints
};

// Twice the median nearest-neighbor distance of the embedding.
double default_path_epsilon(const Eigen::MatrixXd& embedding);

// Smallest radius at which the two points are connected, by bisection over pairwise distances.
double minimal_connecting_epsilon(const Eigen::MatrixXd& embedding, std::size_t from, std::size_t to);

// Fewest-hop, then shortest, path in the epsilon-radius graph between the most confident
// majority-a sample and the most confident majority-b sample. Throws NoPathError.
ContinuumPath continuum_path(const Eigen::MatrixXd& embedding, std::span<const ScoredSample> samples,
                             ClassLabel class_a, ClassLabel class_b, double epsilon);

// Index of the sample with majority `c` and the highest score for `c` (ties: lower index).
std::size_t most_confident(std::span<const ScoredSample> samples, ClassLabel c);

}  // namespace protoeeg
