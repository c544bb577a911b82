#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "protoeeg/model.hpp"

namespace protoeeg {

inline constexpr double kLogEpsilon = 1e-12;

struct LossWeights {
  double cluster = -0.8;
  double separation = -0.08;
  double orthogonality = 100.0;
  double last_layer_l1 = 0.0001;
};

enum class Stage { Warm, Joint, Last };
std::string_view stage_name(Stage s);

// Reduction over own-class (cluster) or other-class (separation) prototype similarities.
// Max is the default; Min follows the literal text of the original objective.
enum class Aggregation { Max, Min };

struct LossBreakdown {
  double cross_entropy = 0.0;
  double cluster = 0.0;
  double separation = 0.0;
  double orthogonality = 0.0;
  double last_layer_l1 = 0.0;
  double margin = 0.0;
  double total = 0.0;
};

// Mean over rows of -w_y * log(max(p_y, 1e-12)). Empty weights mean unweighted.
double cross_entropy_loss(const Eigen::MatrixXd& probabilities, std::span<const int> labels,
                          std::span<const double> class_weights = {});

// Inverse class frequency, normalized to mean 1 over the classes present; absent classes get 0.
ClassVector inverse_frequency_weights(std::span<const int> labels);

// (1/n) sum_i agg_{j own} s(f_i, p_j). Rows of `features` are samples.
double cluster_loss(const Eigen::MatrixXd& features, std::span<const int> labels, const Eigen::MatrixXd& prototypes,
                    const std::vector<PrototypeInfo>& info, double scale = kDefaultScale,
                    Aggregation agg = Aggregation::Max);
// -(1/n) sum_i agg_{j not own} s(f_i, p_j).
double separation_loss(const Eigen::MatrixXd& features, std::span<const int> labels,
                       const Eigen::MatrixXd& prototypes, const std::vector<PrototypeInfo>& info,
                       double scale = kDefaultScale, Aggregation agg = Aggregation::Max);
// ||P P^T - I||_F^2 over unit-normalized prototype rows.
double orthogonality_loss(const Eigen::MatrixXd& prototypes);
double last_layer_l1(const ClassConnectionMatrix& cc);
// Additive cosine margin: mean difference between the cross-entropy computed with own-class
// similarities lowered by scale * margin and the plain cross-entropy. Zero at margin 0.
double margin_loss(const Eigen::MatrixXd& features, std::span<const int> labels, const Eigen::MatrixXd& prototypes,
                   const std::vector<PrototypeInfo>& info, const ClassConnectionMatrix& cc, double margin,
                   double scale = kDefaultScale);

// Fills `total` from the component values for the given stage:
//   warm  = CE + lc*clst + ls*sep + lo*ortho (+ margin)
//   joint = warm + ll*L1
//   last  = CE + ll*L1
LossBreakdown stage_objective(Stage stage, LossBreakdown components, const LossWeights& weights,
                              bool margin_enabled = false);

struct ObjectiveOptions {
  LossWeights weights;
  Aggregation aggregation = Aggregation::Max;
  bool soft_labels = false;
  double margin = 0.0;  // 0 disables the margin term
  ClassVector class_weights{1, 1, 1, 1, 1, 1};
  double scale = kDefaultScale;
};

struct SampleTarget {
  int label = 0;
  ClassVector soft{};  // normalized votes, used when soft_labels is set
};

struct ObjectiveGradients {
  Eigen::MatrixXd prototypes;         // m x D
  Eigen::MatrixXd class_connections;  // m x 6

  void reset(Eigen::Index m, Eigen::Index dim) {
    prototypes = Eigen::MatrixXd::Zero(m, dim);
    class_connections = Eigen::MatrixXd::Zero(m, kNumClasses);
  }
};

// Adds one sample's cross-entropy, cluster, separation and margin contributions (each scaled by
// inv_n) to `acc`. When `grads` is non-null, adds the stage objective's gradients w.r.t. the
// prototypes and class connections there and returns dObjective/df; otherwise returns an empty vector.
Eigen::VectorXd accumulate_sample_terms(Stage stage, const FeatureVector& f, const SampleTarget& target,
                                        double inv_n, const ObjectiveOptions& options,
                                        const Eigen::MatrixXd& prototypes, const std::vector<PrototypeInfo>& info,
                                        const ClassConnectionMatrix& cc, LossBreakdown& acc,
                                        ObjectiveGradients* grads);

// Adds the prototype-only (orthogonality) and connection-only (L1) terms and their gradients.
void accumulate_global_terms(Stage stage, const ObjectiveOptions& options, const Eigen::MatrixXd& prototypes,
                             const ClassConnectionMatrix& cc, LossBreakdown& acc, ObjectiveGradients* grads);

}  // namespace protoeeg
