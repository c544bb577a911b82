#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "protoeeg/extractor.hpp"
#include "protoeeg/signal_data.hpp"

namespace protoeeg {

inline constexpr double kDefaultScale = 64.0;
inline constexpr int kSinglePrototypesPerClass = 5;
inline constexpr int kDualPrototypes = kNumClasses * (kNumClasses - 1) / 2;
inline constexpr int kDefaultPrototypeCount = kNumClasses * kSinglePrototypesPerClass + kDualPrototypes;

enum class PrototypeKind { Single, Dual };

// Class identity of a prototype. For Single prototypes class_b == class_a.
struct PrototypeInfo {
  PrototypeKind kind = PrototypeKind::Single;
  ClassLabel class_a = ClassLabel::Other;
  ClassLabel class_b = ClassLabel::Other;
  std::optional<std::string> source_sample_id;

  bool belongs_to(ClassLabel c) const { return c == class_a || (kind == PrototypeKind::Dual && c == class_b); }
  bool operator==(const PrototypeInfo&) const = default;
};

// Default census: 5 single-class prototypes per class (indices 5c..5c+4), then one dual
// prototype per unordered class pair in lexicographic order (0,1), (0,2), ..., (4,5).
std::vector<PrototypeInfo> default_prototype_layout();

// m x 6 class-connection weights.
struct ClassConnectionMatrix {
  Eigen::MatrixXd weights;

  // +1 on the prototype's class(es), -1 elsewhere.
  static ClassConnectionMatrix initial(const std::vector<PrototypeInfo>& layout);
};

struct PrototypeModel {
  ExtractorWeights extractor;
  Eigen::MatrixXd prototypes;  // m x feature_dim, one prototype per row
  std::vector<PrototypeInfo> info;
  ClassConnectionMatrix class_connections;
  double scale = kDefaultScale;
  std::string config_hash;

  int prototype_count() const { return static_cast<int>(prototypes.rows()); }
  bool grounded() const;
};

// Scaled cosine: a * <f/|f|, p/|p|>. Throws std::domain_error for zero-norm inputs.
double similarity(const Eigen::VectorXd& f, const Eigen::VectorXd& p, double scale = kDefaultScale);
// Similarity of one feature to every prototype row.
Eigen::VectorXd similarities(const Eigen::VectorXd& f, const Eigen::MatrixXd& prototypes,
                             double scale = kDefaultScale);

// logit_c = sum_j sims_j * weights(j, c).
Eigen::VectorXd logits(const Eigen::VectorXd& sims, const ClassConnectionMatrix& cc);
Eigen::VectorXd softmax(const Eigen::VectorXd& z);
Eigen::VectorXd log_softmax(const Eigen::VectorXd& z);

struct Prediction {
  Eigen::VectorXd sims;
  Eigen::VectorXd logits;
  Eigen::VectorXd probabilities;
  ClassLabel predicted() const;
};

Prediction predict_from_feature(const FeatureVector& f, const PrototypeModel& model);
Eigen::VectorXd predict(const EegSample& sample, const PrototypeModel& model);

struct SimilarityRecord {
  std::string sample_id;
  int prototype_index = 0;
  ClassLabel designated_class = ClassLabel::Other;
  double sim = 0.0;
  double affinity = 0.0;
  double score = 0.0;
};

// The k most similar prototypes, descending by similarity (ties: lower index first), with
// affinity taken against target_class (default: the predicted class).
std::vector<SimilarityRecord> explain_feature(const std::string& sample_id, const FeatureVector& f,
                                              const PrototypeModel& model, std::optional<ClassLabel> target,
                                              int k);
std::vector<SimilarityRecord> explain(const EegSample& sample, const PrototypeModel& model,
                                      std::optional<ClassLabel> target, int k);

// For each of the three classes with the highest logits, the most similar prototype whose
// class identity includes that class (ties: lower index).
std::vector<SimilarityRecord> explain_per_class_feature(const std::string& sample_id, const FeatureVector& f,
                                                        const PrototypeModel& model);
std::vector<SimilarityRecord> explain_per_class(const EegSample& sample, const PrototypeModel& model);

}  // namespace protoeeg
