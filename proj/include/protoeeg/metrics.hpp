#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "protoeeg/signal_data.hpp"

namespace protoeeg {

struct ScoredSample {
  std::string sample_id;
  std::string patient_id;
  VoteDistribution votes;
  ClassLabel majority = ClassLabel::Other;
  Eigen::VectorXd scores;  // 6 probabilities
  Eigen::VectorXd latent;
};

// A metric that has no value on the given input (e.g. AUROC without negatives).
struct MetricUndefined : std::domain_error {
  using std::domain_error::domain_error;
};

// Mann-Whitney AUROC with tied scores counted one half. Labels are 0/1.
double auroc(std::span<const double> scores, std::span<const int> labels);
// Average precision over a descending sweep; tied scores form one operating point.
double auprc(std::span<const double> scores, std::span<const int> labels);

enum class BootstrapUnit { Sample, Patient };
std::string_view bootstrap_unit_name(BootstrapUnit u);

// Evaluates a metric on a multiset of sample indices; may throw MetricUndefined.
using IndexMetric = std::function<double(std::span<const std::size_t>)>;

struct BootstrapResult {
  double median = 0.0;
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation of the draws
  double lo = 0.0;  // mean - 1.96 sd / sqrt(N)
  double hi = 0.0;
  std::vector<double> draws;
  int redraws = 0;              // draws rejected because the metric was undefined
  std::string index_log_sha256;  // digest of the accepted resample index sequences
};

// Resamples `samples` (unit Sample) or their patients (unit Patient, every sample of a drawn
// patient included) with replacement n_boot times.
BootstrapResult bootstrap_ci(const IndexMetric& metric, std::span<const ScoredSample> samples, int n_boot,
                             BootstrapUnit unit, std::uint64_t seed);

// Recomputes mean, sd and the interval from a draw vector.
void summarize_draws(BootstrapResult& r);

// 100 x share of paired draws where a > b.
double percent_better(std::span<const double> a, std::span<const double> b);
// Same, after checking that both results come from the same resample sequence.
double percent_better(const BootstrapResult& a, const BootstrapResult& b);

struct DeLongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double z = 0.0;
  double p = 1.0;
  bool degenerate = false;  // zero variance of the AUROC difference
};
DeLongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                         std::span<const int> labels);

// Exact cosine k-NN in latent space; the query is excluded and ties go to the lower sample id.
std::vector<std::string> knn_latent(std::span<const ScoredSample> samples, std::string_view query_id, int k);
// Neighbor indices for every sample.
std::vector<std::vector<std::size_t>> knn_table(std::span<const ScoredSample> samples, int k);

struct NeighborhoodResult {
  std::vector<double> per_sample;
  ClassVector per_class{};  // NaN for classes without samples
  std::array<int, kNumClasses> class_counts{};
  double all = 0.0;  // per-class values weighted by class counts
};

// Share of the k neighbors sharing the sample's majority class.
NeighborhoodResult neighborhood_by_max(std::span<const ScoredSample> samples, int k = 10);
// Mean cross-entropy H(p_i, p_j) between the sample's and each neighbor's vote distribution.
NeighborhoodResult neighborhood_by_vote(std::span<const ScoredSample> samples, int k = 10);
// Aggregates per-sample values into per-class means and the count-weighted All.
NeighborhoodResult aggregate_by_class(std::span<const ScoredSample> samples, std::vector<double> per_sample);

// -sum_c p(c) log(max(q(c), 1e-12)).
double vote_cross_entropy(const ClassVector& p, const ClassVector& q);

// Two-sided paired sign-flip permutation test on a - b; p = (b + 1) / (rounds + 1).
double neighborhood_significance(std::span<const double> a, std::span<const double> b, int rounds = 10000,
                                 std::uint64_t seed = 0);

}  // namespace protoeeg
