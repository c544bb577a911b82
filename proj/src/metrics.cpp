#include "protoeeg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "protoeeg/hashing.hpp"
#include "protoeeg/objectives.hpp"

namespace protoeeg {

namespace {

void check_binary(std::span<const double> scores, std::span<const int> labels, const char* what) {
  if (scores.size() != labels.size()) throw std::invalid_argument(std::string(what) + ": size mismatch");
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument(std::string(what) + ": labels must be 0 or 1");
}

std::vector<std::size_t> order_by(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](auto a, auto b) { return descending ? scores[a] > scores[b] : scores[a] < scores[b]; });
  return idx;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_binary(scores, labels, "auroc");
  const auto idx = order_by(scores, false);
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * double(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (labels[idx[t]] == 1) {
        rank_sum += midrank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricUndefined("auroc needs both positive and negative labels");
  return (rank_sum - 0.5 * double(n_pos) * double(n_pos + 1)) / (double(n_pos) * double(n_neg));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  check_binary(scores, labels, "auprc");
  const double n_pos = std::count(labels.begin(), labels.end(), 1);
  if (n_pos == 0) throw MetricUndefined("auprc needs at least one positive label");
  const auto idx = order_by(scores, true);
  double tp = 0.0, seen = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double group_pos = 0.0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) group_pos += labels[idx[j++]];
    tp += group_pos;
    seen += double(j - i);
    ap += (tp / seen) * (group_pos / n_pos);
    i = j;
  }
  return ap;
}

std::string_view bootstrap_unit_name(BootstrapUnit u) { return u == BootstrapUnit::Sample ? "sample" : "patient"; }

void summarize_draws(BootstrapResult& r) {
  const double n = double(r.draws.size());
  r.mean = std::accumulate(r.draws.begin(), r.draws.end(), 0.0) / n;
  double ss = 0.0;
  for (double d : r.draws) ss += (d - r.mean) * (d - r.mean);
  r.sd = std::sqrt(ss / n);
  const double half = 1.96 * r.sd / std::sqrt(n);
  r.lo = r.mean - half;
  r.hi = r.mean + half;
  std::vector<double> sorted = r.draws;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  r.median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
}

BootstrapResult bootstrap_ci(const IndexMetric& metric, std::span<const ScoredSample> samples, int n_boot,
                             BootstrapUnit unit, std::uint64_t seed) {
  if (n_boot < 2) throw std::invalid_argument("bootstrap_ci: n_boot must be >= 2");
  if (samples.empty()) throw std::invalid_argument("bootstrap_ci: no samples");
  std::vector<std::vector<std::size_t>> groups;
  if (unit == BootstrapUnit::Sample) {
    for (std::size_t i = 0; i < samples.size(); ++i) groups.push_back({i});
  } else {
    std::map<std::string, std::vector<std::size_t>> by_patient;
    for (std::size_t i = 0; i < samples.size(); ++i) by_patient[samples[i].patient_id].push_back(i);
    for (auto& [_, v] : by_patient) groups.push_back(std::move(v));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, groups.size() - 1);
  constexpr int kMaxConsecutiveRedraws = 1000;
  BootstrapResult r;
  Sha256 log;
  std::vector<std::size_t> draw;
  while (static_cast<int>(r.draws.size()) < n_boot) {
    int failures = 0;
    for (;;) {
      draw.clear();
      for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& members = groups[pick(rng)];
        draw.insert(draw.end(), members.begin(), members.end());
      }
      try {
        r.draws.push_back(metric(draw));
        break;
      } catch (const MetricUndefined&) {
        ++r.redraws;
        if (++failures >= kMaxConsecutiveRedraws) throw;
      }
    }
    log.update(std::span<const std::byte>(reinterpret_cast<const std::byte*>(draw.data()),
                                          draw.size() * sizeof(std::size_t)));
  }
  r.index_log_sha256 = log.hex_digest();
  summarize_draws(r);
  return r;
}

double percent_better(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("percent_better: length mismatch");
  if (a.empty()) throw std::invalid_argument("percent_better: no draws");
  std::size_t wins = 0;
  for (std::size_t i = 0; i < a.size(); ++i) wins += a[i] > b[i];
  return 100.0 * double(wins) / double(a.size());
}

double percent_better(const BootstrapResult& a, const BootstrapResult& b) {
  if (a.index_log_sha256 != b.index_log_sha256)
    throw std::invalid_argument("percent_better: draws come from different resample sequences");
  return percent_better(a.draws, b.draws);
}

DeLongResult delong_test(std::span<const double> sa, std::span<const double> sb, std::span<const int> labels) {
  check_binary(sa, labels, "delong_test");
  check_binary(sb, labels, "delong_test");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw MetricUndefined("delong_test needs both positive and negative labels");
  const double m = double(pos.size()), n = double(neg.size());

  // Placement values: V10 per positive, V01 per negative, for both models.
  auto psi = [](double x, double y) { return x > y ? 1.0 : (x == y ? 0.5 : 0.0); };
  Eigen::MatrixXd v10(pos.size(), 2), v01(neg.size(), 2);
  v10.setZero();
  v01.setZero();
  for (int k = 0; k < 2; ++k) {
    const auto s = k == 0 ? sa : sb;
    for (std::size_t i = 0; i < pos.size(); ++i)
      for (std::size_t j = 0; j < neg.size(); ++j) {
        const double v = psi(s[pos[i]], s[neg[j]]);
        v10(i, k) += v;
        v01(j, k) += v;
      }
  }
  v10 /= n;
  v01 /= m;
  DeLongResult r;
  r.auc_a = v10.col(0).mean();
  r.auc_b = v10.col(1).mean();

  // Variance of the paired difference; identical models give exactly zero.
  auto diff_variance = [](const Eigen::MatrixXd& v) {
    const Eigen::VectorXd d = v.col(0) - v.col(1);
    const Eigen::VectorXd centered = d.array() - d.mean();
    return centered.squaredNorm() / double(std::max<Eigen::Index>(v.rows() - 1, 1));
  };
  const double var = diff_variance(v10) / m + diff_variance(v01) / n;
  if (!(var > 0.0)) {
    r.degenerate = true;
    return r;
  }
  r.z = (r.auc_a - r.auc_b) / std::sqrt(var);
  r.p = std::erfc(std::abs(r.z) / std::sqrt(2.0));
  return r;
}

namespace {

Eigen::MatrixXd unit_latents(std::span<const ScoredSample> samples) {
  if (samples.empty()) return {};
  Eigen::MatrixXd l(static_cast<Eigen::Index>(samples.size()), samples.front().latent.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double norm = samples[i].latent.norm();
    if (!(norm > 0.0)) throw std::domain_error("zero-norm latent for " + samples[i].sample_id);
    l.row(static_cast<Eigen::Index>(i)) = samples[i].latent.transpose() / norm;
  }
  return l;
}

std::vector<std::size_t> top_k(const Eigen::VectorXd& sims, std::size_t query, int k,
                               std::span<const ScoredSample> samples) {
  std::vector<std::size_t> cand;
  for (std::size_t j = 0; j < samples.size(); ++j)
    if (j != query) cand.push_back(j);
  if (k > static_cast<int>(cand.size())) throw std::invalid_argument("knn: k exceeds the number of other samples");
  auto better = [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return samples[a].sample_id < samples[b].sample_id;
  };
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), better);
  cand.resize(k);
  return cand;
}

}  // namespace

std::vector<std::string> knn_latent(std::span<const ScoredSample> samples, std::string_view query_id, int k) {
  if (k < 0) throw std::invalid_argument("knn_latent: k must be >= 0");
  std::size_t q = samples.size();
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].sample_id == query_id) q = i;
  if (q == samples.size()) throw std::out_of_range("knn_latent: unknown sample id " + std::string(query_id));
  if (k == 0) return {};
  const Eigen::MatrixXd l = unit_latents(samples);
  const Eigen::VectorXd sims = l * l.row(static_cast<Eigen::Index>(q)).transpose();
  std::vector<std::string> out;
  for (auto j : top_k(sims, q, k, samples)) out.push_back(samples[j].sample_id);
  return out;
}

std::vector<std::vector<std::size_t>> knn_table(std::span<const ScoredSample> samples, int k) {
  if (k < 0) throw std::invalid_argument("knn_table: k must be >= 0");
  const Eigen::MatrixXd l = unit_latents(samples);
  const Eigen::MatrixXd gram = l * l.transpose();
  std::vector<std::vector<std::size_t>> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    out[i] = top_k(gram.row(static_cast<Eigen::Index>(i)).transpose(), i, k, samples);
  return out;
}

NeighborhoodResult aggregate_by_class(std::span<const ScoredSample> samples, std::vector<double> per_sample) {
  if (per_sample.size() != samples.size()) throw std::invalid_argument("aggregate_by_class: size mismatch");
  NeighborhoodResult r;
  ClassVector sums{};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int c = index_of(samples[i].majority);
    sums[c] += per_sample[i];
    ++r.class_counts[c];
  }
  double weighted = 0.0;
  int total = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (r.class_counts[c] == 0) {
      r.per_class[c] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    r.per_class[c] = sums[c] / r.class_counts[c];
    weighted += r.per_class[c] * r.class_counts[c];
    total += r.class_counts[c];
  }
  r.all = total > 0 ? weighted / total : std::numeric_limits<double>::quiet_NaN();
  r.per_sample = std::move(per_sample);
  return r;
}

NeighborhoodResult neighborhood_by_max(std::span<const ScoredSample> samples, int k) {
  const auto table = knn_table(samples, k);
  std::vector<double> values(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    int same = 0;
    for (auto j : table[i]) same += samples[j].majority == samples[i].majority;
    values[i] = k > 0 ? double(same) / k : 0.0;
  }
  return aggregate_by_class(samples, std::move(values));
}

double vote_cross_entropy(const ClassVector& p, const ClassVector& q) {
  double h = 0.0;
  for (int c = 0; c < kNumClasses; ++c)
    if (p[c] != 0.0) h -= p[c] * std::log(std::max(q[c], kLogEpsilon));
  return h;
}

NeighborhoodResult neighborhood_by_vote(std::span<const ScoredSample> samples, int k) {
  const auto table = knn_table(samples, k);
  std::vector<ClassVector> dist;
  for (const auto& s : samples) dist.push_back(s.votes.normalized());
  std::vector<double> values(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double sum = 0.0;
    for (auto j : table[i]) sum += vote_cross_entropy(dist[i], dist[j]);
    values[i] = k > 0 ? sum / k : 0.0;
  }
  return aggregate_by_class(samples, std::move(values));
}

double neighborhood_significance(std::span<const double> a, std::span<const double> b, int rounds,
                                 std::uint64_t seed) {
  if (a.size() != b.size()) throw std::invalid_argument("neighborhood_significance: length mismatch");
  if (rounds < 1) throw std::invalid_argument("neighborhood_significance: rounds must be >= 1");
  const std::size_t n = a.size();
  if (n == 0) return 1.0;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double observed = std::abs(std::accumulate(d.begin(), d.end(), 0.0)) / double(n);
  const double threshold = observed * (1.0 - 1e-12);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution flip(0.5);
  int extreme = 0;
  for (int r = 0; r < rounds; ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += flip(rng) ? -d[i] : d[i];
    extreme += std::abs(sum) / double(n) >= threshold;
  }
  return double(extreme + 1) / double(rounds + 1);
}

}  // namespace protoeeg
