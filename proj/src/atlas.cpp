#include "protoeeg/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace protoeeg {

using nlohmann::json;

std::string_view embedding_space_name(EmbeddingSpace s) { return s == EmbeddingSpace::ClassScores ? "scores" : "latent"; }

EmbeddingSpace parse_embedding_space(std::string_view name) {
  if (name == "scores") return EmbeddingSpace::ClassScores;
  if (name == "latent") return EmbeddingSpace::Latent;
  throw std::invalid_argument("embedding space must be scores or latent");
}

json EmbeddingConfig::to_json() const {
  return {{"neighbors", neighbors},
          {"mid_near_ratio", mid_near_ratio},
          {"further_ratio", further_ratio},
          {"iterations", iterations},
          {"phase1_iterations", phase1_iterations},
          {"phase2_iterations", phase2_iterations},
          {"learning_rate", learning_rate},
          {"pca_dims", pca_dims},
          {"space", embedding_space_name(space)}};
}

namespace {

// Top principal directions of centered data, signs fixed so each direction's largest
// component is positive.
Eigen::MatrixXd principal_scores(const Eigen::MatrixXd& centered, int dims) {
  const Eigen::MatrixXd cov = centered.transpose() * centered / double(std::max<Eigen::Index>(centered.rows() - 1, 1));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index d = cov.rows();
  Eigen::MatrixXd basis(d, dims);
  for (int k = 0; k < dims; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - k);  // eigenvalues ascend
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    basis.col(k) = v;
  }
  return centered * basis;
}

Eigen::MatrixXd preprocess(const Eigen::MatrixXd& x, int pca_dims) {
  if (x.cols() > pca_dims) {
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    return principal_scores(centered, pca_dims);
  }
  Eigen::MatrixXd y = x.array() - x.minCoeff();
  const double max = y.maxCoeff();
  if (max > 0) y /= max;
  return y.rowwise() - y.colwise().mean();
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd d = (-2.0 * x * x.transpose()).colwise() + sq;
  d.rowwise() += sq.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

// Indices of the k nearest other points by the given distance row; ties go to the lower index.
std::vector<int> nearest(const Eigen::VectorXd& row, int self, int k) {
  std::vector<int> cand;
  for (int j = 0; j < row.size(); ++j)
    if (j != self) cand.push_back(j);
  k = std::min<int>(k, static_cast<int>(cand.size()));
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), [&](int a, int b) {
    return row[a] != row[b] ? row[a] < row[b] : a < b;
  });
  cand.resize(k);
  return cand;
}

struct Pairs {
  std::vector<std::pair<int, int>> near, mid, far;
};

Pairs sample_pairs(const Eigen::MatrixXd& x, const EmbeddingConfig& cfg, std::mt19937_64& rng) {
  const int n = static_cast<int>(x.rows());
  const Eigen::MatrixXd d2 = squared_distances(x);
  const int n_mid = static_cast<int>(std::lround(cfg.neighbors * cfg.mid_near_ratio));
  const int n_far = static_cast<int>(std::lround(cfg.neighbors * cfg.further_ratio));

  // Local scale: mean distance to the 4th..6th nearest neighbors.
  const int n_cand = std::min(cfg.neighbors + 50, n - 1);
  std::vector<std::vector<int>> cand(n);
  Eigen::VectorXd sigma(n);
  for (int i = 0; i < n; ++i) {
    cand[i] = nearest(d2.row(i).transpose(), i, n_cand);
    double s = 0.0;
    int used = 0;
    for (int r = 3; r < 6 && r < static_cast<int>(cand[i].size()); ++r, ++used) s += std::sqrt(d2(i, cand[i][r]));
    sigma[i] = std::max(used ? s / used : 0.0, 1e-10);
  }
  Pairs p;
  std::vector<std::set<int>> neighbor_sets(n);
  for (int i = 0; i < n; ++i) {
    std::vector<int> c = cand[i];
    auto scaled = [&](int j) { return d2(i, j) / (sigma[i] * sigma[j]); };
    const int k = std::min<int>(cfg.neighbors, static_cast<int>(c.size()));
    std::partial_sort(c.begin(), c.begin() + k, c.end(), [&](int a, int b) {
      const double sa = scaled(a), sb = scaled(b);
      return sa != sb ? sa < sb : a < b;
    });
    for (int r = 0; r < k; ++r) {
      p.near.emplace_back(i, c[r]);
      neighbor_sets[i].insert(c[r]);
    }
  }
  std::uniform_int_distribution<int> pick(0, n - 1);
  auto other_than = [&](int i) {
    int j;
    do j = pick(rng);
    while (j == i);
    return j;
  };
  for (int i = 0; i < n; ++i) {
    for (int m = 0; m < n_mid; ++m) {
      std::array<int, 6> s;
      for (int& v : s) v = other_than(i);
      std::sort(s.begin(), s.end(), [&](int a, int b) { return d2(i, a) != d2(i, b) ? d2(i, a) < d2(i, b) : a < b; });
      p.mid.emplace_back(i, s[1]);
    }
    const int available = n - 1 - static_cast<int>(neighbor_sets[i].size());
    std::set<int> chosen;
    for (int f = 0; f < std::min(n_far, available); ++f) {
      int j;
      do j = other_than(i);
      while (neighbor_sets[i].count(j) || chosen.count(j));
      chosen.insert(j);
      p.far.emplace_back(i, j);
    }
  }
  return p;
}

}  // namespace

Eigen::MatrixXd embed_2d(const Eigen::MatrixXd& vectors, const EmbeddingConfig& cfg, std::uint64_t seed) {
  const Eigen::Index n = vectors.rows();
  if (n < cfg.neighbors + 1)
    throw std::invalid_argument("embed_2d: need at least " + std::to_string(cfg.neighbors + 1) + " points");
  if (!vectors.allFinite()) throw std::invalid_argument("embed_2d: non-finite input");
  const Eigen::MatrixXd x = preprocess(vectors, cfg.pca_dims);
  std::mt19937_64 rng(seed);
  const Pairs pairs = sample_pairs(x, cfg, rng);

  // Initial layout: first two principal components scaled to a 0.01 standard deviation.
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::MatrixXd y = x.cols() >= 2 ? principal_scores(centered, 2) : Eigen::MatrixXd::Zero(n, 2);
  const double sd = std::sqrt((y.col(0).array() - y.col(0).mean()).square().mean());
  y *= sd > 0 ? 0.01 / sd : 0.0;
  if (!(sd > 0)) {
    std::normal_distribution<double> jitter(0.0, 1e-4);
    y = Eigen::MatrixXd::NullaryExpr(n, 2, [&] { return jitter(rng); });
  }

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, 2), v = Eigen::MatrixXd::Zero(n, 2), grad(n, 2);
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-7;
  for (int it = 0; it < cfg.iterations; ++it) {
    double w_mid, w_near, w_far = 1.0;
    if (it < cfg.phase1_iterations) {
      const double t = double(it) / cfg.phase1_iterations;
      w_mid = (1.0 - t) * 1000.0 + t * 3.0;
      w_near = 2.0;
    } else if (it < cfg.phase1_iterations + cfg.phase2_iterations) {
      w_mid = 3.0;
      w_near = 3.0;
    } else {
      w_mid = 0.0;
      w_near = 1.0;
    }
    grad.setZero();
    auto attract = [&](const auto& list, double w, double c) {
      if (w == 0.0) return;
      for (const auto& [i, j] : list) {
        const Eigen::RowVector2d diff = y.row(i) - y.row(j);
        const double dt = 1.0 + diff.squaredNorm();
        const Eigen::RowVector2d g = (w * 2.0 * c / ((c + dt) * (c + dt))) * diff;
        grad.row(i) += g;
        grad.row(j) -= g;
      }
    };
    attract(pairs.near, w_near, 10.0);
    attract(pairs.mid, w_mid, 10000.0);
    for (const auto& [i, j] : pairs.far) {
      const Eigen::RowVector2d diff = y.row(i) - y.row(j);
      const double dt = 1.0 + diff.squaredNorm();
      const Eigen::RowVector2d g = (w_far * 2.0 / ((1.0 + dt) * (1.0 + dt))) * diff;
      grad.row(i) -= g;
      grad.row(j) += g;
    }
    const int t = it + 1;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseAbs2();
    const double lr_t = cfg.learning_rate * std::sqrt(1.0 - std::pow(b2, t)) / (1.0 - std::pow(b1, t));
    y.array() -= lr_t * m.array() / (v.array().sqrt() + eps);
  }
  return y;
}

std::vector<EmbeddingPoint> embed_points(std::span<const std::string> ids, const Eigen::MatrixXd& vectors,
                                         const EmbeddingConfig& cfg, std::uint64_t seed) {
  if (static_cast<Eigen::Index>(ids.size()) != vectors.rows()) throw std::invalid_argument("embed_points: size mismatch");
  const Eigen::MatrixXd y = embed_2d(vectors, cfg, seed);
  std::vector<EmbeddingPoint> out;
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.push_back({ids[i], y(static_cast<Eigen::Index>(i), 0), y(static_cast<Eigen::Index>(i), 1), cfg.space});
  return out;
}

Eigen::MatrixXd embedding_input(std::span<const ScoredSample> samples, EmbeddingSpace space) {
  if (samples.empty()) return {};
  const auto& first = space == EmbeddingSpace::ClassScores ? samples[0].scores : samples[0].latent;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(samples.size()), first.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) =
        (space == EmbeddingSpace::ClassScores ? samples[i].scores : samples[i].latent).transpose();
  return x;
}

double knn_preservation(const Eigen::MatrixXd& high, const Eigen::MatrixXd& low, int k) {
  if (high.rows() != low.rows()) throw std::invalid_argument("knn_preservation: size mismatch");
  const int n = static_cast<int>(high.rows());
  if (k < 1 || k > n - 1) throw std::invalid_argument("knn_preservation: k out of range");
  const Eigen::MatrixXd dh = squared_distances(high);
  const Eigen::MatrixXd dl = squared_distances(low);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    auto a = nearest(dh.row(i).transpose(), i, k);
    auto b = nearest(dl.row(i).transpose(), i, k);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<int> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    total += double(common.size()) / k;
  }
  return total / n;
}

// ---------------------------------------------------------------- continuum paths

json ContinuumPath::to_json() const {
  return {{"class_a", class_name(class_a)}, {"class_b", class_name(class_b)}, {"epsilon", epsilon},
          {"sample_ids", sample_ids},       {"step_distance", step_distance}};
}

namespace {
std::string no_path_message(ClassLabel a, ClassLabel b, double eps, double min_eps) {
  std::ostringstream o;
  o << "no continuum path " << class_name(a) << " -> " << class_name(b) << " at epsilon " << eps
    << "; minimal connecting epsilon " << min_eps;
  return o.str();
}

Eigen::MatrixXd distances(const Eigen::MatrixXd& y) { return squared_distances(y).cwiseSqrt(); }

bool connected(const Eigen::MatrixXd& d, std::size_t from, std::size_t to, double eps) {
  std::vector<char> seen(d.rows(), 0);
  std::vector<std::size_t> stack{from};
  seen[from] = 1;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    if (u == to) return true;
    for (Eigen::Index w = 0; w < d.rows(); ++w)
      if (!seen[w] && d(u, w) <= eps) {
        seen[w] = 1;
        stack.push_back(w);
      }
  }
  return false;
}

double bisect_epsilon(const Eigen::MatrixXd& d, std::size_t from, std::size_t to) {
  if (from == to) return 0.0;
  std::vector<double> values;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = i + 1; j < d.cols(); ++j) values.push_back(d(i, j));
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::size_t lo = 0, hi = values.size() - 1;  // the largest distance always connects
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (connected(d, from, to, values[mid]))
      hi = mid;
    else
      lo = mid + 1;
  }
  return values[lo];
}
}  // namespace

NoPathError::NoPathError(ClassLabel a, ClassLabel b, double eps, double min_eps)
    : std::runtime_error(no_path_message(a, b, eps, min_eps)), epsilon(eps), minimal_epsilon(min_eps) {}

double default_path_epsilon(const Eigen::MatrixXd& y) {
  if (y.rows() < 2) throw std::invalid_argument("default_path_epsilon: need at least two points");
  Eigen::MatrixXd d = distances(y);
  d.diagonal().setConstant(std::numeric_limits<double>::infinity());
  std::vector<double> nn(d.rows());
  for (Eigen::Index i = 0; i < d.rows(); ++i) nn[i] = d.row(i).minCoeff();
  std::sort(nn.begin(), nn.end());
  const std::size_t m = nn.size();
  const double median = m % 2 ? nn[m / 2] : 0.5 * (nn[m / 2 - 1] + nn[m / 2]);
  return 2.0 * median;
}

double minimal_connecting_epsilon(const Eigen::MatrixXd& y, std::size_t from, std::size_t to) {
  return bisect_epsilon(distances(y), from, to);
}

std::size_t most_confident(std::span<const ScoredSample> samples, ClassLabel c) {
  std::size_t best = samples.size();
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].majority == c && (best == samples.size() || samples[i].scores[index_of(c)] > samples[best].scores[index_of(c)]))
      best = i;
  if (best == samples.size()) throw std::invalid_argument("no sample with majority class " + std::string(class_name(c)));
  return best;
}

ContinuumPath continuum_path(const Eigen::MatrixXd& y, std::span<const ScoredSample> samples, ClassLabel a,
                             ClassLabel b, double eps) {
  if (static_cast<Eigen::Index>(samples.size()) != y.rows()) throw std::invalid_argument("continuum_path: size mismatch");
  const std::size_t from = most_confident(samples, a);
  const std::size_t to = most_confident(samples, b);
  ContinuumPath path;
  path.class_a = a;
  path.class_b = b;
  path.epsilon = eps;
  const Eigen::MatrixXd d = distances(y);
  const std::size_t n = samples.size();

  // Lexicographic Dijkstra on (hops, length); equal keys keep the lower predecessor index.
  using Key = std::tuple<int, double, std::size_t>;
  std::vector<int> hops(n, std::numeric_limits<int>::max());
  std::vector<double> len(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> prev(n, n);
  std::priority_queue<Key, std::vector<Key>, std::greater<>> queue;
  hops[from] = 0;
  len[from] = 0.0;
  queue.emplace(0, 0.0, from);
  std::vector<char> done(n, 0);
  while (!queue.empty()) {
    const auto [h, l, u] = queue.top();
    queue.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (u == to) break;
    for (std::size_t w = 0; w < n; ++w) {
      if (w == u || done[w] || d(u, w) > eps) continue;
      const int nh = h + 1;
      const double nl = l + d(u, w);
      if (std::tie(nh, nl) < std::tie(hops[w], len[w]) ||
          (nh == hops[w] && nl == len[w] && u < prev[w])) {
        hops[w] = nh;
        len[w] = nl;
        prev[w] = u;
        queue.emplace(nh, nl, w);
      }
    }
  }
  if (!done[to]) throw NoPathError(a, b, eps, bisect_epsilon(d, from, to));
  for (std::size_t v = to; v != n; v = prev[v]) path.indices.push_back(v);
  std::reverse(path.indices.begin(), path.indices.end());
  for (std::size_t s = 0; s < path.indices.size(); ++s) {
    path.sample_ids.push_back(samples[path.indices[s]].sample_id);
    if (s > 0) path.step_distance.push_back(d(path.indices[s - 1], path.indices[s]));
  }
  return path;
}

}  // namespace protoeeg
