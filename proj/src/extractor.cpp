#include "protoeeg/extractor.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <variant>

namespace protoeeg {

ExtractorConfig ExtractorConfig::for_dataset(int channels, int sample_rate) {
  ExtractorConfig c;
  c.input_channels = channels;
  c.window_samples = sample_rate * 10;
  c.windows = static_cast<int>(kSampleDurationSeconds / 10.0);
  return c;
}

std::vector<TensorSlice> extractor_layout(const ExtractorConfig& cfg) {
  std::vector<TensorSlice> out;
  std::size_t off = 0;
  auto add = [&](std::string name, int rows, int cols) {
    out.push_back({std::move(name), off, rows, cols});
    off += std::size_t(rows) * cols;
  };
  int in = cfg.input_channels;
  for (int b = 0; b < cfg.blocks; ++b) {
    const int width = cfg.block_width(b);
    add("conv" + std::to_string(b) + ".weight", width, cfg.kernel * in);
    add("conv" + std::to_string(b) + ".bias", width, 1);
    in = width;
  }
  add("proj.weight", cfg.window_features, in);
  add("proj.bias", cfg.window_features, 1);
  return out;
}

std::size_t extractor_parameter_count(const ExtractorConfig& cfg) {
  const auto layout = extractor_layout(cfg);
  return layout.back().offset + layout.back().size();
}

ExtractorWeights ExtractorWeights::random(const ExtractorConfig& cfg, std::uint64_t seed) {
  ExtractorWeights w;
  w.config = cfg;
  w.params = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(extractor_parameter_count(cfg)));
  std::mt19937_64 rng(seed);
  for (const auto& t : extractor_layout(cfg)) {
    const bool bias = t.cols == 1 && t.name.ends_with(".bias");
    double stddev;
    if (bias)
      stddev = t.name.starts_with("proj") ? 0.1 : 0.0;
    else
      stddev = t.name.starts_with("proj") ? std::sqrt(1.0 / t.cols) : std::sqrt(2.0 / t.cols);
    if (stddev == 0.0) continue;
    std::normal_distribution<double> dist(0.0, stddev);
    for (std::size_t i = 0; i < t.size(); ++i) w.params[static_cast<Eigen::Index>(t.offset + i)] = dist(rng);
  }
  return w;
}

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct LayerTape {
  Mat<T> col;  // (kernel * in) x out_len
  Mat<T> act;  // ELU output, width x out_len
  int in_len = 0;
};

template <typename T>
struct WindowTape {
  std::vector<LayerTape<T>> layers;
  Vec<T> pooled;
};

// Shapes and parameters of the window encoder in compute precision T.
template <typename T>
class WindowNet {
 public:
  explicit WindowNet(const ExtractorWeights& w) : cfg_(w.config) {
    params_ = w.params.cast<T>();
    layout_ = extractor_layout(cfg_);
  }

  const ExtractorConfig& config() const { return cfg_; }

  Eigen::Map<const Mat<T>> tensor(std::size_t i) const {
    const auto& s = layout_[i];
    return {params_.data() + s.offset, s.rows, s.cols};
  }

  int pad() const { return cfg_.kernel / 2; }
  int out_len(int in_len) const { return (in_len + 2 * pad() - cfg_.kernel) / cfg_.stride + 1; }

  // Window input scaled to model units, padded on both sides along time.
  Mat<T> load_window(const EegSample& s, int offset) const {
    const int L = cfg_.window_samples;
    Mat<T> x = Mat<T>::Zero(cfg_.input_channels, L + 2 * pad());
    const int n = s.timesteps();
    const T scale = static_cast<T>(cfg_.input_scale);
    for (int c = 0; c < cfg_.input_channels; ++c) {
      const float* row = s.signal.data() + std::size_t(c) * n + offset;
      for (int t = 0; t < L; ++t) x(c, pad() + t) = scale * static_cast<T>(row[t]);
    }
    return x;
  }

  Vec<T> forward(Mat<T> xpad, WindowTape<T>* tape) const {
    int in = cfg_.input_channels;
    int len = cfg_.window_samples;
    const int K = cfg_.kernel;
    const int S = cfg_.stride;
    if (tape) tape->layers.resize(cfg_.blocks);
    Mat<T> act;
    for (int b = 0; b < cfg_.blocks; ++b) {
      const int width = cfg_.block_width(b);
      const int lo = out_len(len);
      Mat<T> col(K * in, lo);
      for (int t = 0; t < lo; ++t)
        for (int k = 0; k < K; ++k) col.block(k * in, t, in, 1) = xpad.col(S * t + k);
      Mat<T> z = tensor(2 * b) * col;
      z.colwise() += tensor(2 * b + 1).col(0);
      act = z.unaryExpr([](T v) { return v > T(0) ? v : std::expm1(v); });
      if (b + 1 < cfg_.blocks) {
        xpad = Mat<T>::Zero(width, lo + 2 * pad());
        xpad.middleCols(pad(), lo) = act;
      }
      if (tape) {
        tape->layers[b].col = std::move(col);
        tape->layers[b].act = act;
        tape->layers[b].in_len = len;
      }
      in = width;
      len = lo;
    }
    Vec<T> pooled = act.rowwise().mean();
    Vec<T> out = tensor(2 * cfg_.blocks) * pooled + tensor(2 * cfg_.blocks + 1).col(0);
    if (tape) tape->pooled = std::move(pooled);
    return out;
  }

  void backward(const WindowTape<T>& tape, const Vec<T>& d_out, Vec<T>& grad) const {
    const int B = cfg_.blocks;
    const int K = cfg_.kernel;
    const int S = cfg_.stride;
    auto g = [&](std::size_t i) {
      const auto& s = layout_[i];
      return Eigen::Map<Mat<T>>(grad.data() + s.offset, s.rows, s.cols);
    };
    g(2 * B).noalias() += d_out * tape.pooled.transpose();
    g(2 * B + 1).col(0) += d_out;
    const Vec<T> d_pooled = tensor(2 * B).transpose() * d_out;

    const auto& last = tape.layers[B - 1];
    Mat<T> d_act = d_pooled.replicate(1, last.act.cols()) / static_cast<T>(last.act.cols());
    for (int b = B - 1; b >= 0; --b) {
      const auto& lt = tape.layers[b];
      // ELU derivative: 1 for positive pre-activation, exp(z) = act + 1 otherwise.
      Mat<T> dz = d_act.binaryExpr(lt.act, [](T d, T a) { return a > T(0) ? d : d * (a + T(1)); });
      g(2 * b).noalias() += dz * lt.col.transpose();
      g(2 * b + 1).col(0) += dz.rowwise().sum();
      if (b == 0) break;
      const int in = b == 0 ? cfg_.input_channels : cfg_.block_width(b - 1);
      const Mat<T> d_col = tensor(2 * b).transpose() * dz;
      Mat<T> d_xpad = Mat<T>::Zero(in, lt.in_len + 2 * pad());
      for (int t = 0; t < dz.cols(); ++t)
        for (int k = 0; k < K; ++k) d_xpad.col(S * t + k) += d_col.block(k * in, t, in, 1);
      d_act = d_xpad.middleCols(pad(), lt.in_len);
    }
  }

  Vec<T> zero_grad() const { return Vec<T>::Zero(params_.size()); }

 private:
  ExtractorConfig cfg_;
  Vec<T> params_;
  std::vector<TensorSlice> layout_;
};

void check_sample(const ExtractorConfig& cfg, const EegSample& s) {
  if (s.channels != cfg.input_channels)
    throw std::invalid_argument("feature_extract: sample " + s.id + " has " + std::to_string(s.channels) +
                                " channels, extractor expects " + std::to_string(cfg.input_channels));
  if (s.timesteps() != cfg.windows * cfg.window_samples)
    throw std::invalid_argument("feature_extract: sample " + s.id + " has " + std::to_string(s.timesteps()) +
                                " timesteps, expected " + std::to_string(cfg.windows * cfg.window_samples));
}

}  // namespace

struct FeatureExtractor::Impl {
  std::variant<WindowNet<float>, WindowNet<double>> net;

  static decltype(net) make(const ExtractorWeights& w) {
    if (w.config.precision == Precision::F32) return WindowNet<float>(w);
    return WindowNet<double>(w);
  }
  explicit Impl(const ExtractorWeights& w) : net(make(w)) {}
};

FeatureExtractor::FeatureExtractor(const ExtractorWeights& weights) {
  if (static_cast<std::size_t>(weights.params.size()) != extractor_parameter_count(weights.config))
    throw std::invalid_argument("extractor weights do not match their configuration");
  impl_ = std::make_unique<Impl>(weights);
}
FeatureExtractor::~FeatureExtractor() = default;
FeatureExtractor::FeatureExtractor(FeatureExtractor&&) noexcept = default;
FeatureExtractor& FeatureExtractor::operator=(FeatureExtractor&&) noexcept = default;

const ExtractorConfig& FeatureExtractor::config() const {
  return std::visit([](const auto& n) -> const ExtractorConfig& { return n.config(); }, impl_->net);
}

Eigen::VectorXd FeatureExtractor::extract_window(const EegSample& sample, int offset) const {
  return std::visit(
      [&](const auto& n) -> Eigen::VectorXd {
        if (sample.channels != n.config().input_channels || offset < 0 ||
            offset + n.config().window_samples > sample.timesteps())
          throw std::invalid_argument("extract_window: window outside sample " + sample.id);
        return n.forward(n.load_window(sample, offset), nullptr).template cast<double>();
      },
      impl_->net);
}

FeatureVector FeatureExtractor::extract(const EegSample& sample) const {
  return std::visit(
      [&](const auto& n) -> FeatureVector {
        const auto& cfg = n.config();
        check_sample(cfg, sample);
        FeatureVector f(cfg.feature_dim());
        for (int w = 0; w < cfg.windows; ++w)
          f.segment(w * cfg.window_features, cfg.window_features) =
              n.forward(n.load_window(sample, w * cfg.window_samples), nullptr).template cast<double>();
        return f;
      },
      impl_->net);
}

FeatureVector FeatureExtractor::forward_backward(const EegSample& sample, const FeatureGradientFn& grad_fn,
                                                 Eigen::VectorXd& grad) const {
  return std::visit(
      [&](const auto& n) -> FeatureVector {
        using T = typename std::decay_t<decltype(n.zero_grad())>::Scalar;
        const auto& cfg = n.config();
        check_sample(cfg, sample);
        std::vector<WindowTape<T>> tapes(cfg.windows);
        FeatureVector f(cfg.feature_dim());
        for (int w = 0; w < cfg.windows; ++w)
          f.segment(w * cfg.window_features, cfg.window_features) =
              n.forward(n.load_window(sample, w * cfg.window_samples), &tapes[w]).template cast<double>();
        const Eigen::VectorXd d_feature = grad_fn(f);
        if (d_feature.size() != f.size()) throw std::invalid_argument("feature gradient has wrong size");
        Vec<T> g = n.zero_grad();
        for (int w = 0; w < cfg.windows; ++w)
          n.backward(tapes[w], d_feature.segment(w * cfg.window_features, cfg.window_features).template cast<T>(),
                     g);
        grad += g.template cast<double>();
        return f;
      },
      impl_->net);
}

FeatureVector feature_extract(const EegSample& sample, const ExtractorWeights& weights) {
  return FeatureExtractor(weights).extract(sample);
}

}  // namespace protoeeg
