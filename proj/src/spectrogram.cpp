#include "protoeeg/spectrogram.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

namespace protoeeg {

Spectrogram compute_spectrogram(const EegSample& sample, ChannelReduce reduce, int channel,
                                const SpectrogramConfig& cfg) {
  if (sample.signal.empty() || sample.channels <= 0) throw std::invalid_argument("spectrogram: empty signal");
  if (reduce == ChannelReduce::Single && (channel < 0 || channel >= sample.channels))
    throw std::invalid_argument("spectrogram: channel out of range");

  const int win = static_cast<int>(std::lround(cfg.window_seconds * sample.sample_rate));
  const int hop = std::max(1, static_cast<int>(std::lround(win * (1.0 - cfg.overlap))));
  const int n = sample.timesteps();
  if (win < 2 || n < win) throw std::invalid_argument("spectrogram: signal shorter than one window");

  Spectrogram out;
  out.bins = win / 2 + 1;
  out.frames = (n - win) / hop + 1;
  out.freq_resolution = double(sample.sample_rate) / win;
  out.time_resolution = double(hop) / sample.sample_rate;

  std::vector<double> window(win);
  double window_energy = 0.0;
  for (int i = 0; i < win; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
    window_energy += window[i] * window[i];
  }

  const int c0 = reduce == ChannelReduce::Single ? channel : 0;
  const int c1 = reduce == ChannelReduce::Single ? channel + 1 : sample.channels;
  std::vector<double> power(std::size_t(out.bins) * out.frames, 0.0);
  Eigen::FFT<double> fft;
  std::vector<double> segment(win);
  std::vector<std::complex<double>> spectrum;
  for (int c = c0; c < c1; ++c) {
    const auto x = sample.channel(c);
    for (int f = 0; f < out.frames; ++f) {
      for (int i = 0; i < win; ++i) segment[i] = window[i] * x[std::size_t(f) * hop + i];
      fft.fwd(spectrum, segment);
      for (int b = 0; b < out.bins; ++b) power[std::size_t(b) * out.frames + f] += std::norm(spectrum[b]);
    }
  }
  const double norm = 1.0 / (window_energy * (c1 - c0));
  out.power_db.resize(power.size());
  double peak = -INFINITY;
  for (std::size_t k = 0; k < power.size(); ++k) {
    out.power_db[k] = 10.0 * std::log10(power[k] * norm + cfg.epsilon);
    peak = std::max(peak, out.power_db[k]);
  }
  out.floor_value_db = std::max(peak - cfg.floor_db, 10.0 * std::log10(cfg.epsilon));
  for (double& v : out.power_db) v = std::max(v, out.floor_value_db);
  return out;
}

}  // namespace protoeeg
