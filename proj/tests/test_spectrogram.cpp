#include <cmath>
#include <complex>
#include <numbers>

#include "doctest.h"
#include "protoeeg/spectrogram.hpp"

using namespace protoeeg;

namespace {

EegSample sinusoids(int channels, int rate, std::vector<double> freqs, double seconds = 50.0) {
  EegSample s;
  s.id = "x";
  s.channels = channels;
  s.sample_rate = rate;
  const int n = static_cast<int>(rate * seconds);
  s.signal.resize(std::size_t(channels) * n);
  for (int c = 0; c < channels; ++c)
    for (int t = 0; t < n; ++t)
      s.signal[std::size_t(c) * n + t] =
          static_cast<float>(10.0 * std::sin(2.0 * std::numbers::pi * freqs[c % freqs.size()] * t / rate));
  return s;
}

// Direct DFT power of one Hann-windowed frame, mean over the channel range, before the log.
double oracle_power(const EegSample& s, int c0, int c1, int start, int win, int bin) {
  double energy = 0.0;
  double total = 0.0;
  for (int i = 0; i < win; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
    energy += w * w;
  }
  for (int c = c0; c < c1; ++c) {
    std::complex<double> acc = 0.0;
    const auto x = s.channel(c);
    for (int i = 0; i < win; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
      acc += w * double(x[start + i]) * std::polar(1.0, -2.0 * std::numbers::pi * bin * i / win);
    }
    total += std::norm(acc);
  }
  return total / (energy * (c1 - c0));
}

}  // namespace

TEST_CASE("spectrogram shape follows window and overlap") {
  const EegSample s = sinusoids(2, 200, {10.0});
  const Spectrogram sp = compute_spectrogram(s, ChannelReduce::Mean);
  CHECK(sp.bins == 201);
  CHECK(sp.frames == (10000 - 400) / 200 + 1);
  CHECK(sp.freq_resolution == doctest::Approx(0.5));
  CHECK(sp.time_resolution == doctest::Approx(1.0));
  CHECK(sp.power_db.size() == std::size_t(sp.bins) * sp.frames);
}

TEST_CASE("spectrogram matches a direct DFT oracle above the floor") {
  const EegSample s = sinusoids(3, 100, {7.0, 13.5, 21.0}, 10.0);
  SpectrogramConfig cfg;
  cfg.floor_db = 300.0;  // keep every value above the floor
  const Spectrogram sp = compute_spectrogram(s, ChannelReduce::Mean, 0, cfg);
  const int win = 200, hop = 100;
  for (int f : {0, 3, sp.frames - 1})
    for (int b : {0, 14, 27, 42, 60, 100}) {
      const double expect = 10.0 * std::log10(oracle_power(s, 0, 3, f * hop, win, b) + cfg.epsilon);
      CHECK(sp.at(b, f) == doctest::Approx(expect).epsilon(1e-9));
    }
  const Spectrogram one = compute_spectrogram(s, ChannelReduce::Single, 1, cfg);
  const double expect = 10.0 * std::log10(oracle_power(s, 1, 2, 0, win, 27) + cfg.epsilon);
  CHECK(one.at(27, 0) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("a pure tone peaks at its frequency bin and the floor clamps the rest") {
  const EegSample s = sinusoids(1, 200, {12.0});
  const Spectrogram sp = compute_spectrogram(s, ChannelReduce::Mean);
  for (int f = 0; f < sp.frames; ++f) {
    int best = 0;
    for (int b = 1; b < sp.bins; ++b)
      if (sp.at(b, f) > sp.at(best, f)) best = b;
    CHECK(best == 24);
  }
  const double peak = *std::max_element(sp.power_db.begin(), sp.power_db.end());
  CHECK(sp.floor_value_db == doctest::Approx(peak - 40.0));
  for (double v : sp.power_db) CHECK(v >= sp.floor_value_db);
}

TEST_CASE("spectrogram rejects bad input") {
  EegSample empty;
  CHECK_THROWS_AS(compute_spectrogram(empty, ChannelReduce::Mean), std::invalid_argument);
  const EegSample s = sinusoids(2, 200, {5.0});
  CHECK_THROWS_AS(compute_spectrogram(s, ChannelReduce::Single, 2), std::invalid_argument);
  const EegSample short_one = sinusoids(1, 200, {5.0}, 1.0);
  CHECK_THROWS_AS(compute_spectrogram(short_one, ChannelReduce::Mean), std::invalid_argument);
}
