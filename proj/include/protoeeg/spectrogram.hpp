#pragma once

#include <vector>

#include "protoeeg/signal_data.hpp"

namespace protoeeg {

enum class ChannelReduce { Mean, Single };

struct SpectrogramConfig {
  double window_seconds = 2.0;
  double overlap = 0.5;
  // Values below (peak - floor_db) are raised to that level.
  double floor_db = 40.0;
  double epsilon = 1e-12;
};

struct Spectrogram {
  int bins = 0;
  int frames = 0;
  double freq_resolution = 0.0;  // Hz per bin
  double time_resolution = 0.0;  // seconds between frame starts
  double floor_value_db = 0.0;
  // bins x frames, bin-major: power_db[bin * frames + frame].
  std::vector<double> power_db;

  double at(int bin, int frame) const { return power_db[std::size_t(bin) * frames + frame]; }
};

// Hann-windowed STFT power in dB. With ChannelReduce::Mean the per-channel power is averaged
// before the log; with Single only `channel` is used.
Spectrogram compute_spectrogram(const EegSample& sample, ChannelReduce reduce, int channel = 0,
                                const SpectrogramConfig& config = {});

}  // namespace protoeeg
