#pragma once

#include <string>
#include <vector>

#include "vcaug/corpus/corpus.hpp"

namespace vcaug::tts {

struct VocoderOptions {
  int iterations = 32;
  // Mel values v in [0, 1] are read as log amplitudes: a = 10^(range * (v - 1)).
  double log_range = 4.0;
};

// Griffin-Lim mel inversion for listening checks. Deterministic: phases
// start at zero. Returns frames * hop samples, peak-normalised to 0.9.
std::vector<float> MelToWaveform(const corpus::Mel& mel, const corpus::FeatureConfig& features,
                                 const VocoderOptions& options = {});

// 16-bit PCM mono WAV.
void WriteWav(const std::string& path, const std::vector<float>& samples, int sample_rate);

}  // namespace vcaug::tts
