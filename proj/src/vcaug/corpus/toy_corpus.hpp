#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcaug/corpus/corpus.hpp"

namespace vcaug::corpus {

// 20-symbol phoneme inventory used by the toy corpus and as the default
// model vocabulary.
const std::vector<std::string>& ToyPhonemeInventory();

// Renders synthetic "speech" mels. Each speaker has a fixed spectral
// envelope and formant scaling; each style has a fixed energy and
// pitch-proxy contour; each phoneme has a fixed formant pair. All voice
// parameters are derived from the speaker/style names, so the same name
// renders the same voice in any corpus.
class ToyVoice {
 public:
  explicit ToyVoice(int mel_bands = 80) : bands_(mel_bands) {}

  // `contour_seed` drives the per-utterance contour jitter and noise.
  Mel Render(const std::vector<std::string>& phonemes, const std::vector<int>& durations,
             const SpeakerId& speaker, const StyleId& style, uint64_t contour_seed) const;

 private:
  int bands_;
};

struct ToyCorpusOptions {
  std::vector<std::string> speakers = {"1", "2"};
  std::vector<std::string> styles = {"neutral", "news"};
  int utterances_per_pair = 50;
  int min_phonemes = 5;
  int max_phonemes = 9;
  int min_duration = 2;
  int max_duration = 5;
  uint64_t seed = 1;
  FeatureConfig features;
};

// One manifest per (speaker, style), named "S_<speaker>_<style>".
std::vector<DatasetManifest> GenerateToyCorpus(const ToyCorpusOptions& options);

// Writes the corpus to `dir`: one <name>.manifest per pair, mels/, and
// features.conf.
void WriteToyCorpus(const ToyCorpusOptions& options, const std::string& dir);

}  // namespace vcaug::corpus
