#include "vcaug/corpus/toy_corpus.hpp"

#include <cmath>
#include <numbers>
#include <filesystem>

#include "vcaug/error.hpp"
#include "vcaug/util/hash.hpp"
#include "vcaug/util/rng.hpp"
#include "vcaug/util/strings.hpp"

namespace fs = std::filesystem;

namespace vcaug::corpus {

const std::vector<std::string>& ToyPhonemeInventory() {
  static const std::vector<std::string> kInventory = {
      "a", "e", "i", "o", "u", "b", "d", "f", "g", "h",
      "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  return kInventory;
}

namespace {

struct SpeakerVoice {
  double formant_scale;
  double tilt;
  double bump_center;
  double bump_amp;
};

struct StyleContour {
  double amplitude;
  double cycles;
  double phase;
  double pitch_base;
  double pitch_depth;
};

struct PhonemeShape {
  double f1;
  double f2;
  double loudness;
};

SpeakerVoice VoiceFor(const SpeakerId& s) {
  Rng rng(HashBytes("speaker:" + s.value));
  SpeakerVoice v;
  v.formant_scale = rng.Uniform(0.82, 1.18);
  v.tilt = rng.Uniform(0.1, 0.9);
  v.bump_center = rng.Uniform(0.1, 0.9);
  v.bump_amp = rng.Uniform(0.3, 0.8);
  return v;
}

StyleContour ContourFor(const StyleId& s) {
  if (s.value == "neutral") return {0.04, 1.0, 0.0, 6.0, 0.03};
  Rng rng(HashBytes("style:" + s.value));
  StyleContour c;
  c.amplitude = rng.Uniform(0.25, 0.45);
  c.cycles = rng.Uniform(0.8, 2.2);
  c.phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);
  c.pitch_base = rng.Uniform(7.0, 11.0);
  c.pitch_depth = rng.Uniform(0.2, 0.4);
  return c;
}

PhonemeShape ShapeFor(const std::string& p) {
  Rng rng(HashBytes("phoneme:" + p));
  PhonemeShape s;
  s.f1 = rng.Uniform(0.08, 0.42);
  s.f2 = rng.Uniform(0.45, 0.85);
  const bool vowel = p == "a" || p == "e" || p == "i" || p == "o" || p == "u";
  s.loudness = vowel ? 1.0 : 0.6;
  return s;
}

double Bump(double x, double center, double width) {
  const double d = (x - center) / width;
  return std::exp(-0.5 * d * d);
}

}  // namespace

Mel ToyVoice::Render(const std::vector<std::string>& phonemes, const std::vector<int>& durations,
                     const SpeakerId& speaker, const StyleId& style,
                     uint64_t contour_seed) const {
  if (phonemes.size() != durations.size()) {
    throw ContractError("toy voice: phoneme/duration length mismatch");
  }
  int total = 0;
  for (int d : durations) total += d;
  const SpeakerVoice v = VoiceFor(speaker);
  StyleContour c = ContourFor(style);
  Rng rng(contour_seed);
  c.amplitude *= rng.Uniform(0.85, 1.15);
  c.phase += rng.Uniform(-0.3, 0.3);
  const double pitch_phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);

  Mel mel(total, bands_);
  int t = 0;
  for (size_t i = 0; i < phonemes.size(); ++i) {
    const PhonemeShape ps = ShapeFor(phonemes[i]);
    for (int k = 0; k < durations[i]; ++k, ++t) {
      const double u = (t + 0.5) / total;
      const double energy = 1.0 + c.amplitude * std::sin(2.0 * std::numbers::pi * c.cycles * u + c.phase);
      const double pitch =
          c.pitch_base * (1.0 + c.pitch_depth * std::sin(2.0 * std::numbers::pi * 1.3 * u + pitch_phase));
      for (int m = 0; m < bands_; ++m) {
        const double x = bands_ > 1 ? static_cast<double>(m) / (bands_ - 1) : 0.5;
        const double env = 0.5 * v.tilt * (1.0 - x) + v.bump_amp * Bump(x, v.bump_center, 0.08);
        const double form = ps.loudness * (Bump(x, v.formant_scale * ps.f1, 0.035) +
                                           0.7 * Bump(x, v.formant_scale * ps.f2, 0.035));
        const double ripple = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * x * pitch);
        double val = 0.05 + energy * (0.3 * env + 0.45 * form) + 0.06 * ripple +
                     0.01 * rng.Normal();
        mel(t, m) = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
    }
  }
  return mel;
}

std::vector<DatasetManifest> GenerateToyCorpus(const ToyCorpusOptions& o) {
  o.features.Validate();
  if (o.min_phonemes < 1 || o.max_phonemes < o.min_phonemes || o.min_duration < 0 ||
      o.max_duration < o.min_duration) {
    throw ContractError("toy corpus: bad length ranges");
  }
  const auto& inventory = ToyPhonemeInventory();
  const ToyVoice voice(o.features.mel_bands);
  std::vector<DatasetManifest> out;
  for (const auto& spk : o.speakers) {
    for (const auto& sty : o.styles) {
      Rng rng(DeriveSeed(o.seed, "toy:" + spk + ":" + sty));
      std::vector<UtterancePtr> utts;
      for (int n = 0; n < o.utterances_per_pair; ++n) {
        auto u = std::make_shared<Utterance>();
        char id[128];
        std::snprintf(id, sizeof(id), "s%s_%s_%03d", spk.c_str(), sty.c_str(), n);
        u->utt_id = id;
        u->speaker = SpeakerId{spk};
        u->style = StyleId{sty};
        const int len = rng.UniformInt(o.min_phonemes, o.max_phonemes);
        for (int k = 0; k < len; ++k) {
          u->phonemes.push_back(inventory[rng.Below(inventory.size())]);
          u->durations.push_back(rng.UniformInt(o.min_duration, o.max_duration));
        }
        // At least one frame per utterance.
        if (std::all_of(u->durations.begin(), u->durations.end(), [](int d) { return d == 0; })) {
          u->durations[0] = 1;
        }
        u->mel = voice.Render(u->phonemes, u->durations, u->speaker, u->style, rng.NextU64());
        utts.push_back(std::move(u));
      }
      out.emplace_back("S_" + spk + "_" + sty, SpeakerId{spk}, StyleId{sty}, false,
                       std::move(utts), o.features.frame_shift_ms);
    }
  }
  return out;
}

void WriteToyCorpus(const ToyCorpusOptions& options, const std::string& dir) {
  fs::create_directories(dir);
  for (const auto& m : GenerateToyCorpus(options)) {
    SaveManifest(m, (fs::path(dir) / (m.name() + ".manifest")).string());
  }
  WriteFile((fs::path(dir) / "features.conf").string(), options.features.ToText());
}

}  // namespace vcaug::corpus
