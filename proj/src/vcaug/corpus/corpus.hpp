#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vcaug::corpus {

// Speaker token, e.g. "1" or "F1".
struct SpeakerId {
  std::string value;
  auto operator<=>(const SpeakerId&) const = default;
};

// Speaking-style token, e.g. "neutral", "news", "conv".
struct StyleId {
  std::string value;
  auto operator<=>(const StyleId&) const = default;
};

// T frames x M mel bands, row-major float32 (the on-disk layout).
using Mel = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FeatureConfig {
  double sample_rate = 16000.0;
  int mel_bands = 80;
  double frame_shift_ms = 12.5;
  double frame_length_ms = 50.0;

  // Throws ValidationError unless all fields are positive and the window is
  // at least one shift long.
  void Validate() const;

  static FeatureConfig Load(const std::string& path);
  std::string ToText() const;
};

struct Utterance {
  std::string utt_id;
  SpeakerId speaker;
  StyleId style;
  std::vector<std::string> phonemes;
  std::vector<int> durations;
  Mel mel;
  bool is_synthetic = false;
  std::optional<SpeakerId> source_speaker;

  int frames() const { return static_cast<int>(mel.rows()); }
  // Checks the length, frame-sum, and synthetic/source invariants.
  void Validate() const;
};

using UtterancePtr = std::shared_ptr<const Utterance>;

// S(i,j,k) or S*(i,j,k): one speaker, one style, synthetic or real.
class DatasetManifest {
 public:
  DatasetManifest() = default;
  // Validates every utterance and that all share speaker/style/synthetic.
  DatasetManifest(std::string name, SpeakerId speaker, StyleId style, bool synthetic,
                  std::vector<UtterancePtr> utterances, double frame_shift_ms = 12.5);

  const std::string& name() const { return name_; }
  const SpeakerId& speaker() const { return speaker_; }
  const StyleId& style() const { return style_; }
  bool synthetic() const { return synthetic_; }
  double frame_shift_ms() const { return frame_shift_ms_; }
  const std::vector<UtterancePtr>& utterances() const { return utterances_; }
  size_t size() const { return utterances_.size(); }
  bool empty() const { return utterances_.empty(); }

  int64_t total_frames() const;
  double hours() const;
  double minutes() const { return hours() * 60.0; }

 private:
  std::string name_;
  SpeakerId speaker_;
  StyleId style_;
  bool synthetic_ = false;
  double frame_shift_ms_ = 12.5;
  std::vector<UtterancePtr> utterances_;
};

// Multi-speaker, multi-style union of manifests, used as model training data.
struct TrainingCollection {
  std::vector<UtterancePtr> utterances;
  double frame_shift_ms = 12.5;

  int64_t total_frames() const;
  double hours() const;
  std::vector<SpeakerId> speakers() const;
};

double FramesToHours(int64_t frames, double frame_shift_ms);

// ---- file formats ----

// "MEL1" | u32 T | u32 M | T*M float32, little-endian.
Mel ReadMel(const std::string& path);
void WriteMel(const std::string& path, const Mel& mel);

// Line-delimited manifest; mel paths are relative to the manifest file.
DatasetManifest LoadManifest(const std::string& path);
// Writes the manifest to `path` and every mel under `<dir of path>/mels/`.
void SaveManifest(const DatasetManifest& m, const std::string& path);

// Every *.manifest file in a directory, keyed by (speaker, style, synthetic).
class Registry {
 public:
  static Registry LoadDirectory(const std::string& dir);
  void Add(DatasetManifest m);

  const DatasetManifest* Find(const SpeakerId& speaker, const StyleId& style,
                              bool synthetic) const;
  std::vector<const DatasetManifest*> All() const;

 private:
  std::map<std::tuple<std::string, std::string, bool>, DatasetManifest> by_key_;
};

// ---- operations ----

// Expands each phoneme into `durations[i]` frames.
std::vector<std::string> UpsamplePhonemes(std::span<const std::string> phonemes,
                                          std::span<const int> durations);

// Random subset within a duration budget: shuffle (by seed) the
// utterances sorted by id, then take the longest prefix that fits. Returns
// `m` unchanged when it already fits.
DatasetManifest ReduceManifest(const DatasetManifest& m, double budget_minutes, uint64_t seed);

// Presets for the data-reduction scenarios, in minutes.
inline constexpr double kReductionPresetsMinutes[] = {45.0, 30.0, 15.0};

TrainingCollection ConcatManifests(std::span<const DatasetManifest> manifests);
TrainingCollection ConcatManifests(std::span<const DatasetManifest* const> manifests);

}  // namespace vcaug::corpus
