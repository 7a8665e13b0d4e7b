#include "vcaug/corpus/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "vcaug/error.hpp"
#include "vcaug/util/config.hpp"
#include "vcaug/util/rng.hpp"
#include "vcaug/util/strings.hpp"

namespace fs = std::filesystem;

namespace vcaug::corpus {

void FeatureConfig::Validate() const {
  if (!(sample_rate > 0) || mel_bands < 1 || !(frame_shift_ms > 0) || !(frame_length_ms > 0)) {
    throw ValidationError("feature config: all fields must be positive");
  }
  if (frame_length_ms < frame_shift_ms) {
    throw ValidationError("feature config: frame_length_ms must be >= frame_shift_ms");
  }
}

FeatureConfig FeatureConfig::Load(const std::string& path) {
  Config cfg = Config::Load(path);
  FeatureConfig fc;
  fc.sample_rate = cfg.GetDouble("sample_rate", fc.sample_rate);
  fc.mel_bands = static_cast<int>(cfg.GetInt("mel_bands", fc.mel_bands));
  fc.frame_shift_ms = cfg.GetDouble("frame_shift_ms", fc.frame_shift_ms);
  fc.frame_length_ms = cfg.GetDouble("frame_length_ms", fc.frame_length_ms);
  fc.Validate();
  return fc;
}

std::string FeatureConfig::ToText() const {
  return "sample_rate=" + FormatDouble(sample_rate) + "\nmel_bands=" +
         std::to_string(mel_bands) + "\nframe_shift_ms=" + FormatDouble(frame_shift_ms) +
         "\nframe_length_ms=" + FormatDouble(frame_length_ms) + "\n";
}

void Utterance::Validate() const {
  if (utt_id.empty()) throw ValidationError("utterance with empty id");
  if (speaker.value.empty() || style.value.empty()) {
    throw ValidationError(utt_id + ": empty speaker or style");
  }
  if (durations.size() != phonemes.size()) {
    throw ValidationError(utt_id + ": " + std::to_string(phonemes.size()) + " phonemes but " +
                          std::to_string(durations.size()) + " durations");
  }
  int64_t sum = 0;
  for (int d : durations) {
    if (d < 0) throw ValidationError(utt_id + ": negative duration");
    sum += d;
  }
  if (sum != mel.rows()) {
    throw ValidationError(utt_id + ": durations sum to " + std::to_string(sum) +
                          " but mel has " + std::to_string(mel.rows()) + " frames");
  }
  if (is_synthetic != source_speaker.has_value()) {
    throw ValidationError(utt_id + ": source_speaker must be set iff the utterance is synthetic");
  }
  if (!mel.allFinite()) throw ValidationError(utt_id + ": non-finite mel values");
}

double FramesToHours(int64_t frames, double frame_shift_ms) {
  return static_cast<double>(frames) * frame_shift_ms / 3.6e6;
}

DatasetManifest::DatasetManifest(std::string name, SpeakerId speaker, StyleId style,
                                 bool synthetic, std::vector<UtterancePtr> utterances,
                                 double frame_shift_ms)
    : name_(std::move(name)),
      speaker_(std::move(speaker)),
      style_(std::move(style)),
      synthetic_(synthetic),
      frame_shift_ms_(frame_shift_ms),
      utterances_(std::move(utterances)) {
  if (!(frame_shift_ms_ > 0)) throw ValidationError("manifest " + name_ + ": bad frame shift");
  std::set<std::string> ids;
  for (const auto& u : utterances_) {
    u->Validate();
    if (u->speaker != speaker_ || u->style != style_ || u->is_synthetic != synthetic_) {
      throw ValidationError("manifest " + name_ + ": utterance " + u->utt_id +
                            " does not match manifest speaker/style/synthetic");
    }
    if (!ids.insert(u->utt_id).second) {
      throw ValidationError("manifest " + name_ + ": duplicate utterance id " + u->utt_id);
    }
  }
}

int64_t DatasetManifest::total_frames() const {
  int64_t n = 0;
  for (const auto& u : utterances_) n += u->frames();
  return n;
}

double DatasetManifest::hours() const { return FramesToHours(total_frames(), frame_shift_ms_); }

int64_t TrainingCollection::total_frames() const {
  int64_t n = 0;
  for (const auto& u : utterances) n += u->frames();
  return n;
}

double TrainingCollection::hours() const { return FramesToHours(total_frames(), frame_shift_ms); }

std::vector<SpeakerId> TrainingCollection::speakers() const {
  std::set<SpeakerId> s;
  for (const auto& u : utterances) s.insert(u->speaker);
  return {s.begin(), s.end()};
}

// ---- mel files ----

Mel ReadMel(const std::string& path) {
  const std::string bytes = ReadFile(path);
  if (bytes.size() < 12 || bytes.compare(0, 4, "MEL1") != 0) {
    throw ValidationError(path + ": not a MEL1 file");
  }
  uint32_t t, m;
  std::memcpy(&t, bytes.data() + 4, 4);
  std::memcpy(&m, bytes.data() + 8, 4);
  const size_t body = static_cast<size_t>(t) * m * sizeof(float);
  if (bytes.size() != 12 + body) {
    throw ValidationError(path + ": size does not match header " + std::to_string(t) + "x" +
                          std::to_string(m));
  }
  Mel mel(t, m);
  if (body) std::memcpy(mel.data(), bytes.data() + 12, body);
  return mel;
}

void WriteMel(const std::string& path, const Mel& mel) {
  std::string bytes = "MEL1";
  const uint32_t t = static_cast<uint32_t>(mel.rows());
  const uint32_t m = static_cast<uint32_t>(mel.cols());
  bytes.append(reinterpret_cast<const char*>(&t), 4);
  bytes.append(reinterpret_cast<const char*>(&m), 4);
  bytes.append(reinterpret_cast<const char*>(mel.data()),
               static_cast<size_t>(mel.size()) * sizeof(float));
  WriteFile(path, bytes);
}

// ---- manifest files ----

namespace {

constexpr std::string_view kManifestHeader = "#manifest v1";

std::string JoinInts(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

DatasetManifest LoadManifest(const std::string& path) {
  const std::string text = ReadFile(path);
  const fs::path base = fs::path(path).parent_path();
  const auto lines = SplitLines(text);
  if (lines.empty() || lines[0].rfind(kManifestHeader, 0) != 0) {
    throw ParseError("missing '#manifest v1' header", 1);
  }
  // Header attributes: "#manifest v1 key=value key=value ..."
  std::map<std::string, std::string> attrs;
  for (const auto& tok : SplitWords(lines[0].substr(kManifestHeader.size()))) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) throw ParseError("bad header attribute '" + tok + "'", 1);
    attrs[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  double frame_shift = 12.5;
  if (attrs.count("frame_shift_ms")) {
    frame_shift = ParseDouble(attrs["frame_shift_ms"], "frame_shift_ms");
  }

  std::vector<UtterancePtr> utts;
  for (size_t i = 1; i < lines.size(); ++i) {
    const int line_no = static_cast<int>(i + 1);
    if (Trim(lines[i]).empty() || lines[i][0] == '#') continue;
    const auto f = Split(lines[i], '\t');
    if (f.size() != 8) {
      throw ParseError("expected 8 tab-separated fields, found " + std::to_string(f.size()),
                       line_no);
    }
    auto u = std::make_shared<Utterance>();
    u->utt_id = f[0];
    u->speaker = SpeakerId{f[1]};
    u->style = StyleId{f[2]};
    u->phonemes = SplitWords(f[3]);
    try {
      for (const auto& d : SplitWords(f[4])) {
        u->durations.push_back(static_cast<int>(ParseInt(d, "duration")));
      }
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
    if (f[6] != "0" && f[6] != "1") throw ParseError("is_synthetic must be 0 or 1", line_no);
    u->is_synthetic = f[6] == "1";
    if (f[7] != "-") u->source_speaker = SpeakerId{f[7]};
    try {
      u->mel = ReadMel((base / f[5]).string());
      u->Validate();
    } catch (const IoError& e) {
      throw ValidationError("utterance " + u->utt_id + " (line " + std::to_string(line_no) +
                            "): " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("utterance " + u->utt_id + " (line " + std::to_string(line_no) +
                            "): " + e.what());
    }
    utts.push_back(std::move(u));
  }

  std::string name = attrs.count("name") ? attrs["name"] : fs::path(path).stem().string();
  SpeakerId speaker;
  StyleId style;
  bool synthetic = false;
  if (!utts.empty()) {
    speaker = utts[0]->speaker;
    style = utts[0]->style;
    synthetic = utts[0]->is_synthetic;
  }
  if (attrs.count("speaker")) speaker = SpeakerId{attrs["speaker"]};
  if (attrs.count("style")) style = StyleId{attrs["style"]};
  if (attrs.count("synthetic")) synthetic = attrs["synthetic"] == "1";
  DatasetManifest m(name, speaker, style, synthetic, std::move(utts), frame_shift);
  if (attrs.count("hours")) {
    const double declared = ParseDouble(attrs["hours"], "hours");
    const double actual = m.hours();
    if (std::abs(declared - actual) > 0.01 * std::max(actual, 1e-12)) {
      throw ValidationError("manifest " + name + ": declared hours " + attrs["hours"] +
                            " differ from frame total (" + FormatDouble(actual) + ") by > 1%");
    }
  }
  return m;
}

void SaveManifest(const DatasetManifest& m, const std::string& path) {
  const fs::path base = fs::path(path).parent_path();
  fs::create_directories(base / "mels");
  std::ostringstream out;
  out << kManifestHeader << " name=" << m.name() << " speaker=" << m.speaker().value
      << " style=" << m.style().value << " synthetic=" << (m.synthetic() ? 1 : 0)
      << " frame_shift_ms=" << FormatDouble(m.frame_shift_ms())
      << " hours=" << FormatDouble(m.hours()) << "\n";
  for (const auto& u : m.utterances()) {
    const std::string rel = "mels/" + u->utt_id + ".mel";
    WriteMel((base / rel).string(), u->mel);
    out << u->utt_id << '\t' << u->speaker.value << '\t' << u->style.value << '\t'
        << Join(u->phonemes, " ") << '\t' << JoinInts(u->durations) << '\t' << rel << '\t'
        << (u->is_synthetic ? 1 : 0) << '\t'
        << (u->source_speaker ? u->source_speaker->value : std::string("-")) << '\n';
  }
  WriteFile(path, out.str());
}

Registry Registry::LoadDirectory(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".manifest") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  Registry reg;
  for (const auto& p : paths) reg.Add(LoadManifest(p.string()));
  return reg;
}

void Registry::Add(DatasetManifest m) {
  auto key = std::make_tuple(m.speaker().value, m.style().value, m.synthetic());
  if (by_key_.count(key)) {
    throw ValidationError("registry already holds a manifest for speaker " + m.speaker().value +
                          ", style " + m.style().value);
  }
  by_key_.emplace(std::move(key), std::move(m));
}

const DatasetManifest* Registry::Find(const SpeakerId& speaker, const StyleId& style,
                                      bool synthetic) const {
  auto it = by_key_.find(std::make_tuple(speaker.value, style.value, synthetic));
  return it == by_key_.end() ? nullptr : &it->second;
}

std::vector<const DatasetManifest*> Registry::All() const {
  std::vector<const DatasetManifest*> out;
  for (const auto& [k, m] : by_key_) out.push_back(&m);
  return out;
}

// ---- operations ----

std::vector<std::string> UpsamplePhonemes(std::span<const std::string> phonemes,
                                          std::span<const int> durations) {
  if (phonemes.size() != durations.size()) {
    throw ContractError("upsample: " + std::to_string(phonemes.size()) + " phonemes vs " +
                        std::to_string(durations.size()) + " durations");
  }
  std::vector<std::string> out;
  for (size_t i = 0; i < phonemes.size(); ++i) {
    if (durations[i] < 0) throw ContractError("upsample: negative duration");
    out.insert(out.end(), static_cast<size_t>(durations[i]), phonemes[i]);
  }
  return out;
}

DatasetManifest ReduceManifest(const DatasetManifest& m, double budget_minutes, uint64_t seed) {
  if (!(budget_minutes > 0)) throw ContractError("reduce: budget must be positive");
  if (m.minutes() <= budget_minutes) return m;

  std::vector<UtterancePtr> order = m.utterances();
  std::sort(order.begin(), order.end(),
            [](const UtterancePtr& a, const UtterancePtr& b) { return a->utt_id < b->utt_id; });
  Rng rng(seed);
  rng.Shuffle(order);

  const double budget_frames = budget_minutes * 60000.0 / m.frame_shift_ms();
  std::vector<UtterancePtr> kept;
  int64_t frames = 0;
  for (const auto& u : order) {
    if (static_cast<double>(frames + u->frames()) > budget_frames) break;
    frames += u->frames();
    kept.push_back(u);
  }
  // Keep manifest order stable for readers.
  std::sort(kept.begin(), kept.end(),
            [](const UtterancePtr& a, const UtterancePtr& b) { return a->utt_id < b->utt_id; });
  return DatasetManifest(m.name() + "@" + FormatDouble(budget_minutes) + "m", m.speaker(),
                         m.style(), m.synthetic(), std::move(kept), m.frame_shift_ms());
}

TrainingCollection ConcatManifests(std::span<const DatasetManifest* const> manifests) {
  if (manifests.empty()) throw ContractError("concat: no manifests");
  TrainingCollection c;
  c.frame_shift_ms = manifests[0]->frame_shift_ms();
  std::set<std::string> ids;
  for (const DatasetManifest* m : manifests) {
    if (m->frame_shift_ms() != c.frame_shift_ms) {
      throw ValidationError("concat: manifests use different frame shifts");
    }
    for (const auto& u : m->utterances()) {
      if (!ids.insert(u->utt_id).second) {
        throw ValidationError("concat: duplicate utterance id " + u->utt_id + " (in " +
                              m->name() + ")");
      }
      c.utterances.push_back(u);
    }
  }
  return c;
}

TrainingCollection ConcatManifests(std::span<const DatasetManifest> manifests) {
  std::vector<const DatasetManifest*> ptrs;
  for (const auto& m : manifests) ptrs.push_back(&m);
  return ConcatManifests(std::span<const DatasetManifest* const>(ptrs));
}

}  // namespace vcaug::corpus
