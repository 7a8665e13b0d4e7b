#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vcaug/corpus/corpus.hpp"
#include "vcaug/recipe/program.hpp"
#include "vcaug/util/config.hpp"

namespace vcaug::recipe {

enum class StageKind { kTrainVc, kBatchConvert, kTrainTts, kFineTune };
std::string StageKindName(StageKind k);  // "train_vc", "batch_convert", ...

// A dataset input with its source: a registry manifest (already reduced to
// the requested budget) or the output of an earlier stage.
struct StageInput {
  DatasetRef ref;
  std::shared_ptr<const corpus::DatasetManifest> manifest;  // registry inputs
  std::string producer;                                     // stage inputs
  uint64_t fingerprint = 0;  // content hash of a registry manifest
};

struct Stage {
  StageKind kind = StageKind::kTrainVc;
  std::string name;
  std::vector<std::string> depends_on;
  std::vector<StageInput> inputs;
  std::string model;        // VC for batch_convert, TTS for fine_tune
  SpeakerId target;         // batch_convert
  bool multi_speaker = false;
};

struct Plan {
  std::vector<Stage> stages;
  uint64_t root_seed = 1;

  // One line per stage, stable across runs.
  std::string Describe() const;
};

// Resolves every dataset (ALL = full manifest, otherwise ReduceManifest with
// a seed derived from `root_seed`). Pure: no filesystem access.
Plan MakePlan(const Program& program, const corpus::Registry& registry, uint64_t root_seed);

struct Artifact {
  std::string kind;  // vc_checkpoint, classifier_checkpoint, synthetic_manifest,
                     // tts_checkpoint, ft_checkpoint, target_manifest, log
  std::string name;
  std::string path;  // relative to the workspace
  std::string hash;  // FNV-1a of the file bytes, hex
};

struct ExecuteResult {
  std::vector<Artifact> artifacts;
  std::vector<std::string> ran;
  std::vector<std::string> skipped;
};

// Runs stages in order under `workspace`, writing "<workspace>/artifacts.tsv"
// ("kind<TAB>name<TAB>path<TAB>hash") after every stage. A stage whose key
// and artifacts match a previous run is skipped. Configuration keys: spk.*,
// vc.*, tts.* (architecture), tts.train.*, tts.finetune.*. Stage seeds are
// DeriveSeed(root_seed, "<kind>:<name>") and override any configured seed.
ExecuteResult Execute(const Plan& plan, const Config& config, const std::string& workspace,
                      const std::function<void(const std::string&)>& progress = {});

std::string FormatIndex(const std::vector<Artifact>& artifacts);
std::vector<Artifact> ParseIndex(const std::string& text);

}  // namespace vcaug::recipe
