#pragma once

#include <string>
#include <vector>

#include "vcaug/corpus/corpus.hpp"
#include "vcaug/speaker_id/classifier.hpp"
#include "vcaug/tts/tts_model.hpp"

namespace vcaug::eval {

struct ObjectiveSystem {
  std::string name;
  const tts::TtsModel* model = nullptr;
};

struct ObjectiveRow {
  std::string system;
  size_t n = 0;
  double mel_l1 = 0.0;         // mean over test utterances, truncation-aligned
  double length_ratio = 0.0;   // mean synthesized / reference frame count
  double speaker_score = 0.0;  // mean target probability; NaN without classifier
};

// Synthesizes every test utterance not present (by id) in `reference` with
// each system, conditioned on the centroid z of `reference`.
std::vector<ObjectiveRow> EvaluateObjective(const std::vector<ObjectiveSystem>& systems,
                                            const corpus::DatasetManifest& reference,
                                            const corpus::DatasetManifest& test,
                                            const speaker_id::SpeakerClassifier* classifier);

// "system<TAB>n<TAB>mel_l1<TAB>length_ratio<TAB>speaker_score" with a header.
std::string RenderObjective(const std::vector<ObjectiveRow>& rows);

}  // namespace vcaug::eval
