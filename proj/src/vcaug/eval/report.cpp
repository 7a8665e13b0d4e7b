#include "vcaug/eval/report.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "vcaug/error.hpp"
#include "vcaug/eval/objective.hpp"
#include "vcaug/util/strings.hpp"

namespace vcaug::eval {

std::vector<ObjectiveRow> EvaluateObjective(const std::vector<ObjectiveSystem>& systems,
                                            const corpus::DatasetManifest& reference,
                                            const corpus::DatasetManifest& test,
                                            const speaker_id::SpeakerClassifier* classifier) {
  if (systems.empty()) throw ContractError("objective evaluation needs at least one system");
  std::set<std::string> seen;
  for (const auto& u : reference.utterances()) seen.insert(u->utt_id);
  std::vector<corpus::UtterancePtr> held_out;
  for (const auto& u : test.utterances()) {
    if (!seen.count(u->utt_id)) held_out.push_back(u);
  }
  if (held_out.empty()) {
    throw ContractError("no held-out test utterances: every test utterance is in the reference set");
  }
  std::vector<ObjectiveRow> rows;
  for (const auto& sys : systems) {
    if (!sys.model) throw ContractError("system '" + sys.name + "' has no model");
    const tts::ZVector z = sys.model->CentroidZ(reference);
    ObjectiveRow row;
    row.system = sys.name;
    row.n = held_out.size();
    double spk = 0.0;
    for (const auto& u : held_out) {
      const corpus::Mel mel = sys.model->Synthesize(u->phonemes, z, sys.model->SpeakerFor(u->speaker));
      row.mel_l1 += MelL1Distance(mel, u->mel);
      row.length_ratio += static_cast<double>(mel.rows()) / static_cast<double>(u->mel.rows());
      if (classifier) spk += SpeakerScore(*classifier, mel, u->speaker);
    }
    const double n = static_cast<double>(held_out.size());
    row.mel_l1 /= n;
    row.length_ratio /= n;
    row.speaker_score = classifier ? spk / n : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(row);
  }
  return rows;
}

std::string RenderObjective(const std::vector<ObjectiveRow>& rows) {
  std::string out = "system\tn\tmel_l1\tlength_ratio\tspeaker_score\n";
  for (const auto& r : rows) {
    out += r.system + "\t" + std::to_string(r.n) + "\t" + FormatFixed(r.mel_l1, 6) + "\t" +
           FormatFixed(r.length_ratio, 4) + "\t" +
           (std::isnan(r.speaker_score) ? "-" : FormatFixed(r.speaker_score, 4)) + "\n";
  }
  return out;
}

}  // namespace vcaug::eval
