#include "vcaug/eval/objective.hpp"

#include <algorithm>

#include "vcaug/error.hpp"

namespace vcaug::eval {

double MelL1Distance(const corpus::Mel& a, const corpus::Mel& b) {
  if (a.cols() != b.cols()) {
    throw ContractError("mel L1: " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) +
                        " bands");
  }
  const Eigen::Index t = std::min(a.rows(), b.rows());
  if (t == 0 || a.cols() == 0) throw ContractError("mel L1: empty mel");
  return (a.topRows(t).cast<double>() - b.topRows(t).cast<double>()).cwiseAbs().mean();
}

double SpeakerScore(const speaker_id::SpeakerClassifier& classifier, const corpus::Mel& mel,
                    const corpus::SpeakerId& target) {
  const int idx = classifier.SpeakerIndex(target);
  if (idx < 0) throw LookupError("classifier does not know speaker '" + target.value + "'");
  return classifier.Classify(mel)[static_cast<size_t>(idx)];
}

}  // namespace vcaug::eval
