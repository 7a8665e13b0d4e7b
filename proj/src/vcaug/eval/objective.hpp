#pragma once

#include "vcaug/corpus/corpus.hpp"
#include "vcaug/speaker_id/classifier.hpp"

namespace vcaug::eval {

// Mean absolute difference per bin after truncating both to the shorter
// length. Band mismatch is a ContractError.
double MelL1Distance(const corpus::Mel& a, const corpus::Mel& b);

// Classifier probability of `target`.
double SpeakerScore(const speaker_id::SpeakerClassifier& classifier, const corpus::Mel& mel,
                    const corpus::SpeakerId& target);

}  // namespace vcaug::eval
