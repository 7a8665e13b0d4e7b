#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vcaug/corpus/corpus.hpp"
#include "vcaug/nn/layers.hpp"
#include "vcaug/nn/optim.hpp"

namespace vcaug {
class Config;
}

namespace vcaug::speaker_id {

using corpus::SpeakerId;

struct SpeakerEmbedding {
  SpeakerId speaker;
  std::vector<double> vector;  // unit norm
};

struct ClassifierConfig {
  int conv_channels = 32;
  int conv_kernel = 5;
  int embedding_dim = 64;
  int steps = 400;
  int batch_size = 8;
  double learning_rate = 3e-3;
  // Plateau check runs every `eval_every` steps on the full training set;
  // training stops after `patience` checks without improvement.
  int eval_every = 50;
  int patience = 3;
  double min_improvement = 1e-4;
  uint64_t seed = 1;

  // Reads keys "spk.<field>".
  static ClassifierConfig FromConfig(const Config& cfg);
};

struct ClassifierReport {
  int steps_run = 0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

// Conv stack over time -> global average pool -> embedding layer ->
// softmax over speakers. Speaker embeddings are the unit-normalised mean
// embedding-layer activation over each speaker's training utterances.
class SpeakerClassifier {
 public:
  SpeakerClassifier(ClassifierConfig config, std::vector<SpeakerId> speakers, int mel_bands);
  SpeakerClassifier(const SpeakerClassifier&) = delete;
  SpeakerClassifier& operator=(const SpeakerClassifier&) = delete;

  static std::unique_ptr<SpeakerClassifier> Train(const corpus::TrainingCollection& data,
                                                  const ClassifierConfig& config,
                                                  ClassifierReport* report = nullptr);

  // Probability per speaker, in speakers() order.
  std::vector<double> Classify(const corpus::Mel& mel) const;
  SpeakerEmbedding Embed(const SpeakerId& speaker) const;
  // Embedding-layer activation for one utterance (not normalised).
  std::vector<double> UtteranceEmbedding(const corpus::Mel& mel) const;

  const std::vector<SpeakerId>& speakers() const { return speakers_; }
  int SpeakerIndex(const SpeakerId& s) const;  // -1 when unknown
  bool Has(const SpeakerId& s) const { return SpeakerIndex(s) >= 0; }
  int embedding_dim() const { return config_.embedding_dim; }
  int mel_bands() const { return mel_bands_; }
  const ClassifierConfig& config() const { return config_; }

  void Save(const std::string& path) const;
  static std::unique_ptr<SpeakerClassifier> Load(const std::string& path);
  // "speaker<TAB>v1 v2 ..." per line.
  std::string ExportEmbeddings() const;

  // Exposed for gradient checks: mean cross-entropy over a batch.
  nn::Var BatchLoss(nn::Tape& tape, const std::vector<const corpus::Mel*>& mels,
                    const std::vector<int>& labels) const;
  nn::ParameterStore& parameters() { return store_; }

 private:
  struct Outputs {
    nn::Var embedding;
    nn::Var logits;
  };
  Outputs Forward(nn::Tape& tape, const corpus::Mel& mel) const;
  void CheckBands(const corpus::Mel& mel) const;
  void ComputeSpeakerEmbeddings(const corpus::TrainingCollection& data);

  ClassifierConfig config_;
  std::vector<SpeakerId> speakers_;
  int mel_bands_;
  nn::ParameterStore store_;
  nn::Conv1d conv1_;
  nn::Conv1d conv2_;
  nn::Linear embed_;
  nn::Linear out_;
  std::map<SpeakerId, std::vector<double>> embeddings_;
};

nn::Matrix MelToMatrix(const corpus::Mel& mel);

}  // namespace vcaug::speaker_id
