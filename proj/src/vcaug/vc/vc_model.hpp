#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vcaug/corpus/corpus.hpp"
#include "vcaug/nn/layers.hpp"
#include "vcaug/nn/optim.hpp"
#include "vcaug/speaker_id/classifier.hpp"

namespace vcaug {
class Config;
}

namespace vcaug::vc {

using corpus::SpeakerId;
using speaker_id::SpeakerEmbedding;

struct VcConfig {
  int phoneme_embedding = 64;
  int phoneme_channels = 128;  // C_phon
  int encoder_kernel = 5;
  int prosody_hidden = 32;
  int prosody_channels = 8;  // C_pros
  int downsample = 4;        // r
  int decoder_channels = 128;
  int decoder_kernel = 5;
  int steps = 1500;
  int batch_size = 8;
  double learning_rate = 2e-3;
  // Learning rate decays linearly to this fraction by the last step.
  double final_lr_fraction = 0.1;
  uint64_t seed = 1;

  // Reads keys "vc.<field>".
  static VcConfig FromConfig(const Config& cfg);
  // Bottleneck constraint: C_pros < M and r > 1.
  void Validate(int mel_bands) const;
};

// T' x C_pros prosody code, T' = ceil(T / r).
struct ProsodyCode {
  nn::Matrix code;
  int source_frames = 0;
};

// Parallel, prosody-preserving voice conversion: a phoneme encoder over
// speaker-conditioned upsampled phonemes, a temporally downsampled prosody
// bottleneck over the reference mel, and a non-autoregressive decoder.
class VcModel {
 public:
  VcModel(VcConfig config, std::vector<std::string> vocabulary, int mel_bands,
          std::map<SpeakerId, std::vector<double>> speaker_embeddings);
  VcModel(const VcModel&) = delete;
  VcModel& operator=(const VcModel&) = delete;

  // Trains by self-reconstruction. `loss_log` receives one mean L1 per step.
  static std::unique_ptr<VcModel> Train(const corpus::TrainingCollection& data,
                                        const speaker_id::SpeakerClassifier& classifier,
                                        const VcConfig& config,
                                        std::vector<double>* loss_log = nullptr);

  nn::Matrix EncodePhonemes(const std::vector<std::string>& frame_phonemes,
                            const SpeakerEmbedding& spk) const;
  ProsodyCode EncodeProsody(const corpus::Mel& mel) const;
  corpus::Mel Decode(const nn::Matrix& phoneme_embeddings, const ProsodyCode& prosody,
                     const SpeakerEmbedding& spk) const;

  corpus::Utterance Convert(const corpus::Utterance& u, const SpeakerId& target) const;
  corpus::DatasetManifest BatchConvert(const corpus::DatasetManifest& source,
                                       const SpeakerId& target, const std::string& out_name) const;

  // Mean L1 of self-reconstruction over a set of utterances.
  double ReconstructionL1(const std::vector<corpus::UtterancePtr>& utts) const;

  SpeakerEmbedding Embedding(const SpeakerId& s) const;
  bool HasSpeaker(const SpeakerId& s) const { return embeddings_.count(s) != 0; }
  const VcConfig& config() const { return config_; }
  int mel_bands() const { return mel_bands_; }

  void Save(const std::string& path) const;
  static std::unique_ptr<VcModel> Load(const std::string& path);

  // Reconstruction loss of a batch on a recording tape (gradient checks).
  nn::Var BatchLoss(nn::Tape& tape, const std::vector<const corpus::Utterance*>& batch) const;
  nn::ParameterStore& parameters() { return store_; }

 private:
  std::vector<int> Lookup(const std::vector<std::string>& symbols) const;
  nn::Var SpeakerRow(nn::Tape& tape, const SpeakerEmbedding& spk) const;
  nn::Var PhonemeEncoder(nn::Tape& tape, const std::vector<std::string>& frame_phonemes,
                         nn::Var spk_row) const;
  nn::Var ProsodyEncoder(nn::Tape& tape, const nn::Matrix& mel) const;
  nn::Var Decoder(nn::Tape& tape, nn::Var phon, nn::Var pros, nn::Var spk_row) const;
  nn::Var Reconstruct(nn::Tape& tape, const corpus::Utterance& u, const SpeakerEmbedding& spk) const;

  VcConfig config_;
  std::vector<std::string> vocabulary_;
  std::map<std::string, int> vocab_index_;
  int mel_bands_;
  int speaker_dim_;
  std::map<SpeakerId, std::vector<double>> embeddings_;

  nn::ParameterStore store_;
  nn::Embedding phoneme_table_;
  std::vector<nn::Conv1d> phoneme_convs_;
  nn::Conv1d prosody_conv1_;
  nn::Conv1d prosody_conv2_;
  nn::Conv1d decoder_conv1_;
  nn::Conv1d decoder_conv2_;
  nn::Linear decoder_out_;
};

}  // namespace vcaug::vc
