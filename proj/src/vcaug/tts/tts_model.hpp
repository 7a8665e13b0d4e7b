#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vcaug/corpus/corpus.hpp"
#include "vcaug/nn/layers.hpp"
#include "vcaug/nn/optim.hpp"
#include "vcaug/speaker_id/classifier.hpp"

namespace vcaug {
class Config;
class Rng;
}

namespace vcaug::tts {

using corpus::SpeakerId;
using speaker_id::SpeakerEmbedding;

struct ZVector {
  std::vector<double> values;
};

struct Posterior {
  std::vector<double> mu;
  std::vector<double> log_var;
};

// Architecture hyperparameters. Fixed at model creation.
struct ArchConfig {
  int phoneme_embedding = 64;
  int encoder_channels = 64;
  int encoder_kernel = 5;
  int encoder_gru = 32;  // per direction
  int z_dim = 8;
  int vae_channels = 32;
  int attention_dim = 64;
  int location_kernel = 7;
  int prenet_hidden = 64;
  int prenet_out = 32;
  int attention_rnn = 128;
  int decoder_rnn = 128;
  int frames_per_step = 2;
  // Prenet dropout, training only.
  double prenet_dropout = 0.5;
  double log_var_min = -8.0;
  double log_var_max = 4.0;
  double stop_threshold = 0.5;
  // Free-running cap, as a multiple of the mean training utterance length.
  double max_frames_factor = 10.0;
  uint64_t seed = 1;

  // Reads keys "tts.<field>".
  static ArchConfig FromConfig(const Config& cfg);
};

// Optimisation schedule for Train and FineTune.
struct TrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double learning_rate = 1e-3;
  // Linear decay to this fraction of the base rate over the initial
  // training run; fine-tuning continues at the decayed rate.
  double final_lr_fraction = 0.2;
  // KL weight: linear anneal from 0 to `kl_weight_max` over the first
  // `kl_anneal_fraction` of the initial training steps, then constant.
  double kl_weight_max = 1e-2;
  double kl_anneal_fraction = 0.1;
  uint64_t seed = 1;

  void Validate() const;

  // Keys "<prefix>.steps", "<prefix>.batch_size", ...
  static TrainConfig FromConfig(const Config& cfg, const std::string& prefix,
                                const TrainConfig& defaults);

  static TrainConfig FullScale();        // 400k steps, batch 32
  static TrainConfig FullFineTune();     // 4k additional steps
  static TrainConfig DeskScale();         // 2000 steps, batch 8
  static TrainConfig DeskFineTune();      // 400 steps
};

struct LossBreakdown {
  double total = 0.0;
  double l1 = 0.0;
  double stop_ce = 0.0;
  double kl = 0.0;
};

struct ForwardResult {
  corpus::Mel mel;          // T x M
  nn::Matrix stop_logits;   // T x 1
  nn::Matrix attention;     // decoder steps x phoneme inputs
};

// One line of the training log.
struct StepLog {
  int64_t step = 0;
  LossBreakdown loss;
};

// KL(N(mu, exp(log_var)) || N(0, I)) summed over dimensions.
double KlLoss(const Posterior& p);

// total = l1 + stop_ce + beta * kl over one utterance.
LossBreakdown ComputeLoss(const ForwardResult& out, const corpus::Mel& target,
                          const Posterior& posterior, double kl_weight);

// Tacotron-style attention model: phoneme encoder (conv + bidirectional
// GRU), VAE reference encoder whose z is concatenated to every encoder
// frame, location-sensitive attention, and a two-layer GRU decoder that
// emits `frames_per_step` mel frames and stop logits per step.
class TtsModel {
 public:
  TtsModel(ArchConfig arch, std::vector<std::string> vocabulary, int mel_bands,
           std::optional<std::map<SpeakerId, std::vector<double>>> speaker_embeddings);
  TtsModel(const TtsModel&) = delete;
  TtsModel& operator=(const TtsModel&) = delete;

  // `classifier` must be given iff the model is multi-speaker.
  static std::unique_ptr<TtsModel> Train(const corpus::TrainingCollection& data,
                                         const ArchConfig& arch, const TrainConfig& cfg,
                                         const speaker_id::SpeakerClassifier* classifier,
                                         std::vector<StepLog>* log = nullptr);

  // Continues training (same losses, schedule, and optimizer state) on
  // real recordings of one speaker and style only.
  void FineTune(const corpus::DatasetManifest& target, const TrainConfig& cfg,
                std::vector<StepLog>* log = nullptr);
  // Same guard and procedure over a loose utterance list: every utterance
  // must be real and share one speaker and style.
  void FineTune(const std::vector<corpus::UtterancePtr>& target, const TrainConfig& cfg,
                std::vector<StepLog>* log = nullptr);

  Posterior VaeEncode(const corpus::Mel& mel) const;
  // Mean of posterior means over real recordings of one speaker/style.
  ZVector CentroidZ(const corpus::DatasetManifest& recordings) const;

  // Teacher-forced when `teacher` is given, free-running otherwise.
  ForwardResult Forward(const std::vector<std::string>& phonemes, const ZVector& z,
                        const std::optional<SpeakerEmbedding>& spk,
                        const corpus::Mel* teacher) const;
  corpus::Mel Synthesize(const std::vector<std::string>& phonemes, const ZVector& z,
                         const std::optional<SpeakerEmbedding>& spk) const;

  // Mean teacher-forced L1 per bin with z = posterior mean of each
  // utterance's own mel.
  double TeacherForcedL1(const std::vector<corpus::UtterancePtr>& utts) const;

  bool multi_speaker() const { return speaker_embeddings_.has_value(); }
  std::optional<SpeakerEmbedding> SpeakerFor(const SpeakerId& s) const;
  const ArchConfig& arch() const { return arch_; }
  int mel_bands() const { return mel_bands_; }
  int z_dim() const { return arch_.z_dim; }
  int64_t step_count() const { return step_count_; }
  int max_frames() const;
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

  void Save(const std::string& path) const;
  static std::unique_ptr<TtsModel> Load(const std::string& path);

  // Batch loss on a recording tape with a fixed reparameterisation noise
  // source; exposed for gradient checks.
  nn::Var BatchLoss(nn::Tape& tape, const std::vector<const corpus::Utterance*>& batch,
                    double kl_weight, uint64_t noise_seed, LossBreakdown* parts) const;
  nn::ParameterStore& parameters() { return store_; }

 private:
  std::vector<int> Lookup(const std::vector<std::string>& phonemes) const;
  nn::Var Encode(nn::Tape& tape, const std::vector<int>& ids, nn::Var z_row) const;
  void VaeForward(nn::Tape& tape, const nn::Matrix& mel, nn::Var* mu, nn::Var* log_var) const;
  struct DecodeOut {
    nn::Var mel;
    nn::Var stop_logits;
    nn::Matrix attention;
  };
  DecodeOut Decode(nn::Tape& tape, nn::Var memory, const std::optional<nn::Var>& spk_row,
                   const nn::Matrix* teacher, int max_frames, Rng* dropout) const;
  nn::Var SpeakerRow(nn::Tape& tape, const SpeakerEmbedding& spk) const;
  void CheckSpeaker(const std::optional<SpeakerEmbedding>& spk) const;
  void RunSteps(const std::vector<corpus::UtterancePtr>& utts, const TrainConfig& cfg,
                std::vector<StepLog>* log);
  double KlWeightAt(int64_t step) const;
  double LrScaleAt(int64_t step) const;

  ArchConfig arch_;
  std::vector<std::string> vocabulary_;
  std::map<std::string, int> vocab_index_;
  int mel_bands_;
  std::optional<std::map<SpeakerId, std::vector<double>>> speaker_embeddings_;
  int speaker_dim_ = 0;

  // Training state carried across Train and FineTune.
  int64_t step_count_ = 0;
  int64_t base_steps_ = 0;
  TrainConfig base_config_;
  double mean_training_frames_ = 0.0;

  nn::ParameterStore store_;
  nn::Embedding embedding_;
  std::vector<nn::Conv1d> encoder_convs_;
  nn::GruCell encoder_fwd_;
  nn::GruCell encoder_bwd_;
  nn::Conv1d vae_conv1_;
  nn::Conv1d vae_conv2_;
  nn::Linear vae_out_;
  nn::Linear prenet1_;
  nn::Linear prenet2_;
  nn::GruCell attention_rnn_;
  nn::Linear query_proj_;
  nn::Linear memory_proj_;
  nn::Linear location_proj_;
  nn::Linear energy_proj_;
  nn::GruCell decoder_rnn_;
  nn::Linear mel_proj_;
  nn::Linear stop_proj_;
  std::unique_ptr<nn::Adam> optimizer_;
};

// Symbol appended to every phoneme sequence before encoding.
inline constexpr const char* kEndOfSequence = "~";

}  // namespace vcaug::tts
