#include "vcaug/speaker_id/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vcaug/error.hpp"
#include "vcaug/nn/serialize.hpp"
#include "vcaug/util/config.hpp"
#include "vcaug/util/hash.hpp"
#include "vcaug/util/rng.hpp"
#include "vcaug/util/strings.hpp"

namespace vcaug::speaker_id {

namespace {
constexpr const char* kKind = "speaker_classifier";
constexpr uint32_t kVersion = 1;
}  // namespace

nn::Matrix MelToMatrix(const corpus::Mel& mel) { return mel.cast<double>(); }

ClassifierConfig ClassifierConfig::FromConfig(const Config& cfg) {
  ClassifierConfig c;
  c.conv_channels = static_cast<int>(cfg.GetInt("spk.conv_channels", c.conv_channels));
  c.conv_kernel = static_cast<int>(cfg.GetInt("spk.conv_kernel", c.conv_kernel));
  c.embedding_dim = static_cast<int>(cfg.GetInt("spk.embedding_dim", c.embedding_dim));
  c.steps = static_cast<int>(cfg.GetInt("spk.steps", c.steps));
  c.batch_size = static_cast<int>(cfg.GetInt("spk.batch_size", c.batch_size));
  c.learning_rate = cfg.GetDouble("spk.learning_rate", c.learning_rate);
  c.eval_every = static_cast<int>(cfg.GetInt("spk.eval_every", c.eval_every));
  c.patience = static_cast<int>(cfg.GetInt("spk.patience", c.patience));
  c.min_improvement = cfg.GetDouble("spk.min_improvement", c.min_improvement);
  c.seed = static_cast<uint64_t>(cfg.GetInt("spk.seed", static_cast<int64_t>(c.seed)));
  if (c.steps <= 0 || c.batch_size <= 0 || c.eval_every <= 0) {
    throw ValidationError("spk.steps, spk.batch_size and spk.eval_every must be positive");
  }
  return c;
}

SpeakerClassifier::SpeakerClassifier(ClassifierConfig config, std::vector<SpeakerId> speakers,
                                     int mel_bands)
    : config_(config), speakers_(std::move(speakers)), mel_bands_(mel_bands) {
  if (speakers_.size() < 2) {
    throw ContractError("speaker classifier needs at least 2 speakers, got " +
                        std::to_string(speakers_.size()));
  }
  std::sort(speakers_.begin(), speakers_.end());
  Rng rng(DeriveSeed(config_.seed, "spk.init"));
  conv1_ = nn::Conv1d(store_, "conv1", mel_bands_, config_.conv_channels, config_.conv_kernel, rng);
  conv2_ = nn::Conv1d(store_, "conv2", config_.conv_channels, config_.conv_channels,
                      config_.conv_kernel, rng);
  embed_ = nn::Linear(store_, "embed", config_.conv_channels, config_.embedding_dim, rng);
  out_ = nn::Linear(store_, "out", config_.embedding_dim, static_cast<int>(speakers_.size()), rng);
}

int SpeakerClassifier::SpeakerIndex(const SpeakerId& s) const {
  auto it = std::lower_bound(speakers_.begin(), speakers_.end(), s);
  if (it == speakers_.end() || *it != s) return -1;
  return static_cast<int>(it - speakers_.begin());
}

void SpeakerClassifier::CheckBands(const corpus::Mel& mel) const {
  if (mel.cols() != mel_bands_) {
    throw ContractError("speaker classifier expects " + std::to_string(mel_bands_) +
                        " mel bands, got " + std::to_string(mel.cols()));
  }
  if (mel.rows() == 0) throw ContractError("speaker classifier: empty mel");
}

SpeakerClassifier::Outputs SpeakerClassifier::Forward(nn::Tape& tape,
                                                      const corpus::Mel& mel) const {
  CheckBands(mel);
  nn::Var x = tape.Constant(MelToMatrix(mel));
  nn::Var h = nn::Relu(conv1_(tape, x));
  h = nn::Relu(conv2_(tape, h));
  nn::Var pooled = nn::MeanRows(h);
  nn::Var e = nn::Tanh(embed_(tape, pooled));
  return {e, out_(tape, e)};
}

nn::Var SpeakerClassifier::BatchLoss(nn::Tape& tape, const std::vector<const corpus::Mel*>& mels,
                                     const std::vector<int>& labels) const {
  std::vector<nn::Var> logits;
  for (const corpus::Mel* m : mels) logits.push_back(Forward(tape, *m).logits);
  return nn::CrossEntropy(nn::ConcatRows(logits), labels);
}

std::vector<double> SpeakerClassifier::Classify(const corpus::Mel& mel) const {
  nn::Tape tape(false);
  const nn::Matrix& logits = Forward(tape, mel).logits.value();
  std::vector<double> p(static_cast<size_t>(logits.cols()));
  const double m = logits.maxCoeff();
  double z = 0.0;
  for (size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits(0, static_cast<Eigen::Index>(i)) - m);
  for (double& v : p) v /= z;
  return p;
}

std::vector<double> SpeakerClassifier::UtteranceEmbedding(const corpus::Mel& mel) const {
  nn::Tape tape(false);
  const nn::Matrix& e = Forward(tape, mel).embedding.value();
  return std::vector<double>(e.data(), e.data() + e.size());
}

SpeakerEmbedding SpeakerClassifier::Embed(const SpeakerId& speaker) const {
  auto it = embeddings_.find(speaker);
  if (it == embeddings_.end()) {
    throw LookupError("speaker '" + speaker.value + "' is not registered with the classifier");
  }
  return {speaker, it->second};
}

void SpeakerClassifier::ComputeSpeakerEmbeddings(const corpus::TrainingCollection& data) {
  std::map<SpeakerId, Eigen::VectorXd> sums;
  for (const auto& u : data.utterances) {
    auto e = UtteranceEmbedding(u->mel);
    auto& s = sums[u->speaker];
    if (s.size() == 0) s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(e.size()));
    s += Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size()));
  }
  embeddings_.clear();
  for (auto& [spk, s] : sums) {
    const double n = s.norm();
    if (n > 0) s /= n;
    embeddings_[spk] = std::vector<double>(s.data(), s.data() + s.size());
  }
}

std::unique_ptr<SpeakerClassifier> SpeakerClassifier::Train(const corpus::TrainingCollection& data,
                                                            const ClassifierConfig& config,
                                                            ClassifierReport* report) {
  auto speakers = data.speakers();
  if (speakers.size() < 2) {
    throw ContractError("speaker classifier needs at least 2 speakers, got " +
                        std::to_string(speakers.size()));
  }
  if (data.utterances.empty()) throw ContractError("speaker classifier: no data");
  const int bands = static_cast<int>(data.utterances[0]->mel.cols());
  auto model = std::make_unique<SpeakerClassifier>(config, speakers, bands);

  // Canonical order so that results do not depend on input order.
  std::vector<corpus::UtterancePtr> utts = data.utterances;
  std::sort(utts.begin(), utts.end(),
            [](const auto& a, const auto& b) { return a->utt_id < b->utt_id; });
  std::vector<int> labels;
  for (const auto& u : utts) labels.push_back(model->SpeakerIndex(u->speaker));

  nn::AdamOptions opts;
  opts.learning_rate = config.learning_rate;
  nn::Adam adam(model->store_, opts);
  Rng rng(DeriveSeed(config.seed, "spk.batches"));

  auto full_loss = [&]() {
    double total = 0.0;
    for (size_t i = 0; i < utts.size(); ++i) {
      auto p = model->Classify(utts[i]->mel);
      total -= std::log(std::max(p[static_cast<size_t>(labels[i])], 1e-300));
    }
    return total / static_cast<double>(utts.size());
  };

  double best = full_loss();
  int stale = 0;
  int step = 0;
  while (step < config.steps) {
    std::vector<const corpus::Mel*> mels;
    std::vector<int> ys;
    for (int b = 0; b < config.batch_size; ++b) {
      const size_t i = static_cast<size_t>(rng.Below(utts.size()));
      mels.push_back(&utts[i]->mel);
      ys.push_back(labels[i]);
    }
    nn::Tape tape;
    nn::Var loss = model->BatchLoss(tape, mels, ys);
    tape.Backward(loss);
    adam.Step();
    ++step;
    if (step % config.eval_every == 0) {
      const double l = full_loss();
      if (l < best - config.min_improvement) {
        best = l;
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    }
  }

  model->ComputeSpeakerEmbeddings(data);
  if (report) {
    report->steps_run = step;
    report->final_loss = full_loss();
    int correct = 0;
    for (size_t i = 0; i < utts.size(); ++i) {
      auto p = model->Classify(utts[i]->mel);
      const int arg = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
      correct += arg == labels[i];
    }
    report->train_accuracy = static_cast<double>(correct) / static_cast<double>(utts.size());
  }
  return model;
}

void SpeakerClassifier::Save(const std::string& path) const {
  BinaryWriter w;
  w.U32(static_cast<uint32_t>(config_.conv_channels));
  w.U32(static_cast<uint32_t>(config_.conv_kernel));
  w.U32(static_cast<uint32_t>(config_.embedding_dim));
  w.U32(static_cast<uint32_t>(mel_bands_));
  w.U64(config_.seed);
  w.U32(static_cast<uint32_t>(speakers_.size()));
  for (const auto& s : speakers_) w.Str(s.value);
  store_.Write(w);
  w.U32(static_cast<uint32_t>(embeddings_.size()));
  for (const auto& [spk, v] : embeddings_) {
    w.Str(spk.value);
    nn::Matrix m = Eigen::Map<const nn::Matrix>(v.data(), 1, static_cast<Eigen::Index>(v.size()));
    w.Mat(m);
  }
  CheckpointHeader h{kKind, kVersion, HashBytes(w.bytes())};
  WriteCheckpoint(path, h, w);
}

std::unique_ptr<SpeakerClassifier> SpeakerClassifier::Load(const std::string& path) {
  BinaryReader r = ReadCheckpoint(path, kKind, kVersion, nullptr);
  ClassifierConfig c;
  c.conv_channels = static_cast<int>(r.U32());
  c.conv_kernel = static_cast<int>(r.U32());
  c.embedding_dim = static_cast<int>(r.U32());
  const int bands = static_cast<int>(r.U32());
  c.seed = r.U64();
  std::vector<SpeakerId> speakers(r.U32());
  for (auto& s : speakers) s.value = r.Str();
  auto model = std::make_unique<SpeakerClassifier>(c, speakers, bands);
  model->store_.Read(r);
  const uint32_t n = r.U32();
  for (uint32_t i = 0; i < n; ++i) {
    SpeakerId s{r.Str()};
    nn::Matrix m = r.Mat();
    model->embeddings_[s] = std::vector<double>(m.data(), m.data() + m.size());
  }
  return model;
}

std::string SpeakerClassifier::ExportEmbeddings() const {
  std::ostringstream out;
  for (const auto& [spk, v] : embeddings_) {
    out << spk.value << '\t';
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) out << ' ';
      out << FormatDouble(v[i]);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace vcaug::speaker_id
