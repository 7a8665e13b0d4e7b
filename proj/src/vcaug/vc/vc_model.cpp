#include "vcaug/vc/vc_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vcaug/error.hpp"
#include "vcaug/nn/serialize.hpp"
#include "vcaug/util/config.hpp"
#include "vcaug/util/hash.hpp"
#include "vcaug/util/rng.hpp"

namespace vcaug::vc {

namespace {
constexpr const char* kKind = "vc_model";
constexpr uint32_t kVersion = 1;
}  // namespace

VcConfig VcConfig::FromConfig(const Config& cfg) {
  VcConfig c;
  c.phoneme_embedding = static_cast<int>(cfg.GetInt("vc.phoneme_embedding", c.phoneme_embedding));
  c.phoneme_channels = static_cast<int>(cfg.GetInt("vc.phoneme_channels", c.phoneme_channels));
  c.encoder_kernel = static_cast<int>(cfg.GetInt("vc.encoder_kernel", c.encoder_kernel));
  c.prosody_hidden = static_cast<int>(cfg.GetInt("vc.prosody_hidden", c.prosody_hidden));
  c.prosody_channels = static_cast<int>(cfg.GetInt("vc.prosody_channels", c.prosody_channels));
  c.downsample = static_cast<int>(cfg.GetInt("vc.downsample", c.downsample));
  c.decoder_channels = static_cast<int>(cfg.GetInt("vc.decoder_channels", c.decoder_channels));
  c.decoder_kernel = static_cast<int>(cfg.GetInt("vc.decoder_kernel", c.decoder_kernel));
  c.steps = static_cast<int>(cfg.GetInt("vc.steps", c.steps));
  c.batch_size = static_cast<int>(cfg.GetInt("vc.batch_size", c.batch_size));
  c.learning_rate = cfg.GetDouble("vc.learning_rate", c.learning_rate);
  c.final_lr_fraction = cfg.GetDouble("vc.final_lr_fraction", c.final_lr_fraction);
  c.seed = static_cast<uint64_t>(cfg.GetInt("vc.seed", static_cast<int64_t>(c.seed)));
  if (c.steps <= 0 || c.batch_size <= 0) {
    throw ValidationError("vc.steps and vc.batch_size must be positive");
  }
  return c;
}

void VcConfig::Validate(int mel_bands) const {
  if (downsample <= 1) throw ValidationError("vc: downsampling rate must be > 1");
  if (prosody_channels < 1 || prosody_channels >= mel_bands) {
    throw ValidationError("vc: prosody channels must be in [1, mel_bands)");
  }
}

VcModel::VcModel(VcConfig config, std::vector<std::string> vocabulary, int mel_bands,
                 std::map<SpeakerId, std::vector<double>> speaker_embeddings)
    : config_(config),
      vocabulary_(std::move(vocabulary)),
      mel_bands_(mel_bands),
      embeddings_(std::move(speaker_embeddings)) {
  config_.Validate(mel_bands_);
  if (embeddings_.empty()) throw ContractError("vc: no speaker embeddings");
  speaker_dim_ = static_cast<int>(embeddings_.begin()->second.size());
  for (size_t i = 0; i < vocabulary_.size(); ++i) vocab_index_[vocabulary_[i]] = static_cast<int>(i);

  Rng rng(DeriveSeed(config_.seed, "vc.init"));
  const int k = config_.encoder_kernel;
  phoneme_table_ = nn::Embedding(store_, "phoneme_table", static_cast<int>(vocabulary_.size()),
                                 config_.phoneme_embedding, rng);
  int in = config_.phoneme_embedding + speaker_dim_;
  for (int i = 0; i < 3; ++i) {
    phoneme_convs_.emplace_back(store_, "phoneme_conv" + std::to_string(i), in,
                                config_.phoneme_channels, k, rng);
    in = config_.phoneme_channels;
  }
  prosody_conv1_ = nn::Conv1d(store_, "prosody_conv1", mel_bands_, config_.prosody_hidden, k, rng);
  prosody_conv2_ =
      nn::Conv1d(store_, "prosody_conv2", config_.prosody_hidden, config_.prosody_channels, k, rng);
  const int dec_in = config_.phoneme_channels + config_.prosody_channels + speaker_dim_;
  decoder_conv1_ = nn::Conv1d(store_, "decoder_conv1", dec_in, config_.decoder_channels,
                              config_.decoder_kernel, rng);
  decoder_conv2_ = nn::Conv1d(store_, "decoder_conv2", config_.decoder_channels,
                              config_.decoder_channels, config_.decoder_kernel, rng);
  decoder_out_ = nn::Linear(store_, "decoder_out", config_.decoder_channels, mel_bands_, rng);
}

std::vector<int> VcModel::Lookup(const std::vector<std::string>& symbols) const {
  std::vector<int> ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) {
    auto it = vocab_index_.find(s);
    if (it == vocab_index_.end()) throw VocabularyError("unknown phoneme symbol '" + s + "'");
    ids.push_back(it->second);
  }
  return ids;
}

SpeakerEmbedding VcModel::Embedding(const SpeakerId& s) const {
  auto it = embeddings_.find(s);
  if (it == embeddings_.end()) {
    throw LookupError("no speaker embedding for '" + s.value + "'");
  }
  return {s, it->second};
}

nn::Var VcModel::SpeakerRow(nn::Tape& tape, const SpeakerEmbedding& spk) const {
  if (static_cast<int>(spk.vector.size()) != speaker_dim_) {
    throw ContractError("vc: speaker embedding has dimension " + std::to_string(spk.vector.size()) +
                        ", expected " + std::to_string(speaker_dim_));
  }
  return tape.Constant(
      Eigen::Map<const nn::Matrix>(spk.vector.data(), 1, static_cast<Eigen::Index>(spk.vector.size())));
}

nn::Var VcModel::PhonemeEncoder(nn::Tape& tape, const std::vector<std::string>& frame_phonemes,
                                nn::Var spk_row) const {
  if (frame_phonemes.empty()) throw ContractError("vc: empty phoneme sequence");
  const auto ids = Lookup(frame_phonemes);
  nn::Var emb = phoneme_table_(tape, ids);
  // Speaker embedding concatenated to the upsampled phonemes before encoding.
  nn::Var parts[] = {emb, nn::BroadcastRows(spk_row, emb.rows())};
  nn::Var h = nn::ConcatCols(parts);
  for (const auto& conv : phoneme_convs_) h = nn::Relu(conv(tape, h));
  return h;
}

nn::Var VcModel::ProsodyEncoder(nn::Tape& tape, const nn::Matrix& mel) const {
  // Per-band mean removal strips the static spectral envelope, which
  // carries most of the speaker identity.
  nn::Matrix centred = mel.rowwise() - mel.colwise().mean();
  nn::Var x = tape.Constant(std::move(centred));
  nn::Var h = nn::Relu(prosody_conv1_(tape, x));
  h = prosody_conv2_(tape, h);
  return nn::Tanh(nn::AvgPoolRows(h, config_.downsample));
}

nn::Var VcModel::Decoder(nn::Tape& tape, nn::Var phon, nn::Var pros, nn::Var spk_row) const {
  const Eigen::Index t = phon.rows();
  const Eigen::Index expected = (t + config_.downsample - 1) / config_.downsample;
  if (pros.rows() != expected) {
    throw ContractError("vc decode: prosody code has " + std::to_string(pros.rows()) +
                        " frames, expected ceil(" + std::to_string(t) + "/" +
                        std::to_string(config_.downsample) + ") = " + std::to_string(expected));
  }
  if (phon.cols() != config_.phoneme_channels || pros.cols() != config_.prosody_channels) {
    throw ContractError("vc decode: channel mismatch");
  }
  nn::Var parts[] = {phon, nn::RepeatRows(pros, config_.downsample, t),
                     nn::BroadcastRows(spk_row, t)};
  nn::Var h = nn::ConcatCols(parts);
  h = nn::Relu(decoder_conv1_(tape, h));
  h = nn::Relu(decoder_conv2_(tape, h));
  return decoder_out_(tape, h);
}

nn::Matrix VcModel::EncodePhonemes(const std::vector<std::string>& frame_phonemes,
                                   const SpeakerEmbedding& spk) const {
  nn::Tape tape(false);
  return PhonemeEncoder(tape, frame_phonemes, SpeakerRow(tape, spk)).value();
}

ProsodyCode VcModel::EncodeProsody(const corpus::Mel& mel) const {
  if (mel.cols() != mel_bands_) {
    throw ContractError("vc: expected " + std::to_string(mel_bands_) + " mel bands, got " +
                        std::to_string(mel.cols()));
  }
  if (mel.rows() == 0) throw ContractError("vc: empty mel");
  nn::Tape tape(false);
  return {ProsodyEncoder(tape, speaker_id::MelToMatrix(mel)).value(), static_cast<int>(mel.rows())};
}

corpus::Mel VcModel::Decode(const nn::Matrix& phoneme_embeddings, const ProsodyCode& prosody,
                            const SpeakerEmbedding& spk) const {
  nn::Tape tape(false);
  nn::Var out = Decoder(tape, tape.Constant(phoneme_embeddings), tape.Constant(prosody.code),
                        SpeakerRow(tape, spk));
  return out.value().cast<float>();
}

nn::Var VcModel::Reconstruct(nn::Tape& tape, const corpus::Utterance& u,
                             const SpeakerEmbedding& spk) const {
  if (u.mel.cols() != mel_bands_) throw ContractError("vc: mel band mismatch");
  const auto frames = corpus::UpsamplePhonemes(u.phonemes, u.durations);
  nn::Var spk_row = SpeakerRow(tape, spk);
  nn::Var phon = PhonemeEncoder(tape, frames, spk_row);
  nn::Var pros = ProsodyEncoder(tape, speaker_id::MelToMatrix(u.mel));
  return Decoder(tape, phon, pros, spk_row);
}

nn::Var VcModel::BatchLoss(nn::Tape& tape,
                           const std::vector<const corpus::Utterance*>& batch) const {
  std::vector<nn::Var> losses;
  for (const corpus::Utterance* u : batch) {
    nn::Var pred = Reconstruct(tape, *u, Embedding(u->speaker));
    losses.push_back(nn::L1Loss(pred, speaker_id::MelToMatrix(u->mel)));
  }
  return nn::MeanAll(nn::ConcatRows(losses));
}

double VcModel::ReconstructionL1(const std::vector<corpus::UtterancePtr>& utts) const {
  double total = 0.0;
  int64_t n = 0;
  for (const auto& u : utts) {
    nn::Tape tape(false);
    nn::Var pred = Reconstruct(tape, *u, Embedding(u->speaker));
    total += (pred.value() - speaker_id::MelToMatrix(u->mel)).cwiseAbs().sum();
    n += u->mel.size();
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

corpus::Utterance VcModel::Convert(const corpus::Utterance& u, const SpeakerId& target) const {
  const SpeakerEmbedding spk = Embedding(target);
  nn::Tape tape(false);
  nn::Var pred = Reconstruct(tape, u, spk);
  corpus::Utterance out;
  out.utt_id = u.utt_id + "_to" + target.value;
  out.speaker = target;
  out.style = u.style;
  out.phonemes = u.phonemes;
  out.durations = u.durations;
  out.mel = pred.value().cast<float>();
  out.is_synthetic = true;
  out.source_speaker = u.speaker;
  out.Validate();
  return out;
}

corpus::DatasetManifest VcModel::BatchConvert(const corpus::DatasetManifest& source,
                                              const SpeakerId& target,
                                              const std::string& out_name) const {
  Embedding(target);  // fail fast on unknown targets, even for empty input
  std::vector<corpus::UtterancePtr> out;
  out.reserve(source.size());
  for (const auto& u : source.utterances()) {
    out.push_back(std::make_shared<corpus::Utterance>(Convert(*u, target)));
  }
  return corpus::DatasetManifest(out_name, target, source.style(), true, std::move(out),
                                 source.frame_shift_ms());
}

std::unique_ptr<VcModel> VcModel::Train(const corpus::TrainingCollection& data,
                                        const speaker_id::SpeakerClassifier& classifier,
                                        const VcConfig& config, std::vector<double>* loss_log) {
  const auto speakers = data.speakers();
  if (speakers.size() < 2) {
    throw ContractError("vc training needs at least 2 speakers, got " +
                        std::to_string(speakers.size()));
  }
  std::map<SpeakerId, std::vector<double>> embeddings;
  for (const auto& s : speakers) embeddings[s] = classifier.Embed(s).vector;
  // Keep every classifier speaker so conversion can target any of them.
  for (const auto& s : classifier.speakers()) embeddings[s] = classifier.Embed(s).vector;

  std::vector<corpus::UtterancePtr> utts = data.utterances;
  std::sort(utts.begin(), utts.end(),
            [](const auto& a, const auto& b) { return a->utt_id < b->utt_id; });
  std::set<std::string> symbols;
  for (const auto& u : utts) symbols.insert(u->phonemes.begin(), u->phonemes.end());
  const int bands = static_cast<int>(utts.front()->mel.cols());

  auto model = std::make_unique<VcModel>(config, std::vector<std::string>(symbols.begin(), symbols.end()),
                                         bands, std::move(embeddings));
  nn::AdamOptions opts;
  opts.learning_rate = config.learning_rate;
  nn::Adam adam(model->store_, opts);
  Rng rng(DeriveSeed(config.seed, "vc.batches"));
  for (int step = 0; step < config.steps; ++step) {
    std::vector<const corpus::Utterance*> batch;
    for (int b = 0; b < config.batch_size; ++b) {
      batch.push_back(utts[static_cast<size_t>(rng.Below(utts.size()))].get());
    }
    nn::Tape tape;
    nn::Var loss = model->BatchLoss(tape, batch);
    tape.Backward(loss);
    const double progress = static_cast<double>(step) / config.steps;
    adam.Step(1.0 - (1.0 - config.final_lr_fraction) * progress);
    if (loss_log) loss_log->push_back(loss.item());
  }
  return model;
}

void VcModel::Save(const std::string& path) const {
  BinaryWriter w;
  const VcConfig& c = config_;
  for (int v : {c.phoneme_embedding, c.phoneme_channels, c.encoder_kernel, c.prosody_hidden,
                c.prosody_channels, c.downsample, c.decoder_channels, c.decoder_kernel, mel_bands_}) {
    w.U32(static_cast<uint32_t>(v));
  }
  w.U64(c.seed);
  w.U32(static_cast<uint32_t>(vocabulary_.size()));
  for (const auto& s : vocabulary_) w.Str(s);
  w.U32(static_cast<uint32_t>(embeddings_.size()));
  for (const auto& [spk, v] : embeddings_) {
    w.Str(spk.value);
    w.Mat(Eigen::Map<const nn::Matrix>(v.data(), 1, static_cast<Eigen::Index>(v.size())));
  }
  store_.Write(w);
  WriteCheckpoint(path, {kKind, kVersion, HashBytes(w.bytes())}, w);
}

std::unique_ptr<VcModel> VcModel::Load(const std::string& path) {
  BinaryReader r = ReadCheckpoint(path, kKind, kVersion, nullptr);
  VcConfig c;
  int* fields[] = {&c.phoneme_embedding, &c.phoneme_channels, &c.encoder_kernel, &c.prosody_hidden,
                   &c.prosody_channels, &c.downsample, &c.decoder_channels, &c.decoder_kernel};
  for (int* f : fields) *f = static_cast<int>(r.U32());
  const int bands = static_cast<int>(r.U32());
  c.seed = r.U64();
  std::vector<std::string> vocab(r.U32());
  for (auto& s : vocab) s = r.Str();
  std::map<SpeakerId, std::vector<double>> emb;
  const uint32_t n = r.U32();
  for (uint32_t i = 0; i < n; ++i) {
    SpeakerId s{r.Str()};
    nn::Matrix m = r.Mat();
    emb[s] = std::vector<double>(m.data(), m.data() + m.size());
  }
  auto model = std::make_unique<VcModel>(c, std::move(vocab), bands, std::move(emb));
  model->store_.Read(r);
  return model;
}

}  // namespace vcaug::vc
