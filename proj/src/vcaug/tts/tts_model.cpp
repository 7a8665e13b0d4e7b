#include "vcaug/tts/tts_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vcaug/error.hpp"
#include "vcaug/nn/serialize.hpp"
#include "vcaug/util/config.hpp"
#include "vcaug/util/hash.hpp"
#include "vcaug/util/rng.hpp"

namespace vcaug::tts {

namespace {
constexpr const char* kKind = "tts_model";
constexpr uint32_t kVersion = 1;

nn::Matrix RowOf(const std::vector<double>& v) {
  return Eigen::Map<const nn::Matrix>(v.data(), 1, static_cast<Eigen::Index>(v.size()));
}

std::vector<double> ToVector(const nn::Matrix& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

std::vector<std::string> WithEos(const std::vector<std::string>& phonemes) {
  std::vector<std::string> out = phonemes;
  out.emplace_back(kEndOfSequence);
  return out;
}

// Stop target: 1 on the final frame only.
nn::Matrix StopLabels(Eigen::Index frames) {
  nn::Matrix labels = nn::Matrix::Zero(frames, 1);
  if (frames > 0) labels(frames - 1, 0) = 1.0;
  return labels;
}

void WriteTrainConfig(BinaryWriter& w, const TrainConfig& c) {
  w.U32(static_cast<uint32_t>(c.steps));
  w.U32(static_cast<uint32_t>(c.batch_size));
  w.F64(c.learning_rate);
  w.F64(c.final_lr_fraction);
  w.F64(c.kl_weight_max);
  w.F64(c.kl_anneal_fraction);
  w.U64(c.seed);
}

TrainConfig ReadTrainConfig(BinaryReader& r) {
  TrainConfig c;
  c.steps = static_cast<int>(r.U32());
  c.batch_size = static_cast<int>(r.U32());
  c.learning_rate = r.F64();
  c.final_lr_fraction = r.F64();
  c.kl_weight_max = r.F64();
  c.kl_anneal_fraction = r.F64();
  c.seed = r.U64();
  return c;
}

void WriteArch(BinaryWriter& w, const ArchConfig& a) {
  for (int v : {a.phoneme_embedding, a.encoder_channels, a.encoder_kernel, a.encoder_gru, a.z_dim,
                a.vae_channels, a.attention_dim, a.location_kernel, a.prenet_hidden, a.prenet_out,
                a.attention_rnn, a.decoder_rnn, a.frames_per_step}) {
    w.U32(static_cast<uint32_t>(v));
  }
  for (double v : {a.prenet_dropout, a.log_var_min, a.log_var_max, a.stop_threshold,
                   a.max_frames_factor}) {
    w.F64(v);
  }
  w.U64(a.seed);
}

ArchConfig ReadArch(BinaryReader& r) {
  ArchConfig a;
  int* ints[] = {&a.phoneme_embedding, &a.encoder_channels, &a.encoder_kernel, &a.encoder_gru,
                 &a.z_dim, &a.vae_channels, &a.attention_dim, &a.location_kernel,
                 &a.prenet_hidden, &a.prenet_out, &a.attention_rnn, &a.decoder_rnn,
                 &a.frames_per_step};
  for (int* f : ints) *f = static_cast<int>(r.U32());
  double* dbl[] = {&a.prenet_dropout, &a.log_var_min, &a.log_var_max, &a.stop_threshold,
                   &a.max_frames_factor};
  for (double* f : dbl) *f = r.F64();
  a.seed = r.U64();
  return a;
}

void ValidateArch(const ArchConfig& a) {
  for (int v : {a.phoneme_embedding, a.encoder_channels, a.encoder_gru, a.z_dim, a.vae_channels,
                a.attention_dim, a.prenet_hidden, a.prenet_out, a.attention_rnn, a.decoder_rnn,
                a.frames_per_step}) {
    if (v <= 0) throw ValidationError("tts: layer sizes must be positive");
  }
  if (a.encoder_kernel % 2 == 0 || a.location_kernel % 2 == 0) {
    throw ValidationError("tts: kernel sizes must be odd");
  }
  if (a.prenet_dropout < 0.0 || a.prenet_dropout >= 1.0) {
    throw ValidationError("tts: prenet dropout must be in [0, 1)");
  }
  if (!(a.log_var_min < a.log_var_max)) throw ValidationError("tts: empty log-variance range");
  if (a.max_frames_factor <= 0.0) throw ValidationError("tts: max_frames_factor must be positive");
}
}  // namespace

ArchConfig ArchConfig::FromConfig(const Config& cfg) {
  ArchConfig a;
  auto get_int = [&](const char* key, int& field) {
    field = static_cast<int>(cfg.GetInt(std::string("tts.") + key, field));
  };
  get_int("phoneme_embedding", a.phoneme_embedding);
  get_int("encoder_channels", a.encoder_channels);
  get_int("encoder_kernel", a.encoder_kernel);
  get_int("encoder_gru", a.encoder_gru);
  get_int("z_dim", a.z_dim);
  get_int("vae_channels", a.vae_channels);
  get_int("attention_dim", a.attention_dim);
  get_int("location_kernel", a.location_kernel);
  get_int("prenet_hidden", a.prenet_hidden);
  get_int("prenet_out", a.prenet_out);
  get_int("attention_rnn", a.attention_rnn);
  get_int("decoder_rnn", a.decoder_rnn);
  get_int("frames_per_step", a.frames_per_step);
  a.prenet_dropout = cfg.GetDouble("tts.prenet_dropout", a.prenet_dropout);
  a.log_var_min = cfg.GetDouble("tts.log_var_min", a.log_var_min);
  a.log_var_max = cfg.GetDouble("tts.log_var_max", a.log_var_max);
  a.stop_threshold = cfg.GetDouble("tts.stop_threshold", a.stop_threshold);
  a.max_frames_factor = cfg.GetDouble("tts.max_frames_factor", a.max_frames_factor);
  a.seed = static_cast<uint64_t>(cfg.GetInt("tts.seed", static_cast<int64_t>(a.seed)));
  ValidateArch(a);
  return a;
}

void TrainConfig::Validate() const {
  if (steps < 0) throw ValidationError("tts: steps must be non-negative");
  if (batch_size <= 0) throw ValidationError("tts: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ValidationError("tts: learning_rate must be positive");
  if (final_lr_fraction <= 0.0 || final_lr_fraction > 1.0) {
    throw ValidationError("tts: final_lr_fraction must be in (0, 1]");
  }
  if (kl_weight_max < 0.0) throw ValidationError("tts: kl_weight_max must be non-negative");
  if (kl_anneal_fraction < 0.0 || kl_anneal_fraction > 1.0) {
    throw ValidationError("tts: kl_anneal_fraction must be in [0, 1]");
  }
}

TrainConfig TrainConfig::FromConfig(const Config& cfg, const std::string& prefix,
                                    const TrainConfig& defaults) {
  TrainConfig c = defaults;
  c.steps = static_cast<int>(cfg.GetInt(prefix + ".steps", c.steps));
  c.batch_size = static_cast<int>(cfg.GetInt(prefix + ".batch_size", c.batch_size));
  c.learning_rate = cfg.GetDouble(prefix + ".learning_rate", c.learning_rate);
  c.final_lr_fraction = cfg.GetDouble(prefix + ".final_lr_fraction", c.final_lr_fraction);
  c.kl_weight_max = cfg.GetDouble(prefix + ".kl_weight_max", c.kl_weight_max);
  c.kl_anneal_fraction = cfg.GetDouble(prefix + ".kl_anneal_fraction", c.kl_anneal_fraction);
  c.seed = static_cast<uint64_t>(cfg.GetInt(prefix + ".seed", static_cast<int64_t>(c.seed)));
  c.Validate();
  return c;
}

TrainConfig TrainConfig::FullScale() {
  TrainConfig c;
  c.steps = 400000;
  c.batch_size = 32;
  return c;
}

TrainConfig TrainConfig::FullFineTune() {
  TrainConfig c = FullScale();
  c.steps = 4000;
  return c;
}

TrainConfig TrainConfig::DeskScale() { return TrainConfig{}; }

TrainConfig TrainConfig::DeskFineTune() {
  TrainConfig c;
  c.steps = 400;
  return c;
}

double KlLoss(const Posterior& p) {
  if (p.mu.size() != p.log_var.size()) throw ContractError("kl: mu/log_var size mismatch");
  double kl = 0.0;
  for (size_t i = 0; i < p.mu.size(); ++i) {
    kl += 0.5 * (std::exp(p.log_var[i]) + p.mu[i] * p.mu[i] - 1.0 - p.log_var[i]);
  }
  return kl;
}

LossBreakdown ComputeLoss(const ForwardResult& out, const corpus::Mel& target,
                          const Posterior& posterior, double kl_weight) {
  if (out.mel.rows() != target.rows() || out.mel.cols() != target.cols()) {
    throw ContractError("tts loss: prediction is " + std::to_string(out.mel.rows()) + "x" +
                        std::to_string(out.mel.cols()) + ", target is " +
                        std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
  }
  if (out.stop_logits.rows() != target.rows()) throw ContractError("tts loss: stop length mismatch");
  LossBreakdown b;
  b.l1 = (out.mel.cast<double>() - target.cast<double>()).cwiseAbs().mean();
  const nn::Matrix labels = StopLabels(target.rows());
  double ce = 0.0;
  for (Eigen::Index t = 0; t < labels.rows(); ++t) {
    const double x = out.stop_logits(t, 0);
    // log(1 + e^x) - y x, computed stably.
    ce += std::max(x, 0.0) - x * labels(t, 0) + std::log1p(std::exp(-std::abs(x)));
  }
  b.stop_ce = labels.rows() ? ce / static_cast<double>(labels.rows()) : 0.0;
  b.kl = KlLoss(posterior);
  b.total = b.l1 + b.stop_ce + kl_weight * b.kl;
  return b;
}

TtsModel::TtsModel(ArchConfig arch, std::vector<std::string> vocabulary, int mel_bands,
                   std::optional<std::map<SpeakerId, std::vector<double>>> speaker_embeddings)
    : arch_(arch),
      vocabulary_(std::move(vocabulary)),
      mel_bands_(mel_bands),
      speaker_embeddings_(std::move(speaker_embeddings)) {
  ValidateArch(arch_);
  if (mel_bands_ <= 0) throw ContractError("tts: mel_bands must be positive");
  if (vocabulary_.empty()) throw ContractError("tts: empty vocabulary");
  for (size_t i = 0; i < vocabulary_.size(); ++i) vocab_index_[vocabulary_[i]] = static_cast<int>(i);
  if (!vocab_index_.count(kEndOfSequence)) throw ContractError("tts: vocabulary lacks end symbol");
  if (speaker_embeddings_) {
    if (speaker_embeddings_->empty()) throw ContractError("tts: no speaker embeddings");
    speaker_dim_ = static_cast<int>(speaker_embeddings_->begin()->second.size());
    for (const auto& [s, v] : *speaker_embeddings_) {
      if (static_cast<int>(v.size()) != speaker_dim_) {
        throw ContractError("tts: inconsistent speaker embedding size for '" + s.value + "'");
      }
    }
  }

  Rng rng(DeriveSeed(arch_.seed, "tts.init"));
  const ArchConfig& a = arch_;
  embedding_ = nn::Embedding(store_, "embedding", static_cast<int>(vocabulary_.size()),
                             a.phoneme_embedding, rng);
  int in = a.phoneme_embedding;
  for (int i = 0; i < 3; ++i) {
    encoder_convs_.emplace_back(store_, "encoder_conv" + std::to_string(i), in, a.encoder_channels,
                                a.encoder_kernel, rng);
    in = a.encoder_channels;
  }
  encoder_fwd_ = nn::GruCell(store_, "encoder_fwd", a.encoder_channels, a.encoder_gru, rng);
  encoder_bwd_ = nn::GruCell(store_, "encoder_bwd", a.encoder_channels, a.encoder_gru, rng);
  vae_conv1_ = nn::Conv1d(store_, "vae_conv1", mel_bands_, a.vae_channels, 3, rng);
  vae_conv2_ = nn::Conv1d(store_, "vae_conv2", a.vae_channels, a.vae_channels, 3, rng);
  vae_out_ = nn::Linear(store_, "vae_out", a.vae_channels, 2 * a.z_dim, rng);

  const int memory_dim = 2 * a.encoder_gru + a.z_dim;
  prenet1_ = nn::Linear(store_, "prenet1", mel_bands_, a.prenet_hidden, rng);
  prenet2_ = nn::Linear(store_, "prenet2", a.prenet_hidden, a.prenet_out, rng);
  attention_rnn_ = nn::GruCell(store_, "attention_rnn", a.prenet_out + speaker_dim_ + memory_dim,
                               a.attention_rnn, rng);
  query_proj_ = nn::Linear(store_, "query_proj", a.attention_rnn, a.attention_dim, rng);
  memory_proj_ = nn::Linear(store_, "memory_proj", memory_dim, a.attention_dim, rng);
  location_proj_ = nn::Linear(store_, "location_proj", a.location_kernel, a.attention_dim, rng);
  energy_proj_ = nn::Linear(store_, "energy_proj", a.attention_dim, 1, rng);
  decoder_rnn_ = nn::GruCell(store_, "decoder_rnn", a.attention_rnn + memory_dim, a.decoder_rnn, rng);
  mel_proj_ = nn::Linear(store_, "mel_proj", a.decoder_rnn + memory_dim,
                         mel_bands_ * a.frames_per_step, rng);
  stop_proj_ = nn::Linear(store_, "stop_proj", a.decoder_rnn + memory_dim, a.frames_per_step, rng);
}

std::vector<int> TtsModel::Lookup(const std::vector<std::string>& phonemes) const {
  std::vector<int> ids;
  ids.reserve(phonemes.size());
  for (const auto& s : phonemes) {
    auto it = vocab_index_.find(s);
    if (it == vocab_index_.end()) throw VocabularyError("unknown phoneme symbol '" + s + "'");
    ids.push_back(it->second);
  }
  return ids;
}

std::optional<SpeakerEmbedding> TtsModel::SpeakerFor(const SpeakerId& s) const {
  if (!speaker_embeddings_) return std::nullopt;
  auto it = speaker_embeddings_->find(s);
  if (it == speaker_embeddings_->end()) {
    throw LookupError("no speaker embedding for '" + s.value + "'");
  }
  return SpeakerEmbedding{s, it->second};
}

void TtsModel::CheckSpeaker(const std::optional<SpeakerEmbedding>& spk) const {
  if (multi_speaker() && !spk) throw ContractError("tts: multi-speaker model needs a speaker");
  if (!multi_speaker() && spk) {
    throw ContractError("tts: single-speaker model takes no speaker embedding");
  }
  if (spk && static_cast<int>(spk->vector.size()) != speaker_dim_) {
    throw ContractError("tts: speaker embedding has dimension " +
                        std::to_string(spk->vector.size()) + ", expected " +
                        std::to_string(speaker_dim_));
  }
}

nn::Var TtsModel::SpeakerRow(nn::Tape& tape, const SpeakerEmbedding& spk) const {
  return tape.Constant(RowOf(spk.vector));
}

int TtsModel::max_frames() const {
  const double base = mean_training_frames_ > 0.0 ? mean_training_frames_ : 100.0;
  return std::max(arch_.frames_per_step,
                  static_cast<int>(std::ceil(base * arch_.max_frames_factor)));
}

nn::Var TtsModel::Encode(nn::Tape& tape, const std::vector<int>& ids, nn::Var z_row) const {
  nn::Var h = embedding_(tape, ids);
  for (const auto& conv : encoder_convs_) h = nn::Relu(conv(tape, h));
  const Eigen::Index n = h.rows();
  std::vector<nn::Var> fwd(static_cast<size_t>(n));
  std::vector<nn::Var> bwd(static_cast<size_t>(n));
  nn::Var state = encoder_fwd_.InitialState(tape);
  for (Eigen::Index t = 0; t < n; ++t) {
    state = encoder_fwd_(tape, nn::SliceRows(h, t, 1), state);
    fwd[static_cast<size_t>(t)] = state;
  }
  state = encoder_bwd_.InitialState(tape);
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    state = encoder_bwd_(tape, nn::SliceRows(h, t, 1), state);
    bwd[static_cast<size_t>(t)] = state;
  }
  nn::Var parts[] = {nn::ConcatRows(fwd), nn::ConcatRows(bwd), nn::BroadcastRows(z_row, n)};
  return nn::ConcatCols(parts);
}

void TtsModel::VaeForward(nn::Tape& tape, const nn::Matrix& mel, nn::Var* mu,
                          nn::Var* log_var) const {
  if (mel.cols() != mel_bands_) {
    throw ContractError("tts: expected " + std::to_string(mel_bands_) + " mel bands, got " +
                        std::to_string(mel.cols()));
  }
  if (mel.rows() == 0) throw ContractError("tts: empty reference mel");
  nn::Var x = tape.Constant(mel);
  nn::Var h = nn::Relu(vae_conv1_(tape, x));
  h = nn::Relu(vae_conv2_(tape, h));
  nn::Var out = vae_out_(tape, nn::MeanRows(h));
  *mu = nn::SliceCols(out, 0, arch_.z_dim);
  *log_var = nn::Clamp(nn::SliceCols(out, arch_.z_dim, arch_.z_dim), arch_.log_var_min,
                       arch_.log_var_max);
}

TtsModel::DecodeOut TtsModel::Decode(nn::Tape& tape, nn::Var memory,
                                     const std::optional<nn::Var>& spk_row,
                                     const nn::Matrix* teacher, int max_frames,
                                     Rng* dropout) const {
  const int r = arch_.frames_per_step;
  const Eigen::Index length = memory.rows();
  const Eigen::Index memory_dim = memory.cols();
  const int target_frames = teacher ? static_cast<int>(teacher->rows()) : max_frames;
  const int steps = (target_frames + r - 1) / r;

  nn::Var processed = memory_proj_(tape, memory);
  nn::Var h_att = attention_rnn_.InitialState(tape);
  nn::Var h_dec = decoder_rnn_.InitialState(tape);
  nn::Var context = tape.Constant(nn::Matrix::Zero(1, memory_dim));
  nn::Var cumulative = tape.Constant(nn::Matrix::Zero(1, length));
  nn::Matrix prev_frame = nn::Matrix::Zero(1, mel_bands_);

  std::vector<nn::Var> frames;
  std::vector<nn::Var> stops;
  std::vector<nn::Matrix> alignments;
  int emitted = -1;  // free-running: frame count once stop fires
  for (int i = 0; i < steps; ++i) {
    if (teacher && i > 0) prev_frame = teacher->row(static_cast<Eigen::Index>(i) * r - 1);
    nn::Var p = nn::Relu(prenet1_(tape, tape.Constant(prev_frame)));
    auto drop = [&](nn::Var v) {
      if (!dropout || arch_.prenet_dropout <= 0.0) return v;
      const double keep = 1.0 - arch_.prenet_dropout;
      nn::Matrix mask(v.rows(), v.cols());
      for (Eigen::Index j = 0; j < mask.size(); ++j) {
        mask.data()[j] = dropout->Uniform() < keep ? 1.0 / keep : 0.0;
      }
      return nn::Mul(v, tape.Constant(std::move(mask)));
    };
    p = drop(p);
    p = drop(nn::Relu(prenet2_(tape, p)));

    std::vector<nn::Var> att_in = {p};
    if (spk_row) att_in.push_back(*spk_row);
    att_in.push_back(context);
    h_att = attention_rnn_(tape, nn::ConcatCols(att_in), h_att);

    nn::Var query = nn::BroadcastRows(query_proj_(tape, h_att), length);
    nn::Var location =
        location_proj_(tape, nn::Unfold(nn::Transpose(cumulative), arch_.location_kernel));
    nn::Var energies = energy_proj_(tape, nn::Tanh(nn::Add(nn::Add(processed, query), location)));
    nn::Var alpha = nn::SoftmaxRows(nn::Transpose(energies));
    alignments.push_back(alpha.value());
    context = nn::MatMul(alpha, memory);
    cumulative = nn::Add(cumulative, alpha);

    nn::Var dec_in[] = {h_att, context};
    h_dec = decoder_rnn_(tape, nn::ConcatCols(dec_in), h_dec);
    nn::Var out_in_parts[] = {h_dec, context};
    nn::Var out_in = nn::ConcatCols(out_in_parts);
    nn::Var step_frames = nn::Reshape(mel_proj_(tape, out_in), r, mel_bands_);
    nn::Var step_stops = nn::Reshape(stop_proj_(tape, out_in), r, 1);
    frames.push_back(step_frames);
    stops.push_back(step_stops);

    if (!teacher) {
      prev_frame = step_frames.value().row(r - 1);
      for (int k = 0; k < r; ++k) {
        const double logit = step_stops.value()(k, 0);
        if (1.0 / (1.0 + std::exp(-logit)) > arch_.stop_threshold) {
          emitted = i * r + k + 1;
          break;
        }
      }
      if (emitted > 0) break;
    }
  }

  const int total = teacher ? target_frames
                            : (emitted > 0 ? emitted : std::min(max_frames, steps * r));
  DecodeOut out;
  out.mel = nn::SliceRows(nn::ConcatRows(frames), 0, total);
  out.stop_logits = nn::SliceRows(nn::ConcatRows(stops), 0, total);
  out.attention.resize(static_cast<Eigen::Index>(alignments.size()), length);
  for (size_t i = 0; i < alignments.size(); ++i) {
    out.attention.row(static_cast<Eigen::Index>(i)) = alignments[i];
  }
  return out;
}

Posterior TtsModel::VaeEncode(const corpus::Mel& mel) const {
  nn::Tape tape(false);
  nn::Var mu, lv;
  VaeForward(tape, speaker_id::MelToMatrix(mel), &mu, &lv);
  return {ToVector(mu.value()), ToVector(lv.value())};
}

ZVector TtsModel::CentroidZ(const corpus::DatasetManifest& recordings) const {
  if (recordings.empty()) throw ContractError("tts: centroid of an empty manifest");
  std::vector<double> sum(static_cast<size_t>(arch_.z_dim), 0.0);
  for (const auto& u : recordings.utterances()) {
    if (u->is_synthetic) {
      throw ContractError("tts: centroid must use real recordings, '" + u->utt_id +
                          "' is synthetic");
    }
    const Posterior p = VaeEncode(u->mel);
    for (size_t i = 0; i < sum.size(); ++i) sum[i] += p.mu[i];
  }
  for (double& v : sum) v /= static_cast<double>(recordings.size());
  return {sum};
}

ForwardResult TtsModel::Forward(const std::vector<std::string>& phonemes, const ZVector& z,
                                const std::optional<SpeakerEmbedding>& spk,
                                const corpus::Mel* teacher) const {
  if (phonemes.empty()) throw ContractError("tts: empty phoneme sequence");
  if (static_cast<int>(z.values.size()) != arch_.z_dim) {
    throw ContractError("tts: z has dimension " + std::to_string(z.values.size()) +
                        ", expected " + std::to_string(arch_.z_dim));
  }
  CheckSpeaker(spk);
  if (teacher && (teacher->cols() != mel_bands_ || teacher->rows() == 0)) {
    throw ContractError("tts: teacher mel has the wrong shape");
  }
  nn::Tape tape(false);
  const auto ids = Lookup(WithEos(phonemes));
  nn::Var memory = Encode(tape, ids, tape.Constant(RowOf(z.values)));
  std::optional<nn::Var> spk_row;
  if (spk) spk_row = SpeakerRow(tape, *spk);
  nn::Matrix teacher_m;
  if (teacher) teacher_m = speaker_id::MelToMatrix(*teacher);
  DecodeOut d = Decode(tape, memory, spk_row, teacher ? &teacher_m : nullptr, max_frames(), nullptr);
  ForwardResult out;
  out.mel = d.mel.value().cast<float>();
  out.stop_logits = d.stop_logits.value();
  out.attention = std::move(d.attention);
  return out;
}

corpus::Mel TtsModel::Synthesize(const std::vector<std::string>& phonemes, const ZVector& z,
                                 const std::optional<SpeakerEmbedding>& spk) const {
  return Forward(phonemes, z, spk, nullptr).mel;
}

double TtsModel::TeacherForcedL1(const std::vector<corpus::UtterancePtr>& utts) const {
  double total = 0.0;
  int64_t n = 0;
  for (const auto& u : utts) {
    const Posterior p = VaeEncode(u->mel);
    const ForwardResult out = Forward(u->phonemes, {p.mu}, SpeakerFor(u->speaker), &u->mel);
    total += (out.mel - u->mel).cwiseAbs().cast<double>().sum();
    n += u->mel.size();
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

nn::Var TtsModel::BatchLoss(nn::Tape& tape, const std::vector<const corpus::Utterance*>& batch,
                            double kl_weight, uint64_t noise_seed, LossBreakdown* parts) const {
  if (batch.empty()) throw ContractError("tts: empty batch");
  Rng noise(noise_seed);
  std::vector<nn::Var> totals;
  LossBreakdown sum;
  for (const corpus::Utterance* u : batch) {
    const nn::Matrix target = speaker_id::MelToMatrix(u->mel);
    nn::Var mu, lv;
    VaeForward(tape, target, &mu, &lv);
    nn::Matrix eps(1, arch_.z_dim);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = noise.Normal();
    nn::Var z = nn::Add(mu, nn::Mul(nn::Exp(nn::Scale(lv, 0.5)), tape.Constant(std::move(eps))));

    nn::Var memory = Encode(tape, Lookup(WithEos(u->phonemes)), z);
    std::optional<nn::Var> spk_row;
    const auto spk = SpeakerFor(u->speaker);
    if (spk) spk_row = SpeakerRow(tape, *spk);
    DecodeOut d = Decode(tape, memory, spk_row, &target, 0, &noise);

    nn::Var l1 = nn::L1Loss(d.mel, target);
    nn::Var stop = nn::BceWithLogits(d.stop_logits, StopLabels(target.rows()));
    nn::Var kl = nn::KlStandardNormal(mu, lv);
    totals.push_back(nn::Add(nn::Add(l1, stop), nn::Scale(kl, kl_weight)));
    sum.l1 += l1.item();
    sum.stop_ce += stop.item();
    sum.kl += kl.item();
  }
  nn::Var loss = nn::MeanAll(nn::ConcatRows(totals));
  if (parts) {
    const double n = static_cast<double>(batch.size());
    parts->l1 = sum.l1 / n;
    parts->stop_ce = sum.stop_ce / n;
    parts->kl = sum.kl / n;
    parts->total = loss.item();
  }
  return loss;
}

double TtsModel::KlWeightAt(int64_t step) const {
  const double anneal = base_config_.kl_anneal_fraction * static_cast<double>(base_steps_);
  if (anneal <= 0.0) return base_config_.kl_weight_max;
  return base_config_.kl_weight_max * std::min(1.0, static_cast<double>(step) / anneal);
}

double TtsModel::LrScaleAt(int64_t step) const {
  if (base_steps_ <= 0) return base_config_.final_lr_fraction;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(base_steps_));
  return 1.0 - (1.0 - base_config_.final_lr_fraction) * progress;
}

void TtsModel::RunSteps(const std::vector<corpus::UtterancePtr>& utts, const TrainConfig& cfg,
                        std::vector<StepLog>* log) {
  std::vector<corpus::UtterancePtr> sorted = utts;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a->utt_id < b->utt_id; });
  Rng rng(DeriveSeed(cfg.seed, "tts.batches@" + std::to_string(step_count_)));
  for (int s = 0; s < cfg.steps; ++s) {
    std::vector<const corpus::Utterance*> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      batch.push_back(sorted[static_cast<size_t>(rng.Below(sorted.size()))].get());
    }
    const uint64_t noise_seed = DeriveSeed(cfg.seed, "tts.noise@" + std::to_string(step_count_));
    nn::Tape tape;
    LossBreakdown parts;
    nn::Var loss = BatchLoss(tape, batch, KlWeightAt(step_count_), noise_seed, &parts);
    if (!std::isfinite(loss.item())) {
      throw ExecutionError("tts: non-finite loss at step " + std::to_string(step_count_));
    }
    tape.Backward(loss);
    optimizer_->Step(LrScaleAt(step_count_));
    if (log) log->push_back({step_count_, parts});
    ++step_count_;
  }
}

std::unique_ptr<TtsModel> TtsModel::Train(const corpus::TrainingCollection& data,
                                          const ArchConfig& arch, const TrainConfig& cfg,
                                          const speaker_id::SpeakerClassifier* classifier,
                                          std::vector<StepLog>* log) {
  cfg.Validate();
  if (data.utterances.empty()) throw ContractError("tts: no training data");
  const auto speakers = data.speakers();
  std::optional<std::map<SpeakerId, std::vector<double>>> embeddings;
  if (classifier) {
    embeddings.emplace();
    for (const auto& s : classifier->speakers()) (*embeddings)[s] = classifier->Embed(s).vector;
    for (const auto& s : speakers) classifier->Embed(s);  // every training speaker must be known
  } else if (speakers.size() != 1) {
    throw ContractError("tts: " + std::to_string(speakers.size()) +
                        " speakers in training data need a multi-speaker model");
  }

  std::set<std::string> symbols;
  int64_t frames = 0;
  for (const auto& u : data.utterances) {
    symbols.insert(u->phonemes.begin(), u->phonemes.end());
    frames += u->frames();
  }
  symbols.insert(kEndOfSequence);
  const int bands = static_cast<int>(data.utterances.front()->mel.cols());

  auto model = std::make_unique<TtsModel>(
      arch, std::vector<std::string>(symbols.begin(), symbols.end()), bands, std::move(embeddings));
  model->base_steps_ = cfg.steps;
  model->base_config_ = cfg;
  model->mean_training_frames_ =
      static_cast<double>(frames) / static_cast<double>(data.utterances.size());
  nn::AdamOptions opts;
  opts.learning_rate = cfg.learning_rate;
  model->optimizer_ = std::make_unique<nn::Adam>(model->store_, opts);
  model->RunSteps(data.utterances, cfg, log);
  return model;
}

void TtsModel::FineTune(const corpus::DatasetManifest& target, const TrainConfig& cfg,
                        std::vector<StepLog>* log) {
  if (target.synthetic()) {
    throw ContractError("tts: fine-tuning data must be real recordings, '" + target.name() +
                        "' is synthetic");
  }
  FineTune(target.utterances(), cfg, log);
}

void TtsModel::FineTune(const std::vector<corpus::UtterancePtr>& target, const TrainConfig& cfg,
                        std::vector<StepLog>* log) {
  cfg.Validate();
  if (target.empty()) throw ContractError("tts: empty fine-tuning data");
  for (const auto& u : target) {
    if (u->is_synthetic) {
      throw ContractError("tts: fine-tuning data must be real recordings, '" + u->utt_id +
                          "' is synthetic");
    }
    if (u->speaker != target.front()->speaker || u->style != target.front()->style) {
      throw ContractError("tts: fine-tuning data must be one speaker and one style");
    }
  }
  if (!optimizer_) throw ContractError("tts: fine-tuning needs a trained model");
  SpeakerFor(target.front()->speaker);  // unknown speaker fails before any update
  RunSteps(target, cfg, log);
}

void TtsModel::Save(const std::string& path) const {
  if (!optimizer_) throw ContractError("tts: cannot save an untrained model");
  BinaryWriter arch;
  WriteArch(arch, arch_);
  BinaryWriter w;
  w.Raw(arch.bytes());
  w.U32(static_cast<uint32_t>(mel_bands_));
  w.U32(static_cast<uint32_t>(vocabulary_.size()));
  for (const auto& s : vocabulary_) w.Str(s);
  w.U32(speaker_embeddings_ ? 1 : 0);
  if (speaker_embeddings_) {
    w.U32(static_cast<uint32_t>(speaker_embeddings_->size()));
    for (const auto& [spk, v] : *speaker_embeddings_) {
      w.Str(spk.value);
      w.Mat(RowOf(v));
    }
  }
  w.U64(static_cast<uint64_t>(step_count_));
  w.U64(static_cast<uint64_t>(base_steps_));
  WriteTrainConfig(w, base_config_);
  w.F64(mean_training_frames_);
  store_.Write(w);
  optimizer_->Write(w);
  WriteCheckpoint(path, {kKind, kVersion, HashBytes(arch.bytes())}, w);
}

std::unique_ptr<TtsModel> TtsModel::Load(const std::string& path) {
  BinaryReader r = ReadCheckpoint(path, kKind, kVersion, nullptr);
  const ArchConfig arch = ReadArch(r);
  const int bands = static_cast<int>(r.U32());
  std::vector<std::string> vocab(r.U32());
  for (auto& s : vocab) s = r.Str();
  std::optional<std::map<SpeakerId, std::vector<double>>> emb;
  if (r.U32() != 0) {
    emb.emplace();
    const uint32_t n = r.U32();
    for (uint32_t i = 0; i < n; ++i) {
      SpeakerId s{r.Str()};
      (*emb)[s] = ToVector(r.Mat());
    }
  }
  auto model = std::make_unique<TtsModel>(arch, std::move(vocab), bands, std::move(emb));
  model->step_count_ = static_cast<int64_t>(r.U64());
  model->base_steps_ = static_cast<int64_t>(r.U64());
  model->base_config_ = ReadTrainConfig(r);
  model->mean_training_frames_ = r.F64();
  model->store_.Read(r);
  nn::AdamOptions opts;
  opts.learning_rate = model->base_config_.learning_rate;
  model->optimizer_ = std::make_unique<nn::Adam>(model->store_, opts);
  model->optimizer_->Read(r);
  if (!r.AtEnd()) throw IoError(path + ": trailing bytes in checkpoint");
  return model;
}

}  // namespace vcaug::tts
