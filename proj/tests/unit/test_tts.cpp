#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "vcaug/error.hpp"
#include "vcaug/speaker_id/classifier.hpp"
#include "vcaug/tts/tts_model.hpp"
#include "vcaug/tts/vocoder.hpp"
#include "vcaug/util/config.hpp"
#include "vcaug/util/rng.hpp"
#include "vcaug/util/strings.hpp"

using namespace vcaug;
using namespace vcaug::tts;
using vcaug::testing::TempDir;

namespace {

constexpr int kBands = 16;

ArchConfig TinyArch() {
  ArchConfig a;
  a.phoneme_embedding = 8;
  a.encoder_channels = 8;
  a.encoder_gru = 4;
  a.z_dim = 3;
  a.vae_channels = 4;
  a.attention_dim = 8;
  a.prenet_hidden = 8;
  a.prenet_out = 4;
  a.attention_rnn = 8;
  a.decoder_rnn = 8;
  return a;
}

TrainConfig Short(int steps) {
  TrainConfig c;
  c.steps = steps;
  c.batch_size = 2;
  c.seed = 3;
  return c;
}

std::vector<std::string> Vocab() {
  auto v = corpus::ToyPhonemeInventory();
  v.push_back(kEndOfSequence);
  return v;
}

struct Fixture {
  std::vector<corpus::DatasetManifest> corpus = vcaug::testing::SmallCorpus(4, 8, kBands);
  // S_1_neutral + S_1_news: one speaker, two styles.
  corpus::TrainingCollection data = corpus::ConcatManifests(
      std::span<const corpus::DatasetManifest>(corpus.data(), 2));
};

Fixture& Shared() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("KL loss matches the matrix closed form") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 1 + static_cast<int>(rng.Below(6));
    Posterior p;
    Eigen::VectorXd mu(k);
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
      p.mu.push_back(rng.Normal());
      p.log_var.push_back(rng.Uniform(-3, 2));
      mu(i) = p.mu.back();
      sigma(i, i) = std::exp(p.log_var.back());
    }
    // 0.5 (tr S + mu'mu - k - log det S)
    const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double expect = 0.5 * (sigma.trace() + mu.squaredNorm() - k - logdet);
    CHECK(KlLoss(p) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(KlLoss({{0, 0}, {0, 0}}) == 0.0);
  CHECK_THROWS_AS(KlLoss({{0}, {0, 0}}), ContractError);
}

TEST_CASE("loss decomposition on hand-built tensors") {
  ForwardResult out;
  out.mel = corpus::Mel(3, 2);
  out.mel << 0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f;
  corpus::Mel target = corpus::Mel::Zero(3, 2);
  out.stop_logits = nn::Matrix(3, 1);
  out.stop_logits << -1.0, 0.5, 2.0;
  Posterior post{{0.5}, {0.0}};
  const LossBreakdown b = ComputeLoss(out, target, post, 0.1);

  CHECK(b.l1 == doctest::Approx((0.1 + 0.2 + 0.3 + 0.4 + 0.5 + 0.6) / 6).epsilon(1e-6));
  auto sig = [](double x) { return 1 / (1 + std::exp(-x)); };
  // Stop label is 1 on the last frame only.
  const double ce = -(std::log(1 - sig(-1.0)) + std::log(1 - sig(0.5)) + std::log(sig(2.0))) / 3;
  CHECK(b.stop_ce == doctest::Approx(ce).epsilon(1e-12));
  CHECK(b.kl == doctest::Approx(0.125));
  CHECK(b.total == doctest::Approx(b.l1 + b.stop_ce + 0.1 * 0.125));

  corpus::Mel wrong = corpus::Mel::Zero(4, 2);
  CHECK_THROWS_AS(ComputeLoss(out, wrong, post, 0.1), ContractError);
}

TEST_CASE("train config validation and presets") {
  CHECK_NOTHROW(TrainConfig{}.Validate());
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.Validate(), ValidationError);
  c = TrainConfig{};
  c.final_lr_fraction = 0.0;
  CHECK_THROWS_AS(c.Validate(), ValidationError);
  // Full scale: 400k steps at batch 32, fine-tuning 4k more.
  CHECK(TrainConfig::FullScale().steps == 400000);
  CHECK(TrainConfig::FullScale().batch_size == 32);
  CHECK(TrainConfig::FullFineTune().steps == 4000);
  CHECK(TrainConfig::DeskScale().steps == 2000);
  CHECK(TrainConfig::DeskFineTune().steps == 400);

  Config cfg = Config::Parse("x.steps=12\nx.learning_rate=0.5\n");
  const TrainConfig t = TrainConfig::FromConfig(cfg, "x", TrainConfig::FullScale());
  CHECK(t.steps == 12);
  CHECK(t.learning_rate == 0.5);
  CHECK(t.batch_size == 32);
}

TEST_CASE("batch loss gradient matches finite differences") {
  auto& f = Shared();
  TtsModel model(TinyArch(), Vocab(), kBands, std::nullopt);
  // Zero-initialised biases put the first prenet ReLU exactly on its kink
  // (the go frame is all zeros); move every parameter off it.
  Rng jitter(12);
  for (nn::Parameter* p : model.parameters().All()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += 0.05 * jitter.Normal();
  }
  std::vector<const corpus::Utterance*> batch{f.data.utterances[0].get(), f.data.utterances[5].get()};
  auto loss = [&] {
    nn::Tape tape(false);
    return model.BatchLoss(tape, batch, 0.3, 11, nullptr).item();
  };
  auto backward = [&] {
    nn::Tape tape;
    tape.Backward(model.BatchLoss(tape, batch, 0.3, 11, nullptr));
  };
  CHECK(vcaug::testing::MaxGradientError(model.parameters(), loss, backward, 1e-6, 1e-3, 7) < 1e-3);
}

TEST_CASE("attention rows are distributions and outputs have the target length") {
  auto& f = Shared();
  TtsModel model(TinyArch(), Vocab(), kBands, std::nullopt);
  const corpus::Utterance& u = *f.data.utterances[1];
  const Posterior p = model.VaeEncode(u.mel);
  const ForwardResult out = model.Forward(u.phonemes, {p.mu}, std::nullopt, &u.mel);
  CHECK(out.mel.rows() == u.mel.rows());
  CHECK(out.mel.cols() == kBands);
  CHECK(out.stop_logits.rows() == u.mel.rows());
  // One step per 2 frames; phoneme inputs plus the end symbol.
  CHECK(out.attention.rows() == (u.frames() + 1) / 2);
  CHECK(out.attention.cols() == static_cast<Eigen::Index>(u.phonemes.size()) + 1);
  for (Eigen::Index r = 0; r < out.attention.rows(); ++r) {
    CHECK(std::abs(out.attention.row(r).sum() - 1.0) < 1e-9);
    CHECK(out.attention.row(r).minCoeff() >= 0.0);
  }
  // Free-running output is capped.
  const corpus::Mel free = model.Synthesize(u.phonemes, {p.mu}, std::nullopt);
  CHECK(free.rows() >= 1);
  CHECK(free.rows() <= model.max_frames());
}

TEST_CASE("centroid z is the mean posterior mean") {
  auto& f = Shared();
  TtsModel model(TinyArch(), Vocab(), kBands, std::nullopt);
  const auto& m = f.corpus[1];
  const ZVector c = model.CentroidZ(m);
  std::vector<double> mean(3, 0.0);
  for (const auto& u : m.utterances()) {
    const Posterior p = model.VaeEncode(u->mel);
    for (int i = 0; i < 3; ++i) mean[i] += p.mu[i] / m.size();
  }
  for (int i = 0; i < 3; ++i) CHECK(c.values[i] == doctest::Approx(mean[i]));
  // A single-utterance manifest gives that utterance's posterior mean.
  corpus::DatasetManifest one("one", m.speaker(), m.style(), false, {m.utterances()[0]});
  CHECK(model.CentroidZ(one).values == model.VaeEncode(m.utterances()[0]->mel).mu);
}

TEST_CASE("training, fine-tuning guard and exact resume") {
  auto& f = Shared();
  std::vector<StepLog> log;
  auto model = TtsModel::Train(f.data, TinyArch(), Short(30), nullptr, &log);
  CHECK(log.size() == 30);
  CHECK(model->step_count() == 30);
  CHECK_FALSE(model->multi_speaker());
  for (const auto& l : log) CHECK(std::isfinite(l.loss.total));

  // Synthetic data is refused before any update.
  auto synth = std::make_shared<corpus::Utterance>(*f.corpus[1].utterances()[0]);
  synth->utt_id = "synthetic";
  synth->is_synthetic = true;
  synth->source_speaker = corpus::SpeakerId{"2"};
  corpus::DatasetManifest star("S*", synth->speaker, synth->style, true, {synth});
  CHECK_THROWS_AS(model->FineTune(star, Short(5)), ContractError);
  CHECK_THROWS_AS(model->FineTune(std::vector<corpus::UtterancePtr>{synth}, Short(5)), ContractError);
  // Mixed styles are refused as well.
  CHECK_THROWS_AS(model->FineTune(f.data.utterances, Short(5)), ContractError);
  CHECK(model->step_count() == 30);

  TempDir dir("tts");
  model->Save(dir / "m.ckpt");
  auto copy = TtsModel::Load(dir / "m.ckpt");
  CHECK(copy->step_count() == 30);
  const corpus::Utterance& u = *f.data.utterances[2];
  const ZVector z{model->VaeEncode(u.mel).mu};
  CHECK(copy->Forward(u.phonemes, z, std::nullopt, &u.mel).mel ==
        model->Forward(u.phonemes, z, std::nullopt, &u.mel).mel);

  // Fine-tuning the original and the reloaded copy gives identical models.
  model->FineTune(f.corpus[1], Short(6));
  copy->FineTune(f.corpus[1], Short(6));
  CHECK(model->step_count() == 36);
  CHECK(copy->Forward(u.phonemes, z, std::nullopt, &u.mel).mel ==
        model->Forward(u.phonemes, z, std::nullopt, &u.mel).mel);
}

TEST_CASE("speaker conditioning contracts") {
  auto& f = Shared();
  // Two speakers without a classifier is a contract error.
  auto two = corpus::ConcatManifests(std::span<const corpus::DatasetManifest>(f.corpus));
  CHECK_THROWS_AS(TtsModel::Train(two, TinyArch(), Short(1), nullptr), ContractError);

  speaker_id::ClassifierConfig cc;
  cc.conv_channels = 4;
  cc.embedding_dim = 4;
  cc.steps = 5;
  auto clf = speaker_id::SpeakerClassifier::Train(two, cc);
  auto multi = TtsModel::Train(two, TinyArch(), Short(2), clf.get());
  CHECK(multi->multi_speaker());
  const corpus::Utterance& u = *two.utterances[0];
  const ZVector z{multi->VaeEncode(u.mel).mu};
  CHECK_THROWS_AS(multi->Synthesize(u.phonemes, z, std::nullopt), ContractError);
  CHECK_NOTHROW(multi->Synthesize(u.phonemes, z, multi->SpeakerFor({"2"})));
  CHECK_THROWS_AS(multi->SpeakerFor({"5"}), LookupError);

  TtsModel single(TinyArch(), Vocab(), kBands, std::nullopt);
  CHECK_THROWS_AS(single.Synthesize(u.phonemes, z, multi->SpeakerFor({"1"})), ContractError);
  CHECK_THROWS_AS(single.Synthesize({"??"}, z, std::nullopt), VocabularyError);
  CHECK_THROWS_AS(single.Synthesize(u.phonemes, {{1.0}}, std::nullopt), ContractError);
}

TEST_CASE("vocoder output length and WAV container") {
  corpus::FeatureConfig fc;
  fc.mel_bands = kBands;
  corpus::Mel mel = corpus::Mel::Constant(20, kBands, 0.6f);
  const auto wav = MelToWaveform(mel, fc, {4, 4.0});
  // 20 frames of 200 samples (12.5 ms at 16 kHz).
  CHECK(wav.size() == 20 * 200);
  float peak = 0;
  for (float s : wav) {
    CHECK(std::isfinite(s));
    peak = std::max(peak, std::abs(s));
  }
  CHECK(peak <= 0.9f + 1e-6f);

  TempDir dir("wav");
  WriteWav(dir / "a.wav", wav, 16000);
  const std::string bytes = ReadFile(dir / "a.wav");
  CHECK(bytes.size() == 44 + 2 * wav.size());
  CHECK(bytes.substr(0, 4) == "RIFF");
  CHECK(bytes.substr(8, 4) == "WAVE");
}
