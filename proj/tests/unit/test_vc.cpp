#include <doctest.h>

#include "helpers.hpp"
#include "vcaug/error.hpp"
#include "vcaug/speaker_id/classifier.hpp"
#include "vcaug/vc/vc_model.hpp"

using namespace vcaug;
using namespace vcaug::vc;
using vcaug::testing::TempDir;

namespace {

constexpr int kBands = 16;

VcConfig SmallConfig() {
  VcConfig c;
  c.phoneme_embedding = 12;
  c.phoneme_channels = 16;
  c.prosody_hidden = 8;
  c.prosody_channels = 3;
  c.downsample = 4;
  c.decoder_channels = 16;
  c.steps = 150;
  c.seed = 2;
  return c;
}

struct Fixture {
  std::vector<corpus::DatasetManifest> corpus = vcaug::testing::SmallCorpus(6, 5, kBands);
  corpus::TrainingCollection data =
      corpus::ConcatManifests(std::span<const corpus::DatasetManifest>(corpus));
  std::unique_ptr<speaker_id::SpeakerClassifier> clf;
  std::unique_ptr<VcModel> vc;
  std::vector<double> log;

  Fixture() {
    speaker_id::ClassifierConfig cc;
    cc.conv_channels = 8;
    cc.embedding_dim = 8;
    cc.steps = 100;
    clf = speaker_id::SpeakerClassifier::Train(data, cc);
    vc = VcModel::Train(data, *clf, SmallConfig(), &log);
  }
};

Fixture& Shared() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("bottleneck constraints are validated") {
  VcConfig c = SmallConfig();
  CHECK_NOTHROW(c.Validate(kBands));
  c.prosody_channels = kBands;
  CHECK_THROWS_AS(c.Validate(kBands), ValidationError);
  c = SmallConfig();
  c.downsample = 1;
  CHECK_THROWS_AS(c.Validate(kBands), ValidationError);
}

TEST_CASE("reconstruction loss gradient matches finite differences") {
  auto& f = Shared();
  auto cfg = SmallConfig();
  std::map<corpus::SpeakerId, std::vector<double>> emb;
  for (const auto& s : f.clf->speakers()) emb[s] = f.clf->Embed(s).vector;
  VcModel model(cfg, corpus::ToyPhonemeInventory(), kBands, emb);
  std::vector<const corpus::Utterance*> batch{f.data.utterances[0].get(), f.data.utterances[7].get()};
  auto loss = [&] {
    nn::Tape tape(false);
    return model.BatchLoss(tape, batch).item();
  };
  auto backward = [&] {
    nn::Tape tape;
    tape.Backward(model.BatchLoss(tape, batch));
  };
  // L1 has kinks; a small step keeps finite differences on one side.
  CHECK(vcaug::testing::MaxGradientError(model.parameters(), loss, backward, 1e-6, 1e-3, 5) < 1e-3);
}

TEST_CASE("training reduces reconstruction loss") {
  auto& f = Shared();
  REQUIRE(f.log.size() == 150);
  double head = 0, tail = 0;
  for (int i = 0; i < 10; ++i) {
    head += f.log[i];
    tail += f.log[f.log.size() - 1 - i];
  }
  CHECK(tail < 0.7 * head);
}

TEST_CASE("conversion preserves length and labels and sets the target") {
  auto& f = Shared();
  const corpus::Utterance& u = *f.corpus[3].utterances()[0];  // speaker 2
  const corpus::Utterance c = f.vc->Convert(u, {"1"});
  CHECK(c.frames() == u.frames());
  CHECK(c.phonemes == u.phonemes);
  CHECK(c.durations == u.durations);
  CHECK(c.speaker.value == "1");
  CHECK(c.style == u.style);
  CHECK(c.is_synthetic);
  REQUIRE(c.source_speaker.has_value());
  CHECK(c.source_speaker->value == "2");
  CHECK_NOTHROW(c.Validate());
}

TEST_CASE("self-conversion stays in the reconstruction regime") {
  auto& f = Shared();
  double sum = 0, bins = 0;
  for (const auto& u : f.data.utterances) {
    const corpus::Utterance c = f.vc->Convert(*u, u->speaker);
    sum += (c.mel - u->mel).cwiseAbs().cast<double>().sum();
    bins += static_cast<double>(u->mel.size());
  }
  const double train_loss = f.log.back();
  CHECK(sum / bins < 2.0 * train_loss + 1e-6);
  // Pooled over every bin of every utterance.
  CHECK(f.vc->ReconstructionL1(f.data.utterances) == doctest::Approx(sum / bins).epsilon(1e-5));
}

TEST_CASE("speaker conditioning changes the output") {
  auto& f = Shared();
  const corpus::Utterance& u = *f.data.utterances[0];
  const corpus::Mel a = f.vc->Convert(u, {"1"}).mel;
  const corpus::Mel b = f.vc->Convert(u, {"2"}).mel;
  CHECK((a - b).cwiseAbs().mean() > 1e-4);
}

TEST_CASE("batch conversion produces an S* manifest") {
  auto& f = Shared();
  const auto& src = f.corpus[3];  // S_2_news
  const auto out = f.vc->BatchConvert(src, {"1"}, "conv");
  CHECK(out.name() == "conv");
  CHECK(out.synthetic());
  CHECK(out.speaker().value == "1");
  CHECK(out.style() == src.style());
  CHECK(out.size() == src.size());
  CHECK(out.hours() == doctest::Approx(src.hours()));
  // Deterministic: no cross-utterance state.
  const auto again = f.vc->BatchConvert(src, {"1"}, "conv");
  for (size_t i = 0; i < out.size(); ++i) {
    CHECK(out.utterances()[i]->mel == again.utterances()[i]->mel);
  }
}

TEST_CASE("conversion errors") {
  auto& f = Shared();
  corpus::Utterance u = *f.data.utterances[0];
  CHECK_THROWS_AS(f.vc->Convert(u, {"7"}), LookupError);
  u.phonemes[0] = "??";
  CHECK_THROWS_AS(f.vc->Convert(u, {"1"}), VocabularyError);
  corpus::Utterance wide = *f.data.utterances[0];
  wide.mel = corpus::Mel::Zero(wide.frames(), kBands + 1);
  CHECK_THROWS_AS(f.vc->Convert(wide, {"1"}), ContractError);
}

TEST_CASE("VC checkpoint round-trip") {
  auto& f = Shared();
  TempDir dir("vc");
  f.vc->Save(dir / "vc.ckpt");
  auto back = VcModel::Load(dir / "vc.ckpt");
  const corpus::Utterance& u = *f.data.utterances[2];
  CHECK(back->Convert(u, {"2"}).mel == f.vc->Convert(u, {"2"}).mel);
  CHECK(back->HasSpeaker({"1"}));
  CHECK_THROWS_AS(speaker_id::SpeakerClassifier::Load(dir / "vc.ckpt"), ValidationError);
}
