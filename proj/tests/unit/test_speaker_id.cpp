#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "vcaug/error.hpp"
#include "vcaug/speaker_id/classifier.hpp"

using namespace vcaug;
using namespace vcaug::speaker_id;
using vcaug::testing::TempDir;

namespace {

ClassifierConfig SmallConfig() {
  ClassifierConfig c;
  c.conv_channels = 8;
  c.embedding_dim = 12;
  c.steps = 150;
  c.seed = 4;
  return c;
}

corpus::TrainingCollection Data(int per_pair = 6) {
  static std::vector<corpus::DatasetManifest> corpus;
  corpus = vcaug::testing::SmallCorpus(per_pair, 3, 16);
  return corpus::ConcatManifests(std::span<const corpus::DatasetManifest>(corpus));
}

}  // namespace

TEST_CASE("classifier loss gradient matches finite differences") {
  const auto data = Data(2);
  SpeakerClassifier clf(SmallConfig(), data.speakers(), 16);
  std::vector<const corpus::Mel*> mels{&data.utterances[0]->mel, &data.utterances.back()->mel};
  const std::vector<int> labels{clf.SpeakerIndex(data.utterances[0]->speaker),
                                clf.SpeakerIndex(data.utterances.back()->speaker)};
  auto loss = [&] {
    nn::Tape tape(false);
    return clf.BatchLoss(tape, mels, labels).item();
  };
  auto backward = [&] {
    nn::Tape tape;
    tape.Backward(clf.BatchLoss(tape, mels, labels));
  };
  CHECK(vcaug::testing::MaxGradientError(clf.parameters(), loss, backward, 1e-5, 1e-3, 3) < 1e-3);
}

TEST_CASE("trained classifier separates toy speakers; embeddings are unit norm") {
  const auto data = Data();
  ClassifierReport report;
  auto clf = SpeakerClassifier::Train(data, SmallConfig(), &report);
  CHECK(report.steps_run > 0);
  CHECK(report.train_accuracy >= 0.9);
  for (const auto& u : data.utterances) {
    const auto p = clf->Classify(u->mel);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
  }
  for (const auto& s : clf->speakers()) {
    const auto e = clf->Embed(s);
    CHECK(e.speaker == s);
    CHECK(e.vector.size() == 12);
    double n2 = 0;
    for (double v : e.vector) n2 += v * v;
    CHECK(std::sqrt(n2) == doctest::Approx(1.0));
  }
  // The embedding is the normalised mean of the utterance embeddings.
  const corpus::SpeakerId s1{"1"};
  std::vector<double> mean(12, 0.0);
  for (const auto& u : data.utterances) {
    if (u->speaker != s1) continue;
    const auto v = clf->UtteranceEmbedding(u->mel);
    for (int i = 0; i < 12; ++i) mean[i] += v[i];
  }
  double n2 = 0;
  for (double v : mean) n2 += v * v;
  const auto e = clf->Embed(s1);
  for (int i = 0; i < 12; ++i) CHECK(e.vector[i] == doctest::Approx(mean[i] / std::sqrt(n2)));
}

TEST_CASE("classifier checkpoint round-trip and errors") {
  const auto data = Data(3);
  auto cfg = SmallConfig();
  cfg.steps = 20;
  auto clf = SpeakerClassifier::Train(data, cfg);
  TempDir dir("clf");
  clf->Save(dir / "c.ckpt");
  auto back = SpeakerClassifier::Load(dir / "c.ckpt");
  CHECK(back->speakers() == clf->speakers());
  CHECK(back->Classify(data.utterances[0]->mel) == clf->Classify(data.utterances[0]->mel));
  CHECK(back->Embed({"2"}).vector == clf->Embed({"2"}).vector);
  CHECK(back->ExportEmbeddings() == clf->ExportEmbeddings());

  CHECK_THROWS_AS(clf->Embed({"9"}), LookupError);
  CHECK(clf->SpeakerIndex({"9"}) == -1);
  CHECK_THROWS_AS(clf->Classify(corpus::Mel::Zero(5, 20)), ContractError);

  corpus::TrainingCollection one;
  for (const auto& u : data.utterances) {
    if (u->speaker.value == "1") one.utterances.push_back(u);
  }
  CHECK_THROWS_AS(SpeakerClassifier::Train(one, cfg), ContractError);
}
