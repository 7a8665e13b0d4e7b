#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "vcaug/vcaug.h"

namespace fs = std::filesystem;

namespace {

const std::string kSource = VCAUG_SOURCE_DIR;

std::string Take(char* s) {
  std::string out = s ? s : "";
  vcaug_string_free(s);
  return out;
}

struct Dir {
  fs::path path;
  Dir() {
    static std::atomic<int> n{0};
    path = fs::temp_directory_path() /
           ("vcaug_capi_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Dir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

vcaug_config* TinyConfig() {
  vcaug_config* cfg = nullptr;
  REQUIRE(vcaug_config_new(&cfg) == VCAUG_OK);
  const char* kv[][2] = {
      {"corpus.utterances_per_pair", "4"}, {"corpus.mel_bands", "16"},
      {"spk.conv_channels", "4"},          {"spk.embedding_dim", "4"},
      {"spk.steps", "5"},                  {"vc.phoneme_embedding", "8"},
      {"vc.phoneme_channels", "8"},        {"vc.prosody_hidden", "4"},
      {"vc.prosody_channels", "2"},        {"vc.decoder_channels", "8"},
      {"vc.steps", "5"},                   {"tts.phoneme_embedding", "8"},
      {"tts.encoder_channels", "8"},       {"tts.encoder_gru", "4"},
      {"tts.z_dim", "2"},                  {"tts.vae_channels", "4"},
      {"tts.attention_dim", "8"},          {"tts.prenet_hidden", "8"},
      {"tts.prenet_out", "4"},             {"tts.attention_rnn", "8"},
      {"tts.decoder_rnn", "8"},            {"tts.train.steps", "2"},
      {"tts.train.batch_size", "2"},       {"tts.finetune.steps", "2"},
  };
  for (const auto& p : kv) REQUIRE(vcaug_config_set(cfg, p[0], p[1]) == VCAUG_OK);
  return cfg;
}

}  // namespace

TEST_CASE("status names, version, and argument checks") {
  CHECK(std::string(vcaug_version()).size() > 0);
  CHECK(std::string(vcaug_status_name(VCAUG_OK)) == "ok");
  CHECK(std::string(vcaug_status_name(VCAUG_RESOLUTION)).size() > 0);
  vcaug_manifest* m = nullptr;
  CHECK(vcaug_manifest_load(nullptr, &m) == VCAUG_INVALID_ARGUMENT);
  CHECK(std::string(vcaug_last_error()).find("NULL") != std::string::npos);
  CHECK(vcaug_config_new(nullptr) == VCAUG_INVALID_ARGUMENT);
  CHECK(vcaug_manifest_load("/nonexistent/x.manifest", &m) == VCAUG_IO);
  CHECK(m == nullptr);
  vcaug_string_free(nullptr);
  vcaug_manifest_free(nullptr);
  vcaug_tts_free(nullptr);
}

TEST_CASE("config precedence through the C API") {
  Dir dir;
  std::ofstream(dir / "c.conf") << "a=1\nb=2\n";
  vcaug_config* cfg = nullptr;
  REQUIRE(vcaug_config_new(&cfg) == VCAUG_OK);
  CHECK(vcaug_config_set(cfg, "a", "0") == VCAUG_OK);
  CHECK(vcaug_config_load(cfg, (dir / "c.conf").c_str()) == VCAUG_OK);
  CHECK(vcaug_config_set(cfg, "b", "3") == VCAUG_OK);
  char* text = nullptr;
  CHECK(vcaug_config_to_string(cfg, &text) == VCAUG_OK);
  CHECK(Take(text) == "a=1\nb=3\n");
  std::ofstream(dir / "bad.conf") << "oops\n";
  CHECK(vcaug_config_load(cfg, (dir / "bad.conf").c_str()) == VCAUG_PARSE);
  CHECK(vcaug_config_set(cfg, "", "x") == VCAUG_INVALID_ARGUMENT);
  vcaug_config_free(cfg);
}

TEST_CASE("recipes through the C API") {
  vcaug_recipe* r = nullptr;
  REQUIRE(vcaug_recipe_load((kSource + "/recipes/scenario1.recipe").c_str(), &r) == VCAUG_OK);
  CHECK(vcaug_recipe_statement_count(r) == 4);
  char* text = nullptr;
  REQUIRE(vcaug_recipe_format(r, &text) == VCAUG_OK);
  vcaug_recipe* again = nullptr;
  CHECK(vcaug_recipe_parse(text, &again) == VCAUG_OK);
  vcaug_string_free(text);
  CHECK(vcaug_recipe_statement_count(again) == 4);
  vcaug_recipe_free(again);

  vcaug_recipe* bad = nullptr;
  CHECK(vcaug_recipe_parse("x = VC(", &bad) == VCAUG_PARSE);
  CHECK(std::string(vcaug_last_error()).find("line 1") != std::string::npos);
  CHECK(vcaug_recipe_parse("f = FT(t, S(1,a,ALL))", &bad) == VCAUG_VALIDATION);
  CHECK(std::string(vcaug_last_error()).find("undefined name") != std::string::npos);
  CHECK(bad == nullptr);

  Dir dir;
  vcaug_config* cfg = TinyConfig();
  size_t n = 0;
  REQUIRE(vcaug_toy_corpus_write(cfg, 1, (dir / "corpus").c_str(), &n) == VCAUG_OK);
  CHECK(n == 4);
  char* plan = nullptr;
  REQUIRE(vcaug_recipe_plan(r, (dir / "corpus").c_str(), 1, &plan) == VCAUG_OK);
  const std::string p = Take(plan);
  CHECK(p.find("train_vc") != std::string::npos);
  CHECK(p.find("fine_tune") != std::string::npos);

  vcaug_recipe* ms = nullptr;
  REQUIRE(vcaug_recipe_load((kSource + "/recipes/multispeaker.recipe").c_str(), &ms) == VCAUG_OK);
  CHECK(vcaug_recipe_plan(ms, (dir / "corpus").c_str(), 1, &plan) == VCAUG_RESOLUTION);
  vcaug_recipe_free(ms);
  vcaug_recipe_free(r);
  vcaug_config_free(cfg);
}

TEST_CASE("MUSHRA evaluation through the C API") {
  const std::string path = kSource + "/fixtures/mushra_ablation.tsv";
  char *text = nullptr, *tsv = nullptr;
  REQUIRE(vcaug_eval_mushra(path.c_str(), "B,B+FT,B+VC,B+VC+FT", nullptr, "B", "B+VC+FT", 0.05,
                            &text, &tsv) == VCAUG_OK);
  const std::string t = Take(text);
  CHECK(t.find("B+VC+FT") != std::string::npos);
  CHECK(Take(tsv).find("ci95_halfwidth") != std::string::npos);
  CHECK(vcaug_eval_mushra(path.c_str(), nullptr, "loudness", "B", "B+VC+FT", 0.05, &text,
                          nullptr) == VCAUG_VALIDATION);
  CHECK(vcaug_eval_mushra(path.c_str(), nullptr, nullptr, "B", "Nope", 0.05, &text, nullptr) ==
        VCAUG_LOOKUP);
}

TEST_CASE("stage-by-stage pipeline through the C API") {
  Dir dir;
  vcaug_config* cfg = TinyConfig();
  REQUIRE(vcaug_toy_corpus_write(cfg, 2, (dir / "corpus").c_str(), nullptr) == VCAUG_OK);
  const std::string c = dir / "corpus";
  const std::string all[] = {c + "/S_1_neutral.manifest", c + "/S_1_news.manifest",
                             c + "/S_2_neutral.manifest", c + "/S_2_news.manifest"};
  const char* paths[] = {all[0].c_str(), all[1].c_str(), all[2].c_str(), all[3].c_str()};

  vcaug_vc* vc = nullptr;
  vcaug_classifier* clf = nullptr;
  REQUIRE(vcaug_vc_train(cfg, paths, 4, 1, (dir / "vc.log").c_str(), &vc, &clf) == VCAUG_OK);
  CHECK(fs::exists(dir / "vc.log"));

  vcaug_manifest* src = nullptr;
  REQUIRE(vcaug_manifest_load(paths[3], &src) == VCAUG_OK);
  CHECK(vcaug_manifest_size(src) == 4);
  CHECK(vcaug_manifest_minutes(src) > 0);
  vcaug_manifest* conv = nullptr;
  REQUIRE(vcaug_vc_convert(vc, src, "1", "conv", &conv) == VCAUG_OK);
  CHECK(vcaug_manifest_size(conv) == 4);
  CHECK(std::abs(vcaug_manifest_minutes(conv) - vcaug_manifest_minutes(src)) < 1e-12);
  vcaug_manifest* none = nullptr;
  CHECK(vcaug_vc_convert(vc, src, "9", "conv", &none) == VCAUG_LOOKUP);
  CHECK(none == nullptr);
  REQUIRE(vcaug_manifest_save(conv, (dir / "conv/conv.manifest").c_str()) == VCAUG_OK);

  const std::string conv_path = dir / "conv/conv.manifest";
  const char* tts_paths[] = {paths[0], paths[1], conv_path.c_str()};
  vcaug_tts* tts = nullptr;
  REQUIRE(vcaug_tts_train(cfg, tts_paths, 3, nullptr, 1, nullptr, &tts) == VCAUG_OK);
  CHECK(vcaug_tts_step_count(tts) == 2);

  // Fine-tuning on converted data is refused.
  CHECK(vcaug_tts_finetune(tts, cfg, conv, 1, nullptr) == VCAUG_CONTRACT);
  vcaug_manifest* target = nullptr;
  REQUIRE(vcaug_manifest_load(paths[1], &target) == VCAUG_OK);
  REQUIRE(vcaug_tts_finetune(tts, cfg, target, 1, nullptr) == VCAUG_OK);
  CHECK(vcaug_tts_step_count(tts) == 4);

  REQUIRE(vcaug_tts_save(tts, (dir / "ft.ckpt").c_str()) == VCAUG_OK);
  vcaug_tts* loaded = nullptr;
  REQUIRE(vcaug_tts_load((dir / "ft.ckpt").c_str(), &loaded) == VCAUG_OK);
  vcaug_tts* junk = nullptr;
  CHECK(vcaug_tts_load((dir / "vc.log").c_str(), &junk) != VCAUG_OK);
  CHECK(junk == nullptr);

  size_t frames = 0;
  REQUIRE(vcaug_tts_synthesize(loaded, "a e i", target, nullptr, (dir / "o.mel").c_str(),
                               (dir / "o.wav").c_str(), &frames) == VCAUG_OK);
  CHECK(frames > 0);
  CHECK(fs::exists(dir / "o.wav"));
  CHECK(vcaug_tts_synthesize(loaded, "a e i", target, "1", (dir / "o.mel").c_str(), nullptr,
                             &frames) == VCAUG_CONTRACT);

  // Every test utterance is also in the reference: nothing is held out.
  vcaug_manifest* test = nullptr;
  REQUIRE(vcaug_manifest_load(paths[1], &test) == VCAUG_OK);
  const char* names[] = {"B", "B+VC+FT"};
  const vcaug_tts* models[] = {tts, loaded};
  char* report = nullptr;
  CHECK(vcaug_eval_objective(names, models, 2, target, test, clf, &report) == VCAUG_CONTRACT);

  vcaug_vc_free(vc);
  vcaug_classifier_free(clf);
  vcaug_manifest_free(src);
  vcaug_manifest_free(conv);
  vcaug_manifest_free(target);
  vcaug_manifest_free(test);
  vcaug_tts_free(tts);
  vcaug_tts_free(loaded);
  vcaug_config_free(cfg);
}

TEST_CASE("recipe execution through the C API") {
  Dir dir;
  vcaug_config* cfg = TinyConfig();
  // Enough news utterances that some stay outside the 0.1 min FT budget.
  REQUIRE(vcaug_config_set(cfg, "corpus.utterances_per_pair", "30") == VCAUG_OK);
  REQUIRE(vcaug_toy_corpus_write(cfg, 3, (dir / "corpus").c_str(), nullptr) == VCAUG_OK);
  vcaug_recipe* r = nullptr;
  REQUIRE(vcaug_recipe_load((kSource + "/recipes/scenario1_desk.recipe").c_str(), &r) == VCAUG_OK);
  int events = 0;
  char* index = nullptr;
  REQUIRE(vcaug_recipe_execute(
              r, (dir / "corpus").c_str(), cfg, 1, (dir / "ws").c_str(),
              [](const char*, void* user) { ++*static_cast<int*>(user); }, &events, &index) == VCAUG_OK);
  const std::string idx = Take(index);
  CHECK(events >= 4);
  CHECK(idx.find("ft_checkpoint\tft1\tmodels/") != std::string::npos);

  vcaug_recipe* b = nullptr;
  REQUIRE(vcaug_recipe_load((kSource + "/recipes/baseline_desk.recipe").c_str(), &b) == VCAUG_OK);
  REQUIRE(vcaug_recipe_execute(b, (dir / "corpus").c_str(), cfg, 1, (dir / "ws").c_str(), nullptr,
                               nullptr, nullptr) == VCAUG_OK);

  vcaug_tts *base = nullptr, *ft = nullptr;
  REQUIRE(vcaug_tts_load((dir / "ws/models/b.tts.ckpt").c_str(), &base) == VCAUG_OK);
  REQUIRE(vcaug_tts_load((dir / "ws/models/ft1.ft.ckpt").c_str(), &ft) == VCAUG_OK);
  vcaug_manifest *ref = nullptr, *test = nullptr;
  REQUIRE(vcaug_manifest_load((dir / "ws/data/ft1/ft1.target.manifest").c_str(), &ref) == VCAUG_OK);
  REQUIRE(vcaug_manifest_load((dir / "corpus/S_1_news.manifest").c_str(), &test) == VCAUG_OK);
  const char* names[] = {"B", "B+VC+FT"};
  const vcaug_tts* models[] = {base, ft};
  char* report = nullptr;
  REQUIRE(vcaug_eval_objective(names, models, 2, ref, test, nullptr, &report) == VCAUG_OK);
  const std::string rep = Take(report);
  CHECK(rep.find("\nB\t") != std::string::npos);
  CHECK(rep.find("\nB+VC+FT\t") != std::string::npos);

  vcaug_tts_free(base);
  vcaug_tts_free(ft);
  vcaug_manifest_free(ref);
  vcaug_manifest_free(test);
  vcaug_recipe_free(r);
  vcaug_recipe_free(b);
  vcaug_config_free(cfg);
}
