#include <doctest.h>

#include "helpers.hpp"
#include "random_program.hpp"
#include "vcaug/error.hpp"
#include "vcaug/recipe/executor.hpp"
#include "vcaug/recipe/program.hpp"

using namespace vcaug;
using namespace vcaug::recipe;

namespace {

const std::string kRecipes = std::string(VCAUG_SOURCE_DIR) + "/recipes/";

DatasetRef Ref(const std::string& spk, const std::string& style, std::optional<double> h,
               bool synthetic = false) {
  return {synthetic, {spk}, {style}, h};
}

template <typename T>
const T& As(const Program& p, size_t i) {
  REQUIRE(i < p.statements.size());
  REQUIRE(std::holds_alternative<T>(p.statements[i]));
  return std::get<T>(p.statements[i]);
}

int ParseErrorLine(const std::string& text) {
  try {
    ParseRecipe(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST_CASE("scenario 1 fixture has the four-statement structure") {
  const Program p = LoadRecipe(kRecipes + "scenario1.recipe");
  REQUIRE(p.statements.size() == 4);
  const auto& vc = As<VcTrain>(p, 0);
  CHECK(vc.datasets == std::vector<DatasetRef>{Ref("1", "neutral", 20), Ref("1", "news", 0.5),
                                               Ref("2", "neutral", 20), Ref("2", "news", 7)});
  const auto& conv = As<Convert>(p, 1);
  CHECK(conv.vc_name == vc.name);
  CHECK(conv.source == Ref("2", "news", 7));
  CHECK(conv.target.value == "1");
  CHECK(conv.out() == Ref("1", "news", 7, true));
  const auto& tts = As<TtsTrain>(p, 2);
  CHECK(tts.items == std::vector<TtsItem>{Ref("1", "neutral", 20), Ref("1", "news", 0.5),
                                          Ref("1", "news", 7, true)});
  CHECK_FALSE(tts.multi_speaker);
  const auto& ft = As<FineTune>(p, 3);
  CHECK(ft.tts_name == tts.name);
  CHECK(ft.dataset == Ref("1", "news", 0.5));
}

TEST_CASE("multi-speaker fixture: shared VC and eight chains") {
  const Program p = LoadRecipe(kRecipes + "multispeaker.recipe");
  REQUIRE(p.statements.size() == 1 + 8 * 3);
  const auto& vc = As<VcTrain>(p, 0);
  CHECK(vc.datasets.size() == 18);
  for (int i = 1; i <= 8; ++i) {
    const std::string id = std::to_string(i);
    const auto& conv = As<Convert>(p, 1 + 3 * (i - 1));
    const auto& tts = As<TtsTrain>(p, 2 + 3 * (i - 1));
    const auto& ft = As<FineTune>(p, 3 + 3 * (i - 1));
    CHECK(conv.vc_name == vc.name);
    CHECK(conv.target.value == id);
    CHECK(conv.source == Ref("9", "conv", 5));
    CHECK(tts.multi_speaker);
    CHECK(tts.items.size() == 12);
    CHECK(tts.items.front() == TtsItem{Ref(id, "conv", 0.5)});
    CHECK(tts.items.back() == TtsItem{conv.name});
    CHECK(ft.tts_name == tts.name);
    CHECK(ft.dataset == Ref(id, "conv", 0.5));
  }
}

TEST_CASE("every shipped recipe parses") {
  for (const char* name : {"scenario1", "scenario2", "multispeaker", "scenario1_desk", "baseline_desk"}) {
    CAPTURE(name);
    CHECK_NOTHROW(LoadRecipe(kRecipes + name + ".recipe"));
  }
}

TEST_CASE("amount units") {
  const Program p = ParseRecipe("v = VC(S(1,a,30m), S(1,b,ALL), S(2,a,1.5h))\n");
  const auto& vc = As<VcTrain>(p, 0);
  CHECK(*vc.datasets[0].hours == doctest::Approx(0.5));
  CHECK_FALSE(vc.datasets[1].hours.has_value());
  CHECK(*vc.datasets[2].hours == 1.5);
  CHECK(vc.datasets[1].ToString() == "S(1,b,ALL)");
  CHECK(Ref("1", "news", 7, true).ToString() == "S*(1,news,7h)");
}

TEST_CASE("round-trip of fixtures and random programs") {
  for (const char* name : {"scenario1", "multispeaker"}) {
    const Program p = LoadRecipe(kRecipes + name + ".recipe");
    CHECK(ParseRecipe(FormatRecipe(p)) == p);
  }
  Rng rng(77);
  for (int i = 0; i < 300; ++i) {
    const Program p = vcaug::testing::RandomProgram(rng);
    CHECK_NOTHROW(ValidateProgram(p));
    const std::string text = FormatRecipe(p);
    CAPTURE(text);
    CHECK(ParseRecipe(text) == p);
  }
}

TEST_CASE("syntax errors report line and column") {
  CHECK(ParseErrorLine("v = VC(S(1,a,ALL))\n\nt = TTS(S(1,a,ALL)\n") == 3);
  CHECK(ParseErrorLine("v = VC(S(1,a,2x))\n") == 1);
  CHECK(ParseErrorLine("# c\nv = XX(S(1,a,ALL))\n") == 2);
  CHECK(ParseErrorLine("v = VC(S(1,a,ALL)) extra\n") == 1);
  CHECK(ParseErrorLine("v = VC(S(1,a,ALL))\nc = CONVERT(v, S(1,a,ALL), to=2)\n") == 2);
  CHECK(ParseErrorLine("v = VC(S(1,a,ALL) ; )\n") == 1);
  try {
    ParseRecipe("v = VC(S(1,a,ALL), Q)\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
    CHECK(e.column() == 20);
  }
}

TEST_CASE("semantic errors") {
  // Synthetic data in FT.
  CHECK_THROWS_AS(ParseRecipe("v = VC(S(1,a,ALL), S(2,a,ALL))\n"
                              "c = CONVERT(v, S(2,a,ALL), target=1)\n"
                              "t = TTS(S(1,a,ALL), c)\n"
                              "ft1 = FT(t, S*(1,news,7h))\n"),
                  ValidationError);
  CHECK_THROWS_AS(ParseRecipe("t = TTS(S(1,a,ALL))\nf = FT(x, S(1,a,ALL))\n"), ValidationError);
  CHECK_THROWS_AS(ParseRecipe("t = TTS(S(1,a,ALL))\nc = CONVERT(t, S(1,a,ALL), target=2)\n"),
                  ValidationError);
  CHECK_THROWS_AS(ParseRecipe("t = TTS(S(1,a,ALL))\nt = TTS(S(1,a,ALL))\n"), ValidationError);
  CHECK_THROWS_AS(ParseRecipe("t = TTS(S(1,a,ALL), nope)\n"), ValidationError);
  CHECK_THROWS_AS(ParseRecipe("t = TTS(S(1,a,0h))\n"), ParseError);
  try {
    ParseRecipe("\n\nt = TTS(S(1,a,ALL))\nf = FT(q, S(1,a,ALL))\n");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("for-macro expansion") {
  const auto lines = ExpandMacros("a\nfor i in 2..3 {\n  x{i} = {i}\n}\nb\n");
  REQUIRE(lines.size() == 4);
  CHECK(lines[1].text.find("x2 = 2") != std::string::npos);
  CHECK(lines[2].text.find("x3 = 3") != std::string::npos);
  CHECK(lines[1].line == 3);
  CHECK(lines[3].line == 5);

  const auto single = ExpandMacros("for k in 1..2 { t{k} = TTS(S({k},a,ALL)) }\n");
  CHECK(single.size() == 2);
  const auto nested = ExpandMacros("for i in 1..2 {\nfor j in 1..3 {\ns{i}_{j}\n}\n}\n");
  CHECK(nested.size() == 6);
  CHECK(nested.back().text == "s2_3");
  CHECK_THROWS_AS(ExpandMacros("for i in 1..2 {\nx\n"), ParseError);
  CHECK_THROWS_AS(ExpandMacros("}\n"), ParseError);
  CHECK_THROWS_AS(ExpandMacros("for i in 3..1 { x }\n"), ParseError);
}

TEST_CASE("plan for scenario 1 on the toy registry") {
  const auto corpus = vcaug::testing::SmallCorpus(4, 1, 16);
  corpus::Registry reg;
  for (const auto& m : corpus) reg.Add(m);
  const Program p = LoadRecipe(kRecipes + "scenario1.recipe");
  const Plan plan = MakePlan(p, reg, 5);
  REQUIRE(plan.stages.size() == 4);
  CHECK(plan.stages[0].kind == StageKind::kTrainVc);
  CHECK(plan.stages[1].kind == StageKind::kBatchConvert);
  CHECK(plan.stages[2].kind == StageKind::kTrainTts);
  CHECK(plan.stages[3].kind == StageKind::kFineTune);
  CHECK(plan.stages[1].depends_on == std::vector<std::string>{"vc1"});
  CHECK(plan.stages[2].inputs[2].producer == "conv1");
  CHECK(plan.stages[3].model == "tts1");
  // Pure and deterministic.
  CHECK(MakePlan(p, reg, 5).Describe() == plan.Describe());
}

TEST_CASE("budgets reduce registry manifests") {
  const auto corpus = vcaug::testing::SmallCorpus(30, 1, 16);
  corpus::Registry reg;
  for (const auto& m : corpus) reg.Add(m);
  const double half_hours = corpus[1].hours() / 2;
  Program p;
  p.statements.push_back(TtsTrain{"t", {Ref("1", "news", half_hours), Ref("1", "neutral", std::nullopt)}, false});
  const Plan plan = MakePlan(p, reg, 1);
  const auto& in = plan.stages[0].inputs;
  CHECK(in[0].manifest->hours() <= half_hours + 1e-12);
  CHECK(in[0].manifest->size() < corpus[1].size());
  CHECK(in[1].manifest->size() == corpus[0].size());
}

TEST_CASE("missing datasets are reported together") {
  corpus::Registry reg;
  for (const auto& m : vcaug::testing::SmallCorpus(2, 1, 16)) reg.Add(m);
  const Program p = ParseRecipe("t = TTS(S(7,news,ALL), S(1,news,ALL), S(8,conv,1h))\n");
  try {
    MakePlan(p, reg, 1);
    FAIL("expected ResolutionError");
  } catch (const ResolutionError& e) {
    const std::string what = e.what();
    CHECK(what.find("S(7,news,ALL)") != std::string::npos);
    CHECK(what.find("S(8,conv,1h)") != std::string::npos);
  }
}

TEST_CASE("artifact index format") {
  const std::vector<Artifact> a{{"vc_checkpoint", "vc1", "models/vc1.vc.ckpt", "00ff"},
                                {"log", "vc1", "logs/vc1.log", "0a0b"}};
  const std::string text = FormatIndex(a);
  CHECK(text == "vc_checkpoint\tvc1\tmodels/vc1.vc.ckpt\t00ff\nlog\tvc1\tlogs/vc1.log\t0a0b\n");
  const auto back = ParseIndex(text);
  REQUIRE(back.size() == 2);
  CHECK(back[1].path == "logs/vc1.log");
  CHECK_THROWS_AS(ParseIndex("a\tb\n"), ParseError);
}
