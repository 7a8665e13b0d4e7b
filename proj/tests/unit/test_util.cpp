#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "vcaug/error.hpp"
#include "vcaug/util/config.hpp"
#include "vcaug/util/hash.hpp"
#include "vcaug/util/rng.hpp"
#include "vcaug/util/strings.hpp"

using namespace vcaug;

TEST_CASE("config parse, comments and precedence") {
  Config file = Config::Parse("# comment\n a = 1 \nb=two\n\nc=0.5\n");
  CHECK(file.GetInt("a", 0) == 1);
  CHECK(file.GetString("b", "") == "two");
  CHECK(file.GetDouble("c", 0) == 0.5);
  CHECK(file.GetInt("missing", 42) == 42);

  Config cfg;
  cfg.Set("a", "0");
  cfg.Merge(file);  // file over defaults
  cfg.Set("b", "flag");  // flag over file
  CHECK(cfg.GetInt("a", -1) == 1);
  CHECK(cfg.GetString("b", "") == "flag");
  CHECK(cfg.ToString() == "a=1\nb=flag\nc=0.5\n");
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(Config::Parse("novalue\n"), ParseError);
  CHECK_THROWS_AS(Config::Parse("=3\n"), ParseError);
  Config cfg = Config::Parse("x=abc\nflag=maybe\n");
  CHECK_THROWS_AS(cfg.GetInt("x", 0), ValidationError);
  CHECK_THROWS_AS(cfg.GetDouble("x", 0), ValidationError);
  CHECK_THROWS_AS(cfg.GetBool("flag", false), ValidationError);
  CHECK_THROWS_AS(Config::Load("/nonexistent/vcaug.conf"), IoError);
}

TEST_CASE("strict numeric parsing") {
  CHECK(ParseDouble("0.25", "x") == 0.25);
  CHECK(ParseInt("-7", "x") == -7);
  CHECK_THROWS_AS(ParseDouble("1.5x", "x"), ValidationError);
  CHECK_THROWS_AS(ParseDouble("", "x"), ValidationError);
  CHECK_THROWS_AS(ParseInt("3.0", "x"), ValidationError);
}

TEST_CASE("FormatDouble round-trips exactly") {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const double v = std::ldexp(rng.Uniform(-1.0, 1.0), static_cast<int>(rng.Below(80)) - 40);
    CHECK(ParseDouble(FormatDouble(v), "v") == v);
  }
  CHECK(FormatDouble(0.5) == "0.5");
  CHECK(FormatDouble(20.0) == "20");
  CHECK(FormatFixed(1.25, 1).size() == 3);
}

TEST_CASE("split helpers") {
  CHECK(Split("a\tb\t", '\t') == std::vector<std::string>{"a", "b", ""});
  CHECK(SplitWords("  x  y ") == std::vector<std::string>{"x", "y"});
  CHECK(SplitWords("").empty());
  CHECK(Join({"a", "b"}, ", ") == "a, b");
  CHECK(Trim("\t a b \n") == "a b");
}

TEST_CASE("FNV-1a published test vectors") {
  CHECK(HashBytes("") == 0xcbf29ce484222325ULL);
  CHECK(HashBytes("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(HashBytes("foobar") == 0x85944171f73967e8ULL);
  CHECK(HexDigest(0xabcULL) == "0000000000000abc");
}

TEST_CASE("seed derivation") {
  // First SplitMix64 output from state 0.
  CHECK(MixSeed(0) == 0xe220a8397b1dcdafULL);
  CHECK(DeriveSeed(1, "vc") != DeriveSeed(1, "tts"));
  CHECK(DeriveSeed(1, "vc") != DeriveSeed(2, "vc"));
  CHECK(DeriveSeed(5, "x") == DeriveSeed(5, "x"));
}

TEST_CASE("rng engine matches the standard's mt19937_64 check value") {
  Rng rng(5489);
  uint64_t x = 0;
  for (int i = 0; i < 10000; ++i) x = rng.NextU64();
  CHECK(x == 9981545732273789042ULL);
}

TEST_CASE("rng distributions") {
  Rng rng(3);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.Normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);

  std::set<uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const uint64_t b = rng.Below(7);
    CHECK(b < 7);
    seen.insert(b);
  }
  CHECK(seen.size() == 7);

  std::vector<int> v{1, 2, 3, 4, 5};
  rng.Shuffle(v);
  std::sort(v.begin(), v.end());
  CHECK(v == std::vector<int>{1, 2, 3, 4, 5});
}
