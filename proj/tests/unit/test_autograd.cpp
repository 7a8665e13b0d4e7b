#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "vcaug/error.hpp"
#include "vcaug/nn/autograd.hpp"
#include "vcaug/nn/layers.hpp"
#include "vcaug/nn/optim.hpp"
#include "vcaug/nn/serialize.hpp"
#include "vcaug/util/rng.hpp"
#include "vcaug/util/strings.hpp"

using namespace vcaug;
using namespace vcaug::nn;
using vcaug::testing::MaxGradientError;

namespace {

Matrix Random(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.Normal();
  return m;
}

// Checks d/dparams of sum(f(params) .* W) for a fixed random W.
double CheckOp(std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes,
               const std::function<Var(Tape&, std::vector<Var>&)>& f, uint64_t seed = 1,
               double scale = 1.0) {
  Rng rng(seed);
  ParameterStore store;
  for (size_t i = 0; i < shapes.size(); ++i) {
    Parameter& p = store.Create("p" + std::to_string(i), shapes[i].first, shapes[i].second);
    p.value = Random(shapes[i].first, shapes[i].second, rng, scale);
  }
  Matrix weights;
  auto build = [&](Tape& tape) {
    std::vector<Var> vars;
    for (auto* p : store.All()) vars.push_back(tape.Param(*p));
    Var out = f(tape, vars);
    if (weights.size() == 0) weights = Random(out.rows(), out.cols(), rng);
    return SumAll(Mul(out, tape.Constant(weights)));
  };
  auto loss = [&] {
    Tape tape(false);
    return build(tape).item();
  };
  auto backward = [&] {
    Tape tape;
    tape.Backward(build(tape));
  };
  loss();  // fixes the weight shape
  return MaxGradientError(store, loss, backward);
}

}  // namespace

TEST_CASE("elementwise and linear-algebra gradients") {
  CHECK(CheckOp({{3, 4}, {4, 2}}, [](Tape&, auto& v) { return MatMul(v[0], v[1]); }) < 1e-6);
  CHECK(CheckOp({{3, 4}, {4, 2}, {1, 2}}, [](Tape&, auto& v) { return Affine(v[0], v[1], v[2]); }) < 1e-6);
  CHECK(CheckOp({{3, 4}, {3, 4}}, [](Tape&, auto& v) { return Add(v[0], v[1]); }) < 1e-6);
  CHECK(CheckOp({{3, 4}, {1, 4}}, [](Tape&, auto& v) { return AddRow(v[0], v[1]); }) < 1e-6);
  CHECK(CheckOp({{3, 4}, {3, 4}}, [](Tape&, auto& v) { return Sub(v[0], v[1]); }) < 1e-6);
  CHECK(CheckOp({{3, 4}, {3, 4}}, [](Tape&, auto& v) { return Mul(v[0], v[1]); }) < 1e-6);
  CHECK(CheckOp({{3, 4}}, [](Tape&, auto& v) { return Scale(v[0], -2.5); }) < 1e-6);
  CHECK(CheckOp({{3, 4}}, [](Tape&, auto& v) { return AddScalar(v[0], 0.7); }) < 1e-6);
  CHECK(CheckOp({{3, 4}}, [](Tape&, auto& v) { return Tanh(v[0]); }) < 1e-6);
  CHECK(CheckOp({{3, 4}}, [](Tape&, auto& v) { return Sigmoid(v[0]); }) < 1e-6);
  CHECK(CheckOp({{3, 4}}, [](Tape&, auto& v) { return Relu(v[0]); }) < 1e-6);
  CHECK(CheckOp({{3, 4}}, [](Tape&, auto& v) { return Exp(v[0]); }) < 1e-6);
  CHECK(CheckOp({{3, 4}}, [](Tape&, auto& v) { return Clamp(v[0], -0.5, 0.5); }) < 1e-6);
  CHECK(CheckOp({{3, 4}}, [](Tape&, auto& v) { return Transpose(v[0]); }) < 1e-6);
  CHECK(CheckOp({{3, 4}}, [](Tape&, auto& v) { return Reshape(v[0], 2, 6); }) < 1e-6);
  CHECK(CheckOp({{3, 5}}, [](Tape&, auto& v) { return SoftmaxRows(v[0]); }) < 1e-6);
}

TEST_CASE("shape op gradients") {
  CHECK(CheckOp({{3, 2}, {3, 4}}, [](Tape&, auto& v) {
          return ConcatCols(std::vector<Var>{v[0], v[1]});
        }) < 1e-6);
  CHECK(CheckOp({{2, 3}, {4, 3}}, [](Tape&, auto& v) {
          return ConcatRows(std::vector<Var>{v[0], v[1]});
        }) < 1e-6);
  CHECK(CheckOp({{5, 3}}, [](Tape&, auto& v) { return SliceRows(v[0], 1, 3); }) < 1e-6);
  CHECK(CheckOp({{5, 3}}, [](Tape&, auto& v) { return SliceCols(v[0], 1, 2); }) < 1e-6);
  CHECK(CheckOp({{1, 3}}, [](Tape&, auto& v) { return BroadcastRows(v[0], 4); }) < 1e-6);
  CHECK(CheckOp({{3, 2}}, [](Tape&, auto& v) { return RepeatRows(v[0], 3, 8); }) < 1e-6);
  CHECK(CheckOp({{7, 2}}, [](Tape&, auto& v) { return AvgPoolRows(v[0], 3); }) < 1e-6);
  CHECK(CheckOp({{4, 3}}, [](Tape&, auto& v) { return MeanRows(v[0]); }) < 1e-6);
  CHECK(CheckOp({{4, 3}}, [](Tape&, auto& v) { return MeanAll(v[0]); }) < 1e-6);
  CHECK(CheckOp({{5, 3}}, [](Tape&, auto& v) {
          const std::vector<int> idx{4, 0, 4, 2};
          return GatherRows(v[0], idx);
        }) < 1e-6);
  CHECK(CheckOp({{6, 2}}, [](Tape&, auto& v) { return Unfold(v[0], 5); }) < 1e-6);
}

TEST_CASE("loss gradients") {
  Rng rng(9);
  const Matrix target = Random(3, 4, rng);
  const Matrix labels = (Random(3, 4, rng).array() > 0).cast<double>().matrix();
  CHECK(CheckOp({{3, 4}}, [&](Tape&, auto& v) { return L1Loss(v[0], target); }) < 1e-6);
  CHECK(CheckOp({{3, 4}}, [&](Tape&, auto& v) { return BceWithLogits(v[0], labels); }) < 1e-6);
  CHECK(CheckOp({{3, 5}}, [](Tape&, auto& v) {
          const std::vector<int> lab{0, 4, 2};
          return CrossEntropy(v[0], lab);
        }) < 1e-6);
  CHECK(CheckOp({{1, 6}, {1, 6}}, [](Tape&, auto& v) { return KlStandardNormal(v[0], v[1]); }) < 1e-6);
}

TEST_CASE("loss values against closed forms") {
  Tape tape;
  Matrix pred(1, 2), target(1, 2);
  pred << 0.5, -1.0;
  target << 0.0, 1.0;
  CHECK(L1Loss(tape.Constant(pred), target).item() == doctest::Approx((0.5 + 2.0) / 2));

  Matrix logits(1, 2), labels(1, 2);
  logits << 2.0, -3.0;
  labels << 1.0, 1.0;
  const double bce = (std::log1p(std::exp(-2.0)) + std::log1p(std::exp(3.0))) / 2;
  CHECK(BceWithLogits(tape.Constant(logits), labels).item() == doctest::Approx(bce).epsilon(1e-12));
  // Very large logits stay finite.
  logits << 800.0, -800.0;
  labels << 0.0, 1.0;
  CHECK(BceWithLogits(tape.Constant(logits), labels).item() == doctest::Approx(800.0));

  Matrix mu(1, 2), lv(1, 2);
  mu << 1.0, 0.0;
  lv << 0.0, std::log(4.0);
  // 0.5 * sum(exp(lv) + mu^2 - 1 - lv)
  const double kl = 0.5 * ((1 + 1 - 1 - 0) + (4 + 0 - 1 - std::log(4.0)));
  CHECK(KlStandardNormal(tape.Constant(mu), tape.Constant(lv)).item() == doctest::Approx(kl));

  Matrix sm(1, 3);
  sm << 1000.0, 1000.0, 1000.0;
  const Matrix s = SoftmaxRows(tape.Constant(sm)).value();
  CHECK(s.sum() == doctest::Approx(1.0));
  CHECK(s(0, 0) == doctest::Approx(1.0 / 3));
}

TEST_CASE("unfold matches a direct convolution") {
  Rng rng(4);
  Tape tape(false);
  const Matrix x = Random(5, 2, rng);
  const Matrix u = Unfold(tape.Constant(x), 3).value();
  REQUIRE(u.rows() == 5);
  REQUIRE(u.cols() == 6);
  for (int t = 0; t < 5; ++t) {
    for (int k = 0; k < 3; ++k) {
      for (int c = 0; c < 2; ++c) {
        const int src = t + k - 1;
        const double expect = (src < 0 || src >= 5) ? 0.0 : x(src, c);
        CHECK(u(t, k * 2 + c) == expect);
      }
    }
  }
}

TEST_CASE("avg pool keeps a partial last block") {
  Tape tape(false);
  Matrix x(5, 1);
  x << 1, 2, 3, 4, 10;
  const Matrix p = AvgPoolRows(tape.Constant(x), 2).value();
  REQUIRE(p.rows() == 3);
  CHECK(p(0, 0) == 1.5);
  CHECK(p(1, 0) == 3.5);
  CHECK(p(2, 0) == 10.0);
}

TEST_CASE("layer gradients") {
  Rng rng(2);
  ParameterStore store;
  Linear lin(store, "lin", 3, 4, rng);
  Conv1d conv(store, "conv", 4, 3, 3, rng);
  GruCell gru(store, "gru", 3, 5, rng);
  Embedding emb(store, "emb", 6, 3, rng);
  const Matrix x = Random(4, 3, rng);
  const std::vector<int> ids{1, 5, 0};
  auto build = [&](Tape& tape) {
    Var h = Relu(lin(tape, tape.Constant(x)));
    Var c = Tanh(conv(tape, h));  // 4 x 3
    Var state = gru.InitialState(tape);
    for (int t = 0; t < 4; ++t) state = gru(tape, SliceRows(c, t, 1), state);
    Var e = emb(tape, ids);
    return Add(SumAll(state), SumAll(Mul(e, e)));
  };
  auto loss = [&] {
    Tape tape(false);
    return build(tape).item();
  };
  auto backward = [&] {
    Tape tape;
    tape.Backward(build(tape));
  };
  CHECK(MaxGradientError(store, loss, backward) < 1e-5);
}

TEST_CASE("GRU cell matches a scalar reference implementation") {
  Rng rng(8);
  ParameterStore store;
  GruCell gru(store, "g", 2, 3, rng);
  const Matrix x = Random(1, 2, rng);
  const Matrix h = Random(1, 3, rng);
  Tape tape(false);
  const Matrix out = gru(tape, tape.Constant(x), tape.Constant(h)).value();

  const Matrix& wi = store.Get("g.ih.w").value;
  const Matrix& bi = store.Get("g.ih.b").value;
  const Matrix& wh = store.Get("g.hh.w").value;
  const Matrix& bh = store.Get("g.hh.b").value;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (int j = 0; j < 3; ++j) {
    auto gi = [&](int col) {
      double s = bi(0, col);
      for (int k = 0; k < 2; ++k) s += x(0, k) * wi(k, col);
      return s;
    };
    auto gh = [&](int col) {
      double s = bh(0, col);
      for (int k = 0; k < 3; ++k) s += h(0, k) * wh(k, col);
      return s;
    };
    const double r = sig(gi(j) + gh(j));
    const double z = sig(gi(3 + j) + gh(3 + j));
    const double n = std::tanh(gi(6 + j) + r * gh(6 + j));
    const double expect = (1 - z) * n + z * h(0, j);
    CHECK(out(0, j) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("Adam matches a reference update") {
  ParameterStore store;
  Parameter& p = store.Create("w", 1, 2);
  p.value << 1.0, -2.0;
  AdamOptions opt;
  opt.learning_rate = 0.1;
  opt.clip_norm = 0.0;
  Adam adam(store, opt);

  double w[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 5; ++t) {
    // loss = 0.5 * sum(c_i * w_i^2)
    const double c[2] = {1.0, 3.0};
    for (int i = 0; i < 2; ++i) p.grad(0, i) = c[i] * p.value(0, i);
    adam.Step();
    for (int i = 0; i < 2; ++i) {
      const double g = c[i] * w[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(p.value(0, i) == doctest::Approx(w[i]).epsilon(1e-12));
    }
    CHECK(p.grad.norm() == 0.0);
  }
  CHECK(adam.steps() == 5);
}

TEST_CASE("gradient clipping rescales to the clip norm") {
  ParameterStore store;
  Parameter& p = store.Create("w", 1, 2);
  p.ZeroGrad();
  p.grad << 3.0, 4.0;
  CHECK(store.GradNorm() == doctest::Approx(5.0));
  store.ScaleGrad(0.2);
  CHECK(store.GradNorm() == doctest::Approx(1.0));
}

TEST_CASE("binary serialization round-trips") {
  Rng rng(1);
  BinaryWriter w;
  const Matrix m = Random(3, 2, rng);
  w.U32(7);
  w.U64(1ULL << 40);
  w.F64(-0.125);
  w.Str("hello");
  w.Mat(m);
  BinaryReader r(w.bytes());
  CHECK(r.U32() == 7);
  CHECK(r.U64() == (1ULL << 40));
  CHECK(r.F64() == -0.125);
  CHECK(r.Str() == "hello");
  CHECK(r.Mat() == m);
  CHECK(r.AtEnd());
  CHECK_THROWS_AS(r.U32(), ValidationError);
}

TEST_CASE("checkpoint header validation") {
  vcaug::testing::TempDir dir("ckpt");
  BinaryWriter payload;
  payload.Str("x");
  WriteCheckpoint(dir / "a.ckpt", {"thing", 2, 99}, payload);
  CheckpointHeader h;
  BinaryReader r = ReadCheckpoint(dir / "a.ckpt", "thing", 2, &h);
  CHECK(h.config_hash == 99);
  CHECK(r.Str() == "x");
  CHECK_THROWS_AS(ReadCheckpoint(dir / "a.ckpt", "other", 2, &h), ValidationError);
  CHECK_THROWS_AS(ReadCheckpoint(dir / "a.ckpt", "thing", 3, &h), ValidationError);
  WriteFile(dir / "junk.ckpt", "not a checkpoint at all");
  CHECK_THROWS_AS(ReadCheckpoint(dir / "junk.ckpt", "thing", 2, &h), ValidationError);
  CHECK_THROWS_AS(ReadCheckpoint(dir / "missing.ckpt", "thing", 2, &h), IoError);
}

TEST_CASE("parameter store layout checks on read") {
  Rng rng(1);
  ParameterStore a;
  Linear la(a, "x", 2, 3, rng);
  BinaryWriter w;
  a.Write(w);

  ParameterStore b;
  Linear lb(b, "x", 2, 4, rng);
  BinaryReader r(w.bytes());
  CHECK_THROWS_AS(b.Read(r), ValidationError);

  ParameterStore c;
  Linear lc(c, "x", 2, 3, rng);
  BinaryReader r2(w.bytes());
  c.Read(r2);
  CHECK(c.Get("x.w").value == a.Get("x.w").value);
  CHECK_THROWS_AS(c.Create("x.w", 1, 1), ContractError);
  CHECK_THROWS_AS(c.Get("nope"), LookupError);
}
