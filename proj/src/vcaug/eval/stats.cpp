#include "vcaug/eval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "vcaug/error.hpp"

namespace vcaug::eval {

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double BetaContinuedFraction(double a, double b, double x) {
  constexpr int kMaxIterations = 1000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace

double RegularizedIncompleteBeta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ContractError("incomplete beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw ContractError("incomplete beta: x must be in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The fraction converges fast for x < (a + 1) / (a + b + 2); use symmetry otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * BetaContinuedFraction(a, b, x) / a;
  return 1.0 - front * BetaContinuedFraction(b, a, 1.0 - x) / b;
}

double StudentTCdf(double t, double df) {
  if (!(df > 0.0)) throw ContractError("t cdf: df must be positive");
  if (std::isnan(t)) return t;
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * RegularizedIncompleteBeta(df / 2.0, 0.5, df / (df + t * t));
  return t > 0.0 ? 1.0 - tail : tail;
}

double StudentTQuantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw ContractError("t quantile: p must be in (0, 1)");
  if (!(df > 0.0)) throw ContractError("t quantile: df must be positive");
  if (p == 0.5) return 0.0;
  double lo = -1.0;
  double hi = 1.0;
  while (StudentTCdf(lo, df) > p) lo *= 2.0;
  while (StudentTCdf(hi, df) < p) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (StudentTCdf(mid, df) < p) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

MeanCi MeanWithCi(std::span<const double> scores) {
  if (scores.empty()) throw SelectionError("no scores to aggregate");
  MeanCi r;
  r.n = scores.size();
  r.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(r.n);
  if (r.n == 1) return r;
  double ss = 0.0;
  for (double s : scores) ss += (s - r.mean) * (s - r.mean);
  const double sd = std::sqrt(ss / static_cast<double>(r.n - 1));
  if (sd == 0.0) return r;
  r.ci95_halfwidth =
      StudentTQuantile(0.975, static_cast<double>(r.n - 1)) * sd / std::sqrt(static_cast<double>(r.n));
  return r;
}

TTest PairedTTest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw PairingError("paired t-test: " + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()) + " scores");
  }
  if (a.size() < 2) throw PairingError("paired t-test needs at least 2 pairs");
  const size_t n = a.size();
  std::vector<double> d(n);
  for (size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    if (mean == 0.0) return {0.0, 1.0};
    // Constant non-zero difference: infinitely significant.
    return {mean > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity(),
            0.0};
  }
  TTest r;
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const double df = static_cast<double>(n - 1);
  r.p = RegularizedIncompleteBeta(df / 2.0, 0.5, df / (df + r.t * r.t));
  return r;
}

std::vector<bool> HolmBonferroni(std::span<const double> pvals, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("holm: alpha must be in (0, 1)");
  for (double p : pvals) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("holm: p-value outside [0, 1]");
  }
  const size_t m = pvals.size();
  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t i, size_t j) { return pvals[i] < pvals[j]; });
  std::vector<bool> reject(m, false);
  for (size_t k = 0; k < m; ++k) {
    if (pvals[order[k]] > alpha / static_cast<double>(m - k)) break;
    reject[order[k]] = true;
  }
  return reject;
}

}  // namespace vcaug::eval
