#pragma once

#include <span>
#include <vector>

namespace vcaug::eval {

// Regularized incomplete beta I_x(a, b), by continued fraction.
double RegularizedIncompleteBeta(double a, double b, double x);

// Student's t distribution with `df` degrees of freedom.
double StudentTCdf(double t, double df);
double StudentTQuantile(double p, double df);

struct MeanCi {
  size_t n = 0;
  double mean = 0.0;
  double ci95_halfwidth = 0.0;
};

// Mean and 95% t-interval halfwidth t_{0.975,n-1} * s / sqrt(n). Zero
// halfwidth when n == 1 or s == 0. Empty input is a SelectionError.
MeanCi MeanWithCi(std::span<const double> scores);

struct TTest {
  double t = 0.0;
  double p = 1.0;  // two-sided
};

// Paired t-test over d = a - b. All-zero differences give t = 0, p = 1.
TTest PairedTTest(std::span<const double> a, std::span<const double> b);

// Holm step-down; flags in input order.
std::vector<bool> HolmBonferroni(std::span<const double> pvals, double alpha);

}  // namespace vcaug::eval
