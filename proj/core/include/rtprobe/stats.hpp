#pragma once

#include <span>

namespace rtprobe::stats {

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator); 0 for n < 2.
double sample_sd(std::span<const double> x);

/// CDF of Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

/// One-sided paired t-test of H1: mean(a - b) < 0.
/// Zero-variance differences: p = 0 if mean(d) < 0, else p = 1.
double paired_t_test_less(std::span<const double> a, std::span<const double> b);

}  // namespace rtprobe::stats
