#include "rtprobe/stats.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "rtprobe/error.hpp"

namespace rtprobe::stats {

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_sd(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double student_t_cdf(double t, double df) {
  if (std::isinf(t)) return t < 0 ? 0.0 : 1.0;
  boost::math::students_t dist(df);
  return boost::math::cdf(dist, t);
}

double paired_t_test_less(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("paired t-test: length mismatch");
  if (a.size() < 2) throw DimensionError("paired t-test needs K >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double m = mean(d);
  const double sd = sample_sd(d);
  if (!(sd > 0.0)) return m < 0.0 ? 0.0 : 1.0;
  const auto k = static_cast<double>(d.size());
  const double t = m / (sd / std::sqrt(k));
  return student_t_cdf(t, k - 1.0);
}

}  // namespace rtprobe::stats
