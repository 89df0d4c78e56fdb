#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gaitcnn/errors.hpp"

namespace gaitcnn::stats {

/// Regularized incomplete beta I_x(a, b), continued fraction evaluated with
/// the modified Lentz method.
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete_beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  auto cf = [](double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
      const double m2 = 2.0 * m;
      double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
      d = 1.0 + num * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      h *= d * c;
      num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
      d = 1.0 + num * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + num / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      const double delta = d * c;
      h *= delta;
      if (std::abs(delta - 1.0) < eps) break;
    }
    return h;
  };
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * cf(a, b, x) / a;
  return 1.0 - front * cf(b, a, 1.0 - x) / b;
}

/// P(F > f) for an F(d1, d2) variable.
inline double f_survival(double f, double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0)) throw ValidationError("F distribution needs positive degrees of freedom");
  if (!(f > 0.0)) return 1.0;
  if (std::isinf(f)) return 0.0;
  return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

inline double mean(std::span<const double> x) {
  if (x.empty()) throw ValidationError("mean of an empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample standard deviation (n - 1 denominator).
inline double stddev(std::span<const double> x) {
  if (x.size() < 2) throw ValidationError("standard deviation needs n >= 2");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

inline double median(std::span<const double> x) {
  if (x.empty()) throw ValidationError("median of an empty sample");
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Accuracy (mean) and precision (sample std) of signed errors.
struct ErrorStats {
  double mean = 0.0;
  double precision = 0.0;
  std::size_t n = 0;
};

inline ErrorStats error_stats(std::span<const double> errors) {
  if (errors.size() < 2) throw ValidationError("error statistics need at least two errors");
  return {mean(errors), stddev(errors), errors.size()};
}

inline constexpr double kLimitsZ = 1.96;

struct BlandAltman {
  std::vector<double> mean;  // (prediction + reference) / 2
  std::vector<double> diff;  // prediction - reference
  double bias = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Limits of agreement bias +- 1.96 sd.
inline std::pair<double, double> agreement_limits(double bias, double sd) {
  return {bias - kLimitsZ * sd, bias + kLimitsZ * sd};
}

inline BlandAltman bland_altman(std::span<const double> predictions, std::span<const double> references) {
  if (predictions.size() != references.size()) throw ValidationError("Bland-Altman needs paired values");
  BlandAltman ba;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    ba.mean.push_back(0.5 * (predictions[i] + references[i]));
    ba.diff.push_back(predictions[i] - references[i]);
  }
  const auto s = error_stats(ba.diff);
  ba.bias = s.mean;
  ba.sd = s.precision;
  std::tie(ba.lower, ba.upper) = agreement_limits(ba.bias, ba.sd);
  return ba;
}

enum class LeveneCenter { mean, median };
inline std::string to_string(LeveneCenter c) { return c == LeveneCenter::mean ? "mean" : "median"; }
inline LeveneCenter levene_center_from_string(const std::string& s) {
  if (s == "mean") return LeveneCenter::mean;
  if (s == "median") return LeveneCenter::median;
  throw ValidationError("unknown Levene center '" + s + "' (expected mean or median)");
}

struct LeveneResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double df1 = 0.0;
  double df2 = 0.0;
  bool significant = false;
};

/// Levene test for equal variances on absolute deviations from each group's
/// center; W ~ F(k - 1, N - k) under the null hypothesis.
inline LeveneResult levene_test(std::span<const double> a, std::span<const double> b,
                                LeveneCenter center = LeveneCenter::median, double alpha = 0.01) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("Levene test needs n >= 2 per group");
  const std::span<const double> groups[2] = {a, b};
  for (const auto& g : groups)
    if (std::all_of(g.begin(), g.end(), [&](double v) { return v == g.front(); }))
      throw ValidationError("Levene test on a zero-variance group");
  std::vector<double> z[2];
  double zbar[2];
  double total = 0.0;
  std::size_t n_total = 0;
  for (int i = 0; i < 2; ++i) {
    const double c = center == LeveneCenter::mean ? mean(groups[i]) : median(groups[i]);
    for (double v : groups[i]) z[i].push_back(std::abs(v - c));
    zbar[i] = mean(z[i]);
    total += std::accumulate(z[i].begin(), z[i].end(), 0.0);
    n_total += z[i].size();
  }
  const double grand = total / static_cast<double>(n_total);
  double between = 0.0, within = 0.0;
  for (int i = 0; i < 2; ++i) {
    between += static_cast<double>(z[i].size()) * (zbar[i] - grand) * (zbar[i] - grand);
    for (double v : z[i]) within += (v - zbar[i]) * (v - zbar[i]);
  }
  LeveneResult r;
  r.df1 = 1.0;
  r.df2 = static_cast<double>(n_total) - 2.0;
  if (within == 0.0) throw ValidationError("Levene test: absolute deviations have zero within-group variance");
  r.statistic = r.df2 / r.df1 * between / within;
  r.p_value = f_survival(r.statistic, r.df1, r.df2);
  r.significant = r.p_value < alpha;
  return r;
}

/// ICC forms for n subjects rated by the two "raters" prediction and reference.
enum class IccVariant {
  one_way,              // ICC(1,1)
  two_way_agreement,    // ICC(2,1), absolute agreement
  two_way_consistency,  // ICC(3,1)
};
inline std::string to_string(IccVariant v) {
  switch (v) {
    case IccVariant::one_way: return "ICC(1,1)";
    case IccVariant::two_way_agreement: return "ICC(2,1)";
    case IccVariant::two_way_consistency: return "ICC(3,1)";
  }
  return "?";
}
inline IccVariant icc_variant_from_string(const std::string& s) {
  if (s == "ICC(1,1)" || s == "1,1") return IccVariant::one_way;
  if (s == "ICC(2,1)" || s == "2,1") return IccVariant::two_way_agreement;
  if (s == "ICC(3,1)" || s == "3,1") return IccVariant::two_way_consistency;
  throw ValidationError("unknown ICC variant '" + s + "'");
}

/// Intraclass correlation from the two-way ANOVA mean squares.
inline double icc(std::span<const double> predictions, std::span<const double> references,
                  IccVariant variant = IccVariant::two_way_agreement) {
  if (predictions.size() != references.size()) throw ValidationError("ICC needs paired values");
  const std::size_t n = predictions.size();
  if (n < 3) throw ValidationError("ICC needs at least three pairs");
  constexpr double k = 2.0;
  const double dn = static_cast<double>(n);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) grand += predictions[i] + references[i];
  grand /= k * dn;
  const double col_mean[2] = {mean(predictions), mean(references)};
  double ss_rows = 0.0, ss_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rm = 0.5 * (predictions[i] + references[i]);
    ss_rows += k * (rm - grand) * (rm - grand);
    ss_total += (predictions[i] - grand) * (predictions[i] - grand) + (references[i] - grand) * (references[i] - grand);
  }
  if (ss_total == 0.0) throw ValidationError("ICC of constant data is undefined");
  double ss_cols = 0.0;
  for (double cm : col_mean) ss_cols += dn * (cm - grand) * (cm - grand);
  const double ss_err = ss_total - ss_rows - ss_cols;
  const double msr = ss_rows / (dn - 1.0);
  const double msc = ss_cols / (k - 1.0);
  const double mse = ss_err / ((dn - 1.0) * (k - 1.0));
  const double msw = (ss_cols + ss_err) / (dn * (k - 1.0));
  switch (variant) {
    case IccVariant::one_way: return (msr - msw) / (msr + (k - 1.0) * msw);
    case IccVariant::two_way_agreement: return (msr - mse) / (msr + (k - 1.0) * mse + k * (msc - mse) / dn);
    case IccVariant::two_way_consistency: return (msr - mse) / (msr + (k - 1.0) * mse);
  }
  return 0.0;
}

}  // namespace gaitcnn::stats
