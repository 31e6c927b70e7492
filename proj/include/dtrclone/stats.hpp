#pragma once

#include <span>
#include <vector>

namespace dtrclone::stats {

inline constexpr double kZ975 = 1.959963984540054;

double mean(std::span<const double> x);
// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sd(std::span<const double> x);
// Linear-interpolation quantile (type 7), p in [0, 1].
double quantile(std::vector<double> x, double p);
double median(std::vector<double> x);

double normal_cdf(double z);
double two_sided_p(double z);

double logit(double p);
double expit(double x);

}  // namespace dtrclone::stats
