#pragma once

#include <span>
#include <vector>

namespace ilt::stats {

double mean(std::span<const double> values);

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> values);

/// Linear-interpolation quantile (R type 7); q in [0, 1].
double quantile(std::vector<double> values, double q);

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

}  // namespace ilt::stats
