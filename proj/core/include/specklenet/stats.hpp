#pragma once

#include <span>

namespace specklenet {

/// Pearson correlation of two equally sized samples. Throws
/// DegenerateInputError when either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
/// Population standard deviation.
double stddev(std::span<const double> v);

}  // namespace specklenet
