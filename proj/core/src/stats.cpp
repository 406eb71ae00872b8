#include "specklenet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "specklenet/error.hpp"

namespace specklenet {

double mean(std::span<const double> v) {
  if (v.empty()) throw InvalidInputError("mean of an empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("pearson: sample sizes differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) throw DegenerateInputError("pearson: zero-variance input");
  const double r = sab / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

}  // namespace specklenet
