#include <cmath>
#include <string>

#include "triplet/inference.hpp"

namespace triplet {

double field_shift(const TripletModel& model, const SublevelPair& pair, const Eigen::Vector3d& direction,
                   double b_mt) {
  const double f0 = transition_frequency(model, FieldVector(), pair);
  return transition_frequency(model, FieldVector(direction * b_mt), pair) - f0;
}

double invert_field(double shift_mhz, const SublevelPair& pair, const TripletModel& model,
                    const Eigen::Vector3d& direction, double b_max_mt) {
  model.validate();
  if (!pair.valid()) throw InvalidInput("invert_field: invalid pair");
  if (!std::isfinite(shift_mhz)) throw InvalidInput("invert_field: non-finite shift");
  if (!direction.allFinite() || direction.norm() < 1e-12) throw InvalidInput("invert_field: direction must be nonzero");
  if (!(b_max_mt > 0.0) || b_max_mt >= FieldVector::kMaxMagnitudeMt)
    throw InvalidInput("invert_field: b_max must be in (0, 1e4) mT");
  if (shift_mhz == 0.0) return 0.0;
  const Eigen::Vector3d u = direction.normalized();
  auto g = [&](double b) { return field_shift(model, pair, u, b); };

  // monotonicity on a sample grid
  constexpr int kSamples = 256;
  double prev = 0.0;
  int sign = 0;
  for (int i = 1; i <= kSamples; ++i) {
    const double b = b_max_mt * i / kSamples;
    const double v = g(b);
    const double d = v - prev;
    const int s = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
    if (s != 0) {
      if (sign == 0) {
        sign = s;
      } else if (s != sign && std::abs(d) > 1e-12 * (1.0 + std::abs(v))) {
        throw NonMonotoneBracket("invert_field: shift is not monotone on [0, " + std::to_string(b_max_mt) +
                                 "] mT; retry with b_max below " + std::to_string(b_max_mt * (i - 1) / kSamples) +
                                 " mT");
      }
    }
    prev = v;
  }
  const double g_max = prev;
  if (sign == 0 || (shift_mhz > 0.0) != (g_max > 0.0) || std::abs(shift_mhz) > std::abs(g_max))
    throw OutOfRange("invert_field: shift " + std::to_string(shift_mhz) + " MHz outside the forward range [0, " +
                     std::to_string(g_max) + "] MHz");

  double lo = 0.0, hi = b_max_mt;
  while (hi - lo > 1e-4) {
    const double mid = 0.5 * (lo + hi);
    if ((g(mid) - shift_mhz) * sign < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace triplet
