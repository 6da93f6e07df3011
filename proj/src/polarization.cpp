#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "triplet/inference.hpp"

namespace triplet {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double wrap180(double a) {
  a = std::fmod(a, 180.0);
  if (a < 0.0) a += 180.0;
  return a >= 180.0 ? 0.0 : a;
}

}  // namespace

FitResult fit_polarization(const PolarizationScan& scan, const LmOptions& lm_options) {
  if (scan.size() < 8) throw Underdetermined("fit_polarization: need at least 8 angles");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const auto& s = scan[i];
    if (!(s.angle_deg >= 0.0 && s.angle_deg < 360.0))
      throw InvalidInput("fit_polarization: angle outside [0, 360) at sample " + std::to_string(i));
    if (!(s.counts >= 0.0) || !std::isfinite(s.counts))
      throw InvalidInput("fit_polarization: negative or non-finite intensity at sample " + std::to_string(i));
    lo = std::min(lo, s.angle_deg);
    hi = std::max(hi, s.angle_deg);
  }
  if (hi - lo < 180.0 - 1e-9) throw Underdetermined("fit_polarization: angles must span at least 180 degrees");

  // linear start: I = m + u cos 2 theta + v sin 2 theta
  Eigen::MatrixXd x(static_cast<Eigen::Index>(scan.size()), 3);
  Eigen::VectorXd y(static_cast<Eigen::Index>(scan.size()));
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const double t = 2.0 * scan[i].angle_deg * kDeg;
    x.row(static_cast<Eigen::Index>(i)) << 1.0, std::cos(t), std::sin(t);
    y(static_cast<Eigen::Index>(i)) = scan[i].counts;
  }
  const Eigen::Vector3d lin = x.colPivHouseholderQr().solve(y);
  const double half_amp = std::hypot(lin(1), lin(2));
  Eigen::Vector3d p0(std::atan2(lin(2), lin(1)) / 2.0 / kDeg, 2.0 * half_amp, lin(0) - half_amp);

  const auto data = std::make_shared<const PolarizationScan>(scan);
  LeastSquaresProblem pr;
  pr.residuals = [data](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(data->size()));
    for (std::size_t i = 0; i < data->size(); ++i) {
      const double c = std::cos(((*data)[i].angle_deg - p(0)) * kDeg);
      r(static_cast<Eigen::Index>(i)) = p(1) * c * c + p(2) - (*data)[i].counts;
    }
    return r;
  };
  pr.jacobian = [data](const Eigen::VectorXd& p) {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(data->size()), 3);
    for (std::size_t i = 0; i < data->size(); ++i) {
      const double d = ((*data)[i].angle_deg - p(0)) * kDeg;
      j.row(static_cast<Eigen::Index>(i)) << p(1) * std::sin(2.0 * d) * kDeg, std::cos(d) * std::cos(d), 1.0;
    }
    return j;
  };

  LmOptions lm = lm_options;
  if (lm.scale.size() != 3) {
    const double s = std::max({std::abs(p0(1)), std::abs(p0(2)), 1e-12});
    lm.scale = Eigen::Vector3d(10.0, s, s);
  }
  const LmResult r = levenberg_marquardt(pr, p0, lm);

  FitResult out;
  out.names = {"theta0_deg", "amplitude", "offset"};
  out.values = r.params;
  // a negative amplitude is the same curve shifted by 90 degrees
  if (out.values(1) < 0.0) {
    out.values(0) += 90.0;
    out.values(2) += out.values(1);
    out.values(1) = -out.values(1);
  }
  out.values(0) = wrap180(out.values(0));
  const double dof = static_cast<double>(scan.size()) - 3.0;
  int deficient = 0;
  out.covariance = covariance_from_jacobian(pr.jacobian(out.values), 2.0 * r.cost / dof, &deficient);
  out.residuals = r.residuals;
  out.residual_norm = r.residuals.norm();
  out.converged = r.converged;
  out.iterations = r.iterations;
  out.diagnostic = r.diagnostic;
  const double a = out.values(1), c = out.values(2);
  if (!(c > 0.0 ? a / c >= 0.05 : a > 0.0)) out.warnings.push_back("unpolarized: amplitude / offset below 0.05");
  if (deficient > 0) out.warnings.push_back("singular normal matrix: some parameters unidentifiable");
  return out;
}

ClusterResult cluster_orientations(std::span<const double> angles, double bin_width) {
  if (!(bin_width > 0.0) || bin_width > 180.0) throw InvalidInput("cluster_orientations: bad bin width");
  ClusterResult out;
  out.bin_width_deg = bin_width;
  out.histogram.assign(static_cast<std::size_t>(std::ceil(180.0 / bin_width - 1e-9)), 0);
  std::array<double, 3> sx{}, sy{};
  for (double raw : angles) {
    if (!std::isfinite(raw)) throw InvalidInput("cluster_orientations: non-finite angle");
    const double a = wrap180(raw);
    std::array<double, 3> dist{};
    for (int c = 0; c < 3; ++c) {
      const double d = std::abs(a - kOrientationClasses[static_cast<std::size_t>(c)]);
      dist[static_cast<std::size_t>(c)] = std::min(d, 180.0 - d);
    }
    const auto best = static_cast<int>(std::min_element(dist.begin(), dist.end()) - dist.begin());
    bool tie = false;
    for (int c = 0; c < 3; ++c)
      if (c != best && std::abs(dist[static_cast<std::size_t>(c)] - dist[static_cast<std::size_t>(best)]) < 1e-9)
        tie = true;
    out.assignment.push_back(best);
    out.tie.push_back(tie);
    const auto b = static_cast<std::size_t>(best);
    ++out.counts[b];
    // 60 degree periodic statistics
    const double phase = 6.0 * a * kDeg;
    sx[b] += std::cos(phase);
    sy[b] += std::sin(phase);
    auto bin = static_cast<std::size_t>(a / bin_width);
    out.histogram[std::min(bin, out.histogram.size() - 1)]++;
  }
  for (std::size_t c = 0; c < 3; ++c) {
    if (out.counts[c] == 0) {
      out.circular_mean_deg[c] = std::numeric_limits<double>::quiet_NaN();
      out.circular_std_deg[c] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double n = out.counts[c];
    const double rbar = std::hypot(sx[c], sy[c]) / n;
    // mean offset from the class centre, folded to (-30, 30]
    const double offset = std::atan2(sy[c], sx[c]) / 6.0 / kDeg;
    out.circular_mean_deg[c] = wrap180(kOrientationClasses[c] + offset);
    out.circular_std_deg[c] = rbar > 0.0 ? std::sqrt(-2.0 * std::log(std::min(rbar, 1.0))) / 6.0 / kDeg
                                         : std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace triplet
