#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "triplet/inference.hpp"

namespace triplet {

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

double modulation_frequency(const CoherenceTrace& trace) {
  const auto& s = trace.samples;
  const std::size_t n = s.size();
  if (n < 8) throw NoModulation("modulation_frequency: need at least 8 samples");
  for (std::size_t i = 1; i < n; ++i)
    if (!(s[i].t_us > s[i - 1].t_us)) throw InvalidInput("modulation_frequency: times must be ascending");
  const double span = s.back().t_us - s.front().t_us;

  double mean = 0.0, peak_abs = 0.0;
  for (const auto& x : s) mean += x.signal, peak_abs = std::max(peak_abs, std::abs(x.signal));
  mean /= static_cast<double>(n);
  std::vector<double> y(n), w(n);
  double rms = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = s[i].signal - mean;
    rms += y[i] * y[i];
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * (s[i].t_us - s.front().t_us) / span);
  }
  rms = std::sqrt(rms / static_cast<double>(n));
  if (!(rms > 1e-9 * peak_abs)) throw NoModulation("no modulation detected");

  const double dt = span / static_cast<double>(n - 1);
  const double f_min = 2.0 / span;  // at least two revivals
  const double f_max = 0.5 / dt;
  if (!(f_max > f_min)) throw NoModulation("trace too short for two modulation periods");
  const double df = 1.0 / (8.0 * span);

  auto amplitude = [&](double f) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += w[i] * y[i] * std::polar(1.0, -2.0 * kPi * f * s[i].t_us);
    return std::abs(acc);
  };

  // the scan starts below f_min so that an edge maximum can be recognised
  const double f_start = std::max(df, 0.5 * f_min);
  const auto count = static_cast<std::size_t>((f_max - f_start) / df) + 1;
  std::vector<double> a(count);
  for (std::size_t k = 0; k < count; ++k) a[k] = amplitude(f_start + df * static_cast<double>(k));
  const auto it = std::max_element(a.begin(), a.end());
  const auto k = static_cast<std::size_t>(it - a.begin());
  if (k == 0 || k + 1 == count) throw NoModulation("no modulation peak inside the search band");
  // Gaussian (log-parabola) interpolation of the Hann main lobe
  const double l0 = std::log(a[k - 1]), l1 = std::log(a[k]), l2 = std::log(a[k + 1]);
  const double denom = l0 - 2.0 * l1 + l2;
  const double shift = denom < 0.0 ? 0.5 * (l0 - l2) / denom : 0.0;
  const double f = f_start + df * (static_cast<double>(k) + std::clamp(shift, -0.5, 0.5));
  if (f * span < 2.0) throw NoModulation("fewer than two modulation periods in the trace");
  return f;
}

FitResult fit_larmor(std::span<const FieldTrace> traces) {
  if (traces.size() < 3) throw Underdetermined("fit_larmor: need at least 3 field values");
  std::vector<double> b_t, f, w;
  FitResult out;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& tr = traces[i];
    if (!std::isfinite(tr.field_mt) || tr.field_mt < 0.0)
      throw InvalidInput("fit_larmor: field magnitudes must be >= 0");
    try {
      const double fi = modulation_frequency(tr.trace);
      const double span = tr.trace.samples.back().t_us - tr.trace.samples.front().t_us;
      b_t.push_back(tr.field_mt * 1e-3);
      f.push_back(fi);
      w.push_back(span * span);  // frequency resolution scales as 1 / span
    } catch (const NoModulation& e) {
      out.warnings.push_back("trace " + std::to_string(i) + " excluded: " + e.what());
    }
  }
  if (f.size() < 3)
    throw Underdetermined("fit_larmor: fewer than 3 traces with detectable modulation");

  double sbb = 0.0, sfb = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sbb += w[i] * b_t[i] * b_t[i], sfb += w[i] * f[i] * b_t[i];
  if (!(sbb > 0.0)) throw Underdetermined("fit_larmor: all remaining fields are zero");
  const double slope = sfb / sbb;
  Eigen::VectorXd r(static_cast<Eigen::Index>(f.size()));
  double chi2 = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    r(static_cast<Eigen::Index>(i)) = std::sqrt(w[i]) * (slope * b_t[i] - f[i]);
    chi2 += r(static_cast<Eigen::Index>(i)) * r(static_cast<Eigen::Index>(i));
  }
  const double s2 = chi2 / static_cast<double>(f.size() - 1);

  out.names = {"gamma_mhz_per_t"};
  out.values = Eigen::VectorXd::Constant(1, slope);
  out.covariance = Eigen::MatrixXd::Constant(1, 1, s2 / sbb);
  out.residuals = r;
  out.residual_norm = std::sqrt(chi2);
  out.converged = true;
  out.iterations = 1;
  out.diagnostic = "weighted linear regression through the origin on " + std::to_string(f.size()) + " traces";
  return out;
}

}  // namespace triplet
