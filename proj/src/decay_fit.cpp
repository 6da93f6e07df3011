#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "triplet/inference.hpp"

namespace triplet {

namespace {

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

struct DecayLayout {
  bool fit_offset = true;
  bool fit_exponent = true;
  double fixed_n = 1.0;
  double n_lo = 0.5, n_hi = 3.0;

  Eigen::Index size() const { return 2 + (fit_exponent ? 1 : 0) + (fit_offset ? 1 : 0); }
  // internal q -> (A, T2, n, c)
  Eigen::Vector4d physical(const Eigen::VectorXd& q) const {
    Eigen::Index i = 2;
    const double n = fit_exponent ? n_lo + (n_hi - n_lo) * sigmoid(q(i++)) : fixed_n;
    const double c = fit_offset ? q(i) : 0.0;
    return {q(0), std::exp(q(1)), n, c};
  }
  // d physical / d internal, diagonal entries in (A, T2, n, c) order
  Eigen::MatrixXd gradient(const Eigen::VectorXd& q) const {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(4, size());
    g(0, 0) = 1.0;
    g(1, 1) = std::exp(q(1));
    Eigen::Index i = 2;
    if (fit_exponent) {
      const double s = sigmoid(q(i));
      g(2, i) = (n_hi - n_lo) * s * (1.0 - s);
      ++i;
    }
    if (fit_offset) g(3, i) = 1.0;
    return g;
  }
};

}  // namespace

FitResult fit_decay(const CoherenceTrace& trace, const DecayFitOptions& options) {
  const auto& s = trace.samples;
  if (s.size() < 5) throw Underdetermined("fit_decay: need at least 5 samples");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isfinite(s[i].t_us) || !std::isfinite(s[i].signal) || s[i].t_us < 0.0)
      throw InvalidInput("fit_decay: bad sample " + std::to_string(i));
    if (i > 0 && !(s[i].t_us > s[i - 1].t_us)) throw InvalidInput("fit_decay: times must be ascending");
  }
  if (!(options.min_exponent > 0.0) || !(options.max_exponent > options.min_exponent))
    throw InvalidInput("fit_decay: bad exponent bounds");

  DecayLayout lay;
  lay.fit_offset = options.fit_offset;
  lay.fit_exponent = !options.fixed_exponent.has_value();
  lay.fixed_n = options.fixed_exponent.value_or(1.0);
  lay.n_lo = options.min_exponent;
  lay.n_hi = options.max_exponent;
  if (!lay.fit_exponent && !(lay.fixed_n > 0.0)) throw InvalidInput("fit_decay: fixed exponent must be > 0");

  const auto data = std::make_shared<const std::vector<TraceSample>>(s);
  LeastSquaresProblem pr;
  pr.residuals = [data, lay](const Eigen::VectorXd& q) {
    const Eigen::Vector4d p = lay.physical(q);
    Eigen::VectorXd r(static_cast<Eigen::Index>(data->size()));
    for (std::size_t i = 0; i < data->size(); ++i) {
      const auto& x = (*data)[i];
      r(static_cast<Eigen::Index>(i)) = p(0) * std::exp(-std::pow(x.t_us / p(1), p(2))) + p(3) - x.signal;
    }
    return r;
  };
  pr.jacobian = [data, lay](const Eigen::VectorXd& q) {
    const Eigen::Vector4d p = lay.physical(q);
    const Eigen::MatrixXd g = lay.gradient(q);
    Eigen::MatrixXd jp(static_cast<Eigen::Index>(data->size()), 4);
    for (std::size_t i = 0; i < data->size(); ++i) {
      const double t = (*data)[i].t_us;
      const double u = t > 0.0 ? std::pow(t / p(1), p(2)) : 0.0;
      const double e = std::exp(-u);
      const auto row = static_cast<Eigen::Index>(i);
      jp(row, 0) = e;
      jp(row, 1) = p(0) * e * u * p(2) / p(1);
      jp(row, 2) = t > 0.0 ? -p(0) * e * u * std::log(t / p(1)) : 0.0;
      jp(row, 3) = 1.0;
    }
    return (jp * g).eval();
  };

  // initial values
  const std::size_t tail = std::max<std::size_t>(1, s.size() / 20);
  double c0 = 0.0;
  if (lay.fit_offset) {
    for (std::size_t i = s.size() - tail; i < s.size(); ++i) c0 += s[i].signal;
    c0 /= static_cast<double>(tail);
  }
  const double a0 = s.front().signal - c0;
  const double span = s.back().t_us - s.front().t_us;
  double t2_0 = 2.0 * s.back().t_us;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (a0 != 0.0 && (s[i].signal - c0) / a0 < std::exp(-1.0)) {
      t2_0 = std::max(s[i].t_us, 1e-9);
      break;
    }
  }

  FitResult out;
  out.names = {"amplitude", "t2_us", "exponent", "offset"};

  const double drop = s.front().signal - s.back().signal;
  const bool decaying = std::abs(s.front().signal) > 0.0 && drop > 0.1 * std::abs(s.front().signal);

  LmResult best;
  best.cost = std::numeric_limits<double>::infinity();
  std::vector<double> n_starts = lay.fit_exponent ? std::vector<double>{1.0, 2.0} : std::vector<double>{lay.fixed_n};
  for (double n0 : n_starts) {
    Eigen::VectorXd q0(lay.size());
    q0(0) = a0 == 0.0 ? 1e-6 : a0;
    q0(1) = std::log(t2_0);
    Eigen::Index i = 2;
    if (lay.fit_exponent) q0(i++) = logit(std::clamp((n0 - lay.n_lo) / (lay.n_hi - lay.n_lo), 1e-3, 1.0 - 1e-3));
    if (lay.fit_offset) q0(i) = c0;
    LmOptions lm = options.lm;
    if (lm.scale.size() != q0.size()) {
      lm.scale = Eigen::VectorXd::Ones(q0.size());
      lm.scale(0) = std::max(std::abs(q0(0)), 1e-9);
      if (lay.fit_offset) lm.scale(q0.size() - 1) = std::max(std::abs(q0(0)), 1e-9);
    }
    LmResult r = levenberg_marquardt(pr, q0, lm);
    if (r.cost < best.cost) best = std::move(r);
  }

  const Eigen::Vector4d p = lay.physical(best.params);
  const double dof = static_cast<double>(s.size()) - static_cast<double>(lay.size());
  const double s2 = dof > 0.0 ? 2.0 * best.cost / dof : 0.0;
  const Eigen::MatrixXd g = lay.gradient(best.params);
  int deficient = 0;
  const Eigen::MatrixXd cq = covariance_from_jacobian(best.jacobian, s2, &deficient);
  out.values = p;
  out.covariance = g * cq * g.transpose();
  out.residuals = best.residuals;
  out.residual_norm = best.residuals.norm();
  out.converged = best.converged;
  out.iterations = best.iterations;
  out.diagnostic = best.diagnostic;
  if (deficient > 0) out.warnings.push_back("singular normal matrix: some parameters unidentifiable");
  if (lay.fit_exponent && (p(2) - lay.n_lo < 1e-3 || lay.n_hi - p(2) < 1e-3))
    out.warnings.push_back("stretch exponent at its bound");
  if (!decaying || !(p(0) > 0.0) || p(1) > 10.0 * span) {
    out.converged = false;
    out.diagnostic = "trace is not decaying";
  }
  return out;
}

// ---------------------------------------------------------------------------

double cpmg_scaling_model(double n, double t0, double gamma_s, double t_sat, double k) {
  const double la = -k * (std::log(t0) + gamma_s * std::log(n));
  const double lb = -k * std::log(t_sat);
  const double m = std::max(la, lb);
  return std::exp(-(m + std::log(std::exp(la - m) + std::exp(lb - m))) / k);
}

FitResult fit_cpmg_scaling(std::span<const CpmgPoint> points, const CpmgFitOptions& options) {
  if (points.size() < 4) throw Underdetermined("fit_cpmg_scaling: need at least 4 points");
  for (const auto& p : points)
    if (!(p.n_pulses >= 1.0) || !(p.t2_us > 0.0) || !std::isfinite(p.t2_us))
      throw InvalidInput("fit_cpmg_scaling: points need N >= 1 and T2 > 0");
  {
    double lo = points[0].n_pulses, hi = lo;
    for (const auto& p : points) lo = std::min(lo, p.n_pulses), hi = std::max(hi, p.n_pulses);
    if (hi == lo) throw Underdetermined("fit_cpmg_scaling: need at least two distinct pulse counts");
  }
  const double k = options.sharpness;
  if (!(k > 0.0)) throw InvalidInput("fit_cpmg_scaling: sharpness must be > 0");
  const std::optional<double> cap = options.t_sat_max_us;
  if (cap && !(*cap > 0.0)) throw InvalidInput("fit_cpmg_scaling: T_sat bound must be > 0");

  const auto data = std::make_shared<const std::vector<CpmgPoint>>(points.begin(), points.end());
  // q = (log T0, gamma_s, log T_sat) or (log T0, gamma_s, logit(T_sat / cap))
  auto log_ts = [cap](double q2) { return cap ? std::log(*cap) + std::log(sigmoid(q2)) : q2; };
  auto dlog_ts = [cap](double q2) { return cap ? 1.0 - sigmoid(q2) : 1.0; };

  LeastSquaresProblem pr;
  pr.residuals = [=](const Eigen::VectorXd& q) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(data->size()));
    for (std::size_t i = 0; i < data->size(); ++i) {
      const auto& p = (*data)[i];
      const double model = cpmg_scaling_model(p.n_pulses, std::exp(q(0)), q(1), std::exp(log_ts(q(2))), k);
      r(static_cast<Eigen::Index>(i)) = std::log(model) - std::log(p.t2_us);
    }
    return r;
  };
  pr.jacobian = [=](const Eigen::VectorXd& q) {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(data->size()), 3);
    for (std::size_t i = 0; i < data->size(); ++i) {
      const double ln = std::log((*data)[i].n_pulses);
      const double la = -k * (q(0) + q(1) * ln);
      const double lb = -k * log_ts(q(2));
      // weights a / (a + b) and b / (a + b)
      const double wa = 1.0 / (1.0 + std::exp(lb - la));
      const double wb = 1.0 - wa;
      const auto row = static_cast<Eigen::Index>(i);
      j(row, 0) = wa;
      j(row, 1) = wa * ln;
      j(row, 2) = wb * dlog_ts(q(2));
    }
    return j;
  };

  // initial values: log-log slope over the lower half, saturation well above the data
  std::vector<CpmgPoint> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.n_pulses < b.n_pulses; });
  const std::size_t half = std::max<std::size_t>(2, sorted.size() / 2);
  const double g0 = (std::log(sorted[half - 1].t2_us) - std::log(sorted[0].t2_us)) /
                    std::max(std::log(sorted[half - 1].n_pulses) - std::log(sorted[0].n_pulses), 1e-12);
  double t_max = 0.0;
  for (const auto& p : sorted) t_max = std::max(t_max, p.t2_us);
  Eigen::Vector3d q0(std::log(sorted[0].t2_us) - g0 * std::log(sorted[0].n_pulses), g0, 0.0);
  if (cap) {
    q0(2) = logit(std::clamp(std::min(3.0 * t_max, 0.999 * *cap) / *cap, 1e-6, 1.0 - 1e-6));
  } else {
    q0(2) = std::log(3.0 * t_max);
  }

  LmOptions lm = options.lm;
  if (lm.scale.size() != 3) lm.scale = Eigen::Vector3d::Ones();
  const LmResult r = levenberg_marquardt(pr, q0, lm);

  const double t0 = std::exp(r.params(0));
  const double ts = std::exp(log_ts(r.params(2)));
  Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
  g(0, 0) = t0;
  g(1, 1) = 1.0;
  g(2, 2) = ts * dlog_ts(r.params(2));
  const double dof = static_cast<double>(points.size()) - 3.0;
  const double s2 = dof > 0.0 ? 2.0 * r.cost / dof : 0.0;
  int deficient = 0;
  const Eigen::MatrixXd cq = covariance_from_jacobian(r.jacobian, s2, &deficient);

  FitResult out;
  out.names = {"t0_us", "gamma_s", "t_sat_us"};
  out.values = Eigen::Vector3d(t0, r.params(1), ts);
  out.covariance = g * cq * g.transpose();
  out.residuals = r.residuals;
  out.residual_norm = r.residuals.norm();
  out.converged = r.converged;
  out.iterations = r.iterations;
  out.diagnostic = r.diagnostic;
  if (deficient > 0) out.warnings.push_back("singular normal matrix: some parameters unidentifiable");
  if (ts > 2.0 * t_max) out.warnings.push_back("no saturation observed: T_sat is a lower bound at best");
  return out;
}

}  // namespace triplet
