#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "triplet/coherent.hpp"

namespace triplet {

namespace {

constexpr double kPi = std::numbers::pi;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double integrate_panel(const std::function<double(double)>& f, double a, double b, double tol) {
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 15>::integrate(f, a, b, 30, tol);
}

}  // namespace

double spectral_density(const NoiseComponent& c, double omega) {
  return std::visit(
      overloaded{
          [](const WhiteNoise& w) { return w.s0; },
          [&](const LorentzianNoise& l) {
            const double amp = 2.0 * kPi * l.b_mhz;
            const double x = omega * l.tau_c_us;
            return 2.0 * amp * amp * l.tau_c_us / (1.0 + x * x);
          },
          [&](const TabulatedNoise& t) {
            const auto& w = t.omega;
            if (w.empty() || omega < w.front() || omega > w.back()) return 0.0;
            const auto it = std::upper_bound(w.begin(), w.end(), omega);
            if (it == w.end()) return t.density.back();
            const auto i = static_cast<std::size_t>(it - w.begin());
            const double f = (omega - w[i - 1]) / (w[i] - w[i - 1]);
            return t.density[i - 1] + f * (t.density[i] - t.density[i - 1]);
          }},
      c);
}

void NoiseModel::validate() const {
  for (double t : t1_us)
    if (!(t > 0.0) || std::isnan(t)) throw InvalidInput("noise: T1 lifetimes must be > 0");
  for (const auto& c : dephasing) {
    std::visit(overloaded{[](const WhiteNoise& w) {
                            if (!(w.s0 >= 0.0) || !std::isfinite(w.s0))
                              throw InvalidInput("noise: white s0 must be >= 0");
                          },
                          [](const LorentzianNoise& l) {
                            if (!(l.b_mhz >= 0.0) || !(l.tau_c_us >= 0.0) ||
                                !std::isfinite(l.b_mhz) || !std::isfinite(l.tau_c_us))
                              throw InvalidInput("noise: Lorentzian b and tau_c must be >= 0");
                          },
                          [](const TabulatedNoise& t) {
                            if (t.omega.size() != t.density.size() || t.omega.size() < 2)
                              throw InvalidInput("noise: tabulated spectrum needs >= 2 points");
                            for (std::size_t i = 0; i < t.omega.size(); ++i) {
                              if (t.density[i] < 0.0 || t.omega[i] < 0.0 ||
                                  (i > 0 && !(t.omega[i] > t.omega[i - 1])))
                                throw InvalidInput("noise: tabulated spectrum malformed");
                            }
                          }},
               c);
  }
}

double NoiseModel::spectral_density(double omega) const {
  double s = 0.0;
  for (const auto& c : dephasing) s += triplet::spectral_density(c, omega);
  return s;
}

double NoiseModel::t1_limit(const SublevelPair& pair) const {
  if (!pair.valid()) throw InvalidInput("t1_limit: invalid pair");
  auto slot = [](Sublevel s) { return s == Sublevel::Tx ? 0 : (s == Sublevel::Ty ? 1 : 2); };
  return 2.0 / (1.0 / t1_us[slot(pair.a)] + 1.0 / t1_us[slot(pair.b)]);
}

// ---------------------------------------------------------------------------

double filter_function_sum(int n_pulses, double x) {
  // coefficients +1 at t=0, 2(-1)^k at the pulses, (-1)^(N+1) at t
  std::complex<double> acc(1.0, 0.0);
  for (int k = 1; k <= n_pulses; ++k) {
    const double s = (k - 0.5) / n_pulses;
    acc += 2.0 * ((k % 2) ? -1.0 : 1.0) * std::polar(1.0, x * s);
  }
  acc += ((n_pulses + 1) % 2 ? -1.0 : 1.0) * std::polar(1.0, x);
  return 0.5 * std::norm(acc);
}

double filter_function(int n_pulses, double x) {
  if (n_pulses < 0) throw InvalidInput("filter_function: negative pulse count");
  if (n_pulses == 0) {
    const double s = std::sin(0.5 * x);
    return 2.0 * s * s;
  }
  const double n = n_pulses;
  const double c = std::cos(x / (2.0 * n));
  if (std::abs(c) < 1e-3) return filter_function_sum(n_pulses, x);
  const double s4 = std::pow(std::sin(x / (4.0 * n)), 4);
  const double h = (n_pulses % 2 == 0) ? std::sin(0.5 * x) : std::cos(0.5 * x);
  return 8.0 * s4 * h * h / (c * c);
}

double filter_integral(const std::function<double(double)>& s_omega, int n_pulses, double t_us,
                       double rel_tol) {
  if (n_pulses < 0) throw InvalidInput("filter_integral: negative pulse count");
  if (!(t_us >= 0.0) || !std::isfinite(t_us)) throw InvalidInput("filter_integral: bad time");
  if (t_us == 0.0) return 0.0;
  const double t = t_us;
  auto integrand = [&](double x) {
    return s_omega(x / t) * filter_function(n_pulses, x) / (x * x);
  };
  // F_N is periodic in x = omega t with period 2 pi (Ramsey) or 4 pi N, mean 2N + 1
  const double period = n_pulses == 0 ? 2.0 * kPi : 4.0 * kPi * n_pulses;
  const double mean_f = 2.0 * n_pulses + 1.0;
  const int panels_per_period = n_pulses == 0 ? 2 : 4 * n_pulses;
  const double panel_tol = std::max(rel_tol * 1e-3, 1e-13);

  auto tail = [&](double x_from) {
    // int_X^inf S(x/t) mean_f / x^2 dx with u = 1/x
    auto g = [&](double u) { return u > 0.0 ? s_omega(1.0 / (u * t)) : s_omega(INFINITY); };
    return mean_f * integrate_panel(g, 0.0, 1.0 / x_from, panel_tol);
  };

  double sum = 0.0;
  double x = 0.0;
  const int min_periods = n_pulses == 0 ? 8 : 4;
  for (int p = 0; p < 200000; ++p) {
    for (int k = 0; k < panels_per_period; ++k) {
      sum += integrate_panel(integrand, x, x + kPi, panel_tol);
      x += kPi;
    }
    if (p + 1 < min_periods) continue;
    const double tl = tail(x);
    // the period-averaged tail is accurate to O(period / x)
    if (tl * period / x <= 0.1 * rel_tol * (sum + tl) || sum + tl == 0.0) {
      return t / kPi * (sum + tl);
    }
  }
  return t / kPi * (sum + tail(x));
}

double decay_exponent(const NoiseModel& noise, int n_pulses, double t_us) {
  double chi = 0.0;
  for (const auto& c : noise.dephasing) {
    if (const auto* w = std::get_if<WhiteNoise>(&c)) {
      chi += 0.5 * w->s0 * t_us;
    } else if (const auto* l = std::get_if<LorentzianNoise>(&c); l && (l->b_mhz == 0.0 || l->tau_c_us == 0.0)) {
      continue;
    } else {
      chi += filter_integral([&](double w) { return spectral_density(c, w); }, n_pulses, t_us);
    }
  }
  return chi;
}

}  // namespace triplet
