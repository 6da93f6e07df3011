#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "triplet/coherent.hpp"

using namespace triplet;

namespace {

constexpr double kPi = std::numbers::pi;

TripletModel pc_hbn() { return {{1891.0, 459.0}, {}, kFreeElectronG}; }

// Time-domain decay exponent for Ornstein-Uhlenbeck noise,
// chi = (1/2) int int y(t1) y(t2) B^2 exp(-|t1 - t2| / tau_c), with y the
// +-1 switching function of an N-pulse CPMG sequence. Closed form per segment pair.
double ou_chi_time_domain(double b_mhz, double tau_c, int n, double t) {
  std::vector<double> edges{0.0};
  for (int k = 1; k <= n; ++k) edges.push_back(t * (k - 0.5) / n);
  edges.push_back(t);
  const double var = std::pow(2.0 * kPi * b_mhz, 2);
  double total = 0.0;
  const std::size_t m = edges.size() - 1;
  for (std::size_t j = 0; j < m; ++j) {
    const double lj = edges[j + 1] - edges[j];
    const double sj = (j % 2) ? -1.0 : 1.0;
    // same segment: 2 tau (L - tau (1 - e^{-L/tau}))
    total += 2.0 * tau_c * (lj + tau_c * std::expm1(-lj / tau_c));
    for (std::size_t k = j + 1; k < m; ++k) {
      const double lk = edges[k + 1] - edges[k];
      const double sk = (k % 2) ? -1.0 : 1.0;
      const double gap = edges[k] - edges[j + 1];
      total += 2.0 * sj * sk * tau_c * tau_c * (-std::expm1(-lj / tau_c)) * (-std::expm1(-lk / tau_c)) *
               std::exp(-gap / tau_c);
    }
  }
  return 0.5 * var * total;
}

NoiseModel lorentzian_only(double b, double tau_c) {
  NoiseModel n;
  n.dephasing = {LorentzianNoise{b, tau_c}};
  return n;
}

double slope_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Local maxima of a single-sided amplitude spectrum evaluated on a fine grid.
std::vector<std::pair<double, double>> spectrum_peaks(const CoherenceTrace& tr, double f_lo, double f_hi,
                                                      double df) {
  double mean = 0.0;
  for (const auto& s : tr.samples) mean += s.signal;
  mean /= static_cast<double>(tr.samples.size());
  std::vector<double> f, a;
  for (double v = f_lo; v <= f_hi; v += df) {
    std::complex<double> acc = 0.0;
    const std::size_t n = tr.samples.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (n - 1));
      acc += w * (tr.samples[i].signal - mean) * std::polar(1.0, -2.0 * kPi * v * tr.samples[i].t_us);
    }
    f.push_back(v);
    a.push_back(std::abs(acc));
  }
  std::vector<std::pair<double, double>> peaks;
  for (std::size_t i = 1; i + 1 < a.size(); ++i)
    if (a[i] > a[i - 1] && a[i] >= a[i + 1]) peaks.emplace_back(f[i], a[i]);
  std::sort(peaks.begin(), peaks.end(), [](auto& x, auto& y) { return x.second > y.second; });
  return peaks;
}

}  // namespace

TEST_CASE("pulse sequences") {
  SUBCASE("validation") {
    CHECK_THROWS_AS(PulseSequence({Delay{1.0}}), InvalidInput);
    CHECK_THROWS_AS(PulseSequence({Readout{kPairYZ}, Delay{1.0}}), InvalidInput);
    CHECK_THROWS_AS(PulseSequence({Delay{-1.0}, Readout{kPairYZ}}), InvalidInput);
    CHECK_THROWS_AS(PulseSequence({Readout{kPairYZ}, Readout{kPairYZ}}), InvalidInput);
    CHECK_THROWS_AS(PulseSequence({Pulse{{Sublevel::Tx, Sublevel::Tx}, 1, 0, 1}, Readout{kPairYZ}}), InvalidInput);
  }
  SUBCASE("CPMG structure round trip") {
    for (int n : {0, 1, 2, 7, 64}) {
      const auto s = analyze_sequence(make_cpmg(kPairXZ, n, 12.5));
      CHECK(s.n_pulses == n);
      CHECK(s.pair == kPairXZ);
      CHECK(s.free_time_us == doctest::Approx(12.5));
    }
  }
  SUBCASE("non-uniform spacing is unsupported") {
    const double r = 1e4;
    PulseSequence seq({Pulse{kPairYZ, r, 0, 0.25 / r}, Delay{1.0}, Pulse{kPairYZ, r, 0, 0.5 / r}, Delay{2.0},
                       Pulse{kPairYZ, r, 0, 0.5 / r}, Delay{1.5}, Pulse{kPairYZ, r, 0, 0.25 / r},
                       Readout{kPairYZ}});
    CHECK_THROWS_AS(analyze_sequence(seq), UnsupportedSequence);
    CHECK_THROWS_AS(coherence_function(NoiseModel{}, seq, std::vector<double>{1.0}), UnsupportedSequence);
  }
}

TEST_CASE("filter function") {
  SUBCASE("closed form matches the pulse-time sum") {
    for (int n : {0, 1, 2, 3, 8, 33}) {
      for (double x = 0.01; x < 400.0; x += 0.37) {
        CHECK(filter_function(n, x) == doctest::Approx(filter_function_sum(n, x)).epsilon(1e-10).scale(2.0 * n + 1.0));
      }
    }
  }
  SUBCASE("vanishes at zero frequency for N >= 1") {
    for (int n : {1, 2, 5, 64}) CHECK(filter_function(n, 0.0) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("white-noise integral identity int F/(pi w^2) = t/2") {
    for (int n : {0, 1, 2, 5, 16}) {
      for (double t : {0.5, 3.0, 40.0}) {
        const double chi = filter_integral([](double) { return 1.0; }, n, t);
        CHECK(chi == doctest::Approx(0.5 * t).epsilon(1e-5).scale(0));
      }
    }
  }
  SUBCASE("Lorentzian quadrature matches the time-domain oracle") {
    for (int n : {0, 1, 2, 4, 16, 64}) {
      for (double tau_c : {0.3, 5.0, 1000.0}) {
        for (double t : {1.0, 20.0, 150.0}) {
          const double b = 0.05;
          const double q = decay_exponent(lorentzian_only(b, tau_c), n, t);
          const double ref = ou_chi_time_domain(b, tau_c, n, t);
          CHECK(q == doctest::Approx(ref).epsilon(1e-5).scale(0));
        }
      }
    }
  }
}

TEST_CASE("coherence function") {
  SUBCASE("white noise: T2 independent of N and analytic decay") {
    NoiseModel noise;
    noise.dephasing = {WhiteNoise{0.2}};
    noise.t1_us = {100.0, 100.0, 50.0};
    const double t1 = noise.t1_limit(kPairXZ);
    CHECK(t1 == doctest::Approx(2.0 / (1.0 / 100 + 1.0 / 50)));
    const auto grid = time_grid(0.0, 30.0, 31);
    for (int n : {0, 1, 4, 32}) {
      const auto tr = coherence_function(noise, kPairXZ, n, grid);
      for (const auto& s : tr.samples) CHECK(s.signal == doctest::Approx(std::exp(-0.1 * s.t_us - s.t_us / t1)));
      CHECK(t2_effective(kPairXZ, n, noise) == doctest::Approx(1.0 / (0.1 + 1.0 / t1)));
    }
  }
  SUBCASE("zero dephasing is pure lifetime decay") {
    NoiseModel noise;
    noise.t1_us = {400.0, 20.0, 240.0};
    const double t1 = noise.t1_limit(kPairXZ);
    CHECK(t1 == doctest::Approx(300.0));
    const auto tr = coherence_function(noise, make_cpmg(kPairXZ, 8, 1.0), time_grid(0, 600, 13));
    for (const auto& s : tr.samples) CHECK(s.signal == doctest::Approx(std::exp(-s.t_us / 300.0)).epsilon(1e-14));
    CHECK(t2_effective(kPairXZ, 8, noise) == doctest::Approx(300.0).epsilon(1e-9));
  }
  SUBCASE("normalization and bounds") {
    const auto& p = coherence_preset("Pc-H14-4K");
    const auto tr = coherence_function(p.noise, kPairYZ, 1, time_grid(0, 20, 41));
    CHECK(tr.samples.front().signal == 1.0);
    for (const auto& s : tr.samples) CHECK(std::abs(s.signal) <= 1.0 + 1e-9);
  }
  SUBCASE("Lorentzian noise with long correlation time: T2 ~ N^(2/3)") {
    const auto noise = lorentzian_only(0.05, 1e5);
    std::vector<double> ns, t2;
    for (int n : {1, 2, 4, 8, 16, 32, 64}) {
      ns.push_back(n);
      t2.push_back(t2_effective(kPairYZ, n, noise));
    }
    CHECK(std::abs(slope_loglog(ns, t2) - 2.0 / 3.0) <= 0.05);
  }
  SUBCASE("CPMG monotonicity and approach to the lifetime limit") {
    const auto& p = coherence_preset("Pc-D14-4K");
    const double limit = p.noise.t1_limit(p.protected_pair);
    double previous = 0.0;
    for (int n = 1; n <= 40; ++n) {
      const double t2 = t2_effective(p.protected_pair, n, p.noise);
      CHECK(t2 >= previous - 1e-6);
      CHECK(t2 <= limit);
      previous = t2;
    }
    const double t2_large = t2_effective(p.protected_pair, 2048, p.noise);
    CHECK(t2_large < limit);
    CHECK(t2_large > 0.998 * limit);
  }
}

TEST_CASE("presets") {
  SUBCASE("Hahn-echo calibration targets") {
    CHECK(t2_effective(kPairYZ, 1, coherence_preset("Pc-H14-RT").noise) == doctest::Approx(2.4).epsilon(1e-8));
    CHECK(t2_effective(kPairYZ, 1, coherence_preset("Pc-H14-4K").noise) == doctest::Approx(3.4).epsilon(1e-8));
    CHECK(t2_effective(kPairYZ, 1, coherence_preset("Pc-D14-4K").noise) == doctest::Approx(39.8).epsilon(1e-8));
  }
  SUBCASE("deuteration lowers the noise amplitude") {
    const double bh = std::get<LorentzianNoise>(coherence_preset("Pc-H14-4K").noise.dephasing[0]).b_mhz;
    const double bd = std::get<LorentzianNoise>(coherence_preset("Pc-D14-4K").noise.dephasing[0]).b_mhz;
    CHECK(bh > 10.0 * bd);
  }
  SUBCASE("unknown preset") { CHECK_THROWS_AS(coherence_preset("Pc-X"), InvalidInput); }
}

TEST_CASE("Rabi trace") {
  const auto model = pc_hbn();
  const double rabi = 2.5;
  SUBCASE("pi and 2 pi pulses") {
    const std::vector<double> t{0.0, 0.5 / rabi, 1.0 / rabi};
    const auto tr = rabi_trace(model, kPairYZ, rabi, t);
    CHECK(tr.samples[0].signal == doctest::Approx(0.0));
    CHECK(tr.samples[1].signal == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(tr.samples[2].signal) < 1e-8);
  }
  SUBCASE("contrast scale sets the peak amplitude") {
    RabiOptions opt;
    opt.contrast_scale = 0.07;
    const auto tr = rabi_trace(model, kPairYZ, rabi, time_grid(0, 2, 401), opt);
    double peak = 0.0;
    for (const auto& s : tr.samples) peak = std::max(peak, s.signal);
    CHECK(peak == doctest::Approx(0.07).epsilon(1e-9));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(rabi_trace(model, {Sublevel::Ty, Sublevel::Ty}, rabi, std::vector<double>{0.0}), InvalidInput);
    CHECK_THROWS_AS(rabi_trace(model, kPairYZ, 0.0, std::vector<double>{0.0}), InvalidInput);
  }
}

TEST_CASE("ESEEM") {
  const auto model = pc_hbn();
  NuclearSpin proton;
  proton.hyperfine_mhz << 0.02, 0.01, 0.0, 0.01, -0.01, 0.005, 0.0, 0.005, 0.03;

  SUBCASE("no nuclei, no noise: flat echo") {
    const auto tr = hahn_echo_eseem(model, FieldVector(3, 4, 5), {}, kPairYZ, time_grid(0, 10, 51));
    for (const auto& s : tr.samples) CHECK(s.signal == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("decoupled nucleus gives no modulation") {
    NuclearSpin free_n;
    const std::vector<NuclearSpin> nuc{free_n};
    const auto tr = hahn_echo_eseem(model, FieldVector(0, 0, 10), nuc, kPairYZ, time_grid(0, 10, 51));
    for (const auto& s : tr.samples) CHECK(s.signal == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("too many nuclei") {
    const std::vector<NuclearSpin> nuc(5, proton);
    CHECK_THROWS_AS(hahn_echo_eseem(model, {}, nuc, kPairYZ, std::vector<double>{0.0}), CapacityError);
  }
  SUBCASE("proton at 10 mT modulates at its Larmor frequency") {
    NuclearSpin weak = proton;
    weak.hyperfine_mhz *= 0.1;
    const std::vector<NuclearSpin> nuc{weak};
    const auto tr = hahn_echo_eseem(model, FieldVector(4, 3, 8.660254037844386), nuc, kPairYZ,
                                    time_grid(0, 60, 1201));
    const auto peaks = spectrum_peaks(tr, 0.2, 0.7, 2e-4);
    REQUIRE_FALSE(peaks.empty());
    const double larmor = kProtonGammaMhzPerT * 10.0 * 1e-3;
    CHECK(larmor == doctest::Approx(0.42577).epsilon(1e-4).scale(0));
    CHECK(peaks[0].first == doctest::Approx(larmor).epsilon(0.01).scale(0));
  }
  SUBCASE("modulation frequency scales with gamma") {
    NuclearSpin light = proton;
    light.hyperfine_mhz *= 0.05;
    NuclearSpin heavy = light;
    heavy.gamma_mhz_per_t = kProtonGammaMhzPerT / 6.5;
    const FieldVector f(0, 20, 0);
    const auto a = hahn_echo_eseem(model, f, std::vector<NuclearSpin>{light}, kPairYZ, time_grid(0, 200, 4001));
    const auto b = hahn_echo_eseem(model, f, std::vector<NuclearSpin>{heavy}, kPairYZ, time_grid(0, 1300, 4001));
    const double fa = spectrum_peaks(a, 0.6, 1.1, 5e-5)[0].first;
    const double fb = spectrum_peaks(b, 0.6 / 6.5, 1.1 / 6.5, 5e-5 / 6.5)[0].first;
    CHECK(fa / fb == doctest::Approx(6.5).epsilon(5e-3).scale(0));
  }
  SUBCASE("weak coupling: peaks at the first-order nuclear frequencies of both manifolds") {
    // oracle: nu_m = | -gamma B + A^T <S>_m | for the electron eigenstate m
    NuclearSpin n;
    n.hyperfine_mhz << 0.15, 0.05, 0.0, 0.05, -0.1, 0.02, 0.0, 0.02, 0.12;
    const FieldVector field(6, 0, 8);  // 10 mT
    const auto es = sublevels(model, field);
    const auto ops = spin_operators();
    const Eigen::Vector3d b_mol = model.to_molecular(field) * 1e-3;
    std::vector<double> expected;
    for (Sublevel m : {Sublevel::Ty, Sublevel::Tz}) {
      const Vector3c v = es.states.col(int(m));
      const Eigen::Vector3d s(v.dot(ops.sx.matrix() * v).real(), v.dot(ops.sy.matrix() * v).real(),
                              v.dot(ops.sz.matrix() * v).real());
      expected.push_back((-n.gamma_mhz_per_t * b_mol + n.hyperfine_mhz.transpose() * s).norm());
    }
    const auto tr = hahn_echo_eseem(model, field, std::vector<NuclearSpin>{n}, kPairYZ, time_grid(0, 400, 8001));
    const auto peaks = spectrum_peaks(tr, 0.25, 0.6, 2e-5);
    REQUIRE(peaks.size() >= 2);
    std::vector<double> found{peaks[0].first, peaks[1].first};
    std::sort(found.begin(), found.end());
    std::sort(expected.begin(), expected.end());
    CHECK(std::abs(expected[1] - expected[0]) > 0.02);  // resolvable
    CHECK(found[0] == doctest::Approx(expected[0]).epsilon(0.01).scale(0));
    CHECK(found[1] == doctest::Approx(expected[1]).epsilon(0.01).scale(0));
  }
  SUBCASE("density matrix stays a valid state") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 0.3);
    std::uniform_real_distribution<double> tau(0.0, 20.0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<NuclearSpin> nuc(1 + trial % 3);
      for (auto& x : nuc)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) x.hyperfine_mhz(i, j) = g(rng);
      const auto rho = eseem_density_matrix(model, FieldVector(10 * g(rng), 10 * g(rng), 10 * g(rng)), nuc,
                                            kPairYZ, tau(rng));
      CHECK(std::abs(rho.trace() - Complex(1.0, 0.0)) < 1e-9);
      CHECK((rho - rho.adjoint()).cwiseAbs().maxCoeff() < 1e-10);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho);
      CHECK(es.eigenvalues().minCoeff() > -1e-10);
    }
  }
  SUBCASE("noise envelope multiplies the echo") {
    const auto& p = coherence_preset("Pc-H14-RT");
    const auto tr = hahn_echo_eseem(model, FieldVector(0, 0, 10), {}, kPairYZ, time_grid(0, 3, 7), p.noise);
    for (const auto& s : tr.samples)
      CHECK(s.signal == doctest::Approx(coherence(p.noise, kPairYZ, 1, 2 * s.t_us)).epsilon(1e-9));
  }
}
