#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "triplet/inference.hpp"

using namespace triplet;

namespace {

constexpr double kPi = std::numbers::pi;

TripletModel pc_hbn(const Orientation& o = {}) { return {{1891.0, 459.0}, o, kFreeElectronG}; }

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

double stddev(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// Field directions x, y, z and the three face diagonals: enough to fix the
// full lab-frame ZFS tensor.
std::vector<Eigen::Vector3d> six_directions() {
  return {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, Eigen::Vector3d(1, 1, 0).normalized(),
          Eigen::Vector3d(0, 1, 1).normalized(), Eigen::Vector3d(1, 0, 1).normalized()};
}

OrientationDataset synth_orientation(const TripletModel& truth, const std::vector<Eigen::Vector3d>& dirs,
                                     const std::vector<double>& fields, double sigma, std::mt19937_64* rng) {
  std::normal_distribution<double> noise(0.0, sigma);
  OrientationDataset ds;
  for (const auto& d : dirs)
    for (double b : fields) {
      const FieldVector f(d * b);
      for (const auto& pair : {kPairXY, kPairYZ, kPairXZ}) {
        const double v = transition_frequency(truth, f, pair);
        ds.push_back({f, pair, v + (rng && sigma > 0.0 ? noise(*rng) : 0.0), sigma > 0.0 ? sigma : 1.0});
      }
    }
  return ds;
}

Orientation random_orientation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return Orientation(2 * kPi * u(rng), std::acos(2 * u(rng) - 1), 2 * kPi * u(rng));
}

CoherenceTrace stretched(double a, double t2, double n, double c, const std::vector<double>& t) {
  CoherenceTrace tr;
  for (double x : t) tr.samples.push_back({x, a * std::exp(-std::pow(x / t2, n)) + c});
  return tr;
}

NuclearSpin weak_proton() {
  NuclearSpin h;
  h.hyperfine_mhz << 0.004, 0.002, 0.0, 0.002, -0.002, 0.001, 0.0, 0.001, 0.006;
  return h;
}

std::vector<FieldTrace> larmor_traces(const NuclearSpin& nuc, double span, std::size_t samples) {
  const Eigen::Vector3d dir = Eigen::Vector3d(1, 2, 3).normalized();
  std::vector<FieldTrace> out;
  for (double b : {5.0, 10.0, 15.0, 20.0, 25.0, 30.0}) {
    out.push_back({b, hahn_echo_eseem(pc_hbn(), FieldVector(dir * b), std::vector<NuclearSpin>{nuc}, kPairYZ,
                                      time_grid(0.0, span, samples))});
  }
  return out;
}

}  // namespace

TEST_CASE("least squares core") {
  SUBCASE("jacobian_check on a quadratic objective") {
    LeastSquaresProblem q;
    q.residuals = [](const Eigen::VectorXd& p) {
      Eigen::VectorXd r(3);
      r << p(0) * p(0) - 2.0 * p(1), 3.0 * p(0) * p(1) + 1.0, p(1) * p(1);
      return r;
    };
    q.jacobian = [](const Eigen::VectorXd& p) {
      Eigen::MatrixXd j(3, 2);
      j << 2.0 * p(0), -2.0, 3.0 * p(1), 3.0 * p(0), 0.0, 2.0 * p(1);
      return j;
    };
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int i = 0; i < 100; ++i) CHECK(jacobian_check(q, Eigen::Vector2d(g(rng), g(rng)), 1e-4) < 1e-9);
  }
  SUBCASE("Rosenbrock converges") {
    LeastSquaresProblem r;
    r.residuals = [](const Eigen::VectorXd& p) { return Eigen::Vector2d(10.0 * (p(1) - p(0) * p(0)), 1.0 - p(0)).eval(); };
    const auto res = levenberg_marquardt(r, Eigen::Vector2d(-1.2, 1.0));
    CHECK(res.converged);
    CHECK(res.params(0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(res.params(1) == doctest::Approx(1.0).epsilon(1e-8));
  }
  SUBCASE("covariance is PSD") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
      Eigen::MatrixXd j(6, 4);
      for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 4; ++b) j(a, b) = g(rng);
      if (i % 3 == 0) j.col(3) = j.col(0) + j.col(1);  // rank deficient
      const Eigen::MatrixXd c = covariance_from_jacobian(j, 1.7);
      CHECK((c - c.transpose()).norm() == 0.0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()));
    }
  }
}

TEST_CASE("fit_peaks") {
  SUBCASE("noiseless single Lorentzian") {
    OdmrSpectrum s;
    for (double f : frequency_grid(1400, 1465, 0.5)) s.samples.push_back({f, 0.002 - 0.01 * lorentzian(f, 1432, 5)});
    const auto r = fit_peaks(s, 1);
    CHECK(r.converged);
    CHECK(rel(r.value("center_1"), 1432) < 1e-6);
    CHECK(rel(r.value("fwhm_1"), 5) < 1e-6);
    CHECK(rel(r.value("amplitude_1"), -0.01) < 1e-6);
    CHECK(rel(r.value("baseline"), 0.002) < 1e-6);
    CHECK(r.residual_norm >= 0.0);
  }
  SUBCASE("simulated zero-field spectrum") {
    const auto s = simulate_cw_odmr(pc_hbn(), RateSet{}, FieldVector(), frequency_grid(850, 1500, 1));
    const auto r = fit_peaks(s, 2);
    CHECK(r.converged);
    CHECK(std::abs(r.value("center_1") - 918.0) < 0.2);
    CHECK(std::abs(r.value("center_2") - 1432.0) < 0.2);
  }
  SUBCASE("Monte-Carlo scatter matches the reported covariance") {
    std::mt19937_64 rng(11);
    const double amp = -0.01;
    std::normal_distribution<double> noise(0.0, 0.01 * std::abs(amp));
    std::vector<double> centers, sigmas;
    for (int rep = 0; rep < 100; ++rep) {
      OdmrSpectrum s;
      for (double f : frequency_grid(1400, 1465, 0.5))
        s.samples.push_back({f, amp * lorentzian(f, 1432, 5) + noise(rng)});
      const auto r = fit_peaks(s, 1);
      REQUIRE(r.converged);
      centers.push_back(r.value("center_1"));
      sigmas.push_back(r.sigma("center_1"));
    }
    const double ratio = stddev(centers) / median(sigmas);
    CHECK(ratio > 0.5);
    CHECK(ratio < 2.0);
  }
  SUBCASE("Jacobian agrees with finite differences") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    OdmrSpectrum s;
    for (double f : frequency_grid(800, 1600, 2)) s.samples.push_back({f, 0.0});
    const auto pr = peaks_problem(s, 3);
    for (int i = 0; i < 1000; ++i) {
      Eigen::VectorXd p(10);
      for (int k = 0; k < 3; ++k) {
        p(3 * k) = 850 + 700 * u(rng);
        p(3 * k + 1) = 2 + 20 * u(rng);
        p(3 * k + 2) = (u(rng) - 0.5) * 0.2;
      }
      p(9) = (u(rng) - 0.5) * 0.01;
      CHECK(jacobian_check(pr, p, 1e-6) < 1e-5);
    }
  }
  SUBCASE("iteration cap gives a diagnostic result") {
    OdmrSpectrum s;
    for (double f : frequency_grid(1400, 1465, 0.5)) s.samples.push_back({f, -0.01 * lorentzian(f, 1432, 5)});
    PeakFitOptions opt;
    opt.init = std::vector<PeakGuess>{{1420, 15, -0.005}};
    opt.lm.max_iterations = 1;
    const auto r = fit_peaks(s, 1, opt);
    CHECK_FALSE(r.converged);
    CHECK(r.diagnostic.find("maximum iterations") != std::string::npos);
  }
  SUBCASE("bad input") {
    OdmrSpectrum s;
    CHECK_THROWS_AS(fit_peaks(s, 0), InvalidInput);
    CHECK_THROWS_AS(fit_peaks(s, 1), Underdetermined);
  }
}

TEST_CASE("zfs_from_peaks") {
  SUBCASE("reported line positions") {
    const std::vector<double> lines{917, 1433, 2350};
    const auto z = zfs_from_peaks(lines);
    // the three lines are exactly consistent: 2E = 917, D - E = 1433
    CHECK(z.zfs.d_mhz == doctest::Approx(1891.5).epsilon(1e-12));
    CHECK(z.zfs.e_mhz == doctest::Approx(458.5).epsilon(1e-12));
    CHECK(std::abs(z.zfs.d_mhz - 1891) <= 1.0);
    CHECK(std::abs(z.zfs.e_mhz - 459) <= 1.0);
    CHECK(z.has_residual);
    CHECK(z.residual_mhz <= 1.0);
  }
  SUBCASE("free-molecule scale") {
    const std::vector<double> lines{1450, 100, 1350};
    const auto z = zfs_from_peaks(lines);
    CHECK(z.zfs.d_mhz == doctest::Approx(1400));
    CHECK(z.zfs.e_mhz == doctest::Approx(50));
    CHECK(z.residual_mhz == doctest::Approx(0.0));
  }
  SUBCASE("two lines") {
    const std::vector<double> lines{918, 1432};
    const auto z = zfs_from_peaks(lines);
    CHECK(z.zfs.d_mhz == doctest::Approx(1891.0).epsilon(1e-14));
    CHECK(z.zfs.e_mhz == doctest::Approx(459.0).epsilon(1e-14));
    CHECK_FALSE(z.has_residual);
    const std::vector<double> hi{1432, 2350};
    const auto z2 = zfs_from_peaks(hi, std::vector<LineRole>{LineRole::DMinusE, LineRole::DPlusE});
    CHECK(z2.zfs.d_mhz == doctest::Approx(1891.0));
    CHECK(z2.zfs.e_mhz == doctest::Approx(459.0));
  }
  SUBCASE("residual equals the sum-rule violation") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int i = 0; i < 1000; ++i) {
      const std::vector<double> lines{918 + u(rng), 1432 + u(rng), 2350 + u(rng)};
      const auto z = zfs_from_peaks(lines);
      CHECK(z.residual_mhz == doctest::Approx(std::abs(lines[0] + lines[1] - lines[2])).epsilon(1e-12).scale(1e-9));
    }
  }
  SUBCASE("errors") {
    const std::vector<double> one{918};
    CHECK_THROWS_AS(zfs_from_peaks(one), Underdetermined);
    const std::vector<double> two{918, 1432};
    CHECK_THROWS_AS(zfs_from_peaks(two, std::vector<LineRole>{LineRole::TwoE, LineRole::TwoE}), InvalidInput);
  }
}

TEST_CASE("fit_orientation") {
  const std::vector<double> fields{10, 20, 30, 40};
  SUBCASE("noiseless round trip") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
      const auto truth = pc_hbn(random_orientation(rng));
      const auto ds = synth_orientation(truth, six_directions(), fields, 0.0, nullptr);
      const auto r = fit_orientation(ds, truth.zfs, truth.g);
      CHECK(r.tensor_rank == 5);
      CHECK(r.warnings.empty());
      CHECK(orientation_distance_deg(r.orientation, truth.orientation) < 1e-2);
      const Orientation canon = fold_orientation(truth.orientation);
      // away from gimbal lock the folded angles agree as well
      if (canon.beta() > 0.05 && std::abs(canon.gamma()) > 1e-3 && kPi - canon.gamma() > 1e-3) {
        CHECK(std::abs(r.value("beta_deg") - canon.beta() * 180 / kPi) < 1e-2);
        CHECK(std::abs(r.value("gamma_deg") - canon.gamma() * 180 / kPi) < 1e-2);
      }
    }
  }
  SUBCASE("edge-on molecule with noise") {
    std::mt19937_64 rng(22);
    const auto truth = pc_hbn(Orientation::from_degrees(30, 90, 40));
    const auto ds = synth_orientation(truth, six_directions(), fields, 1.0, &rng);
    const auto r = fit_orientation(ds, truth.zfs, truth.g);
    CHECK(r.converged);
    CHECK(orientation_distance_deg(r.orientation, truth.orientation) < 2.0);
    CHECK(std::abs(r.value("beta_deg") - 90.0) < 2.0);
  }
  SUBCASE("symmetry-equivalent inputs fold to the same angles") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 5; ++trial) {
      const Orientation o = random_orientation(rng);
      std::vector<Eigen::Vector3d> first;
      for (const auto& e : equivalent_orientations(o)) {
        const auto ds = synth_orientation(pc_hbn(e), six_directions(), fields, 0.0, nullptr);
        const auto r = fit_orientation(ds, {1891, 459}, kFreeElectronG);
        const Eigen::Vector3d v(r.values);
        if (first.empty()) {
          first.push_back(v);
        } else {
          CHECK((v - first[0]).cwiseAbs().maxCoeff() < 1e-3);
        }
        CHECK(r.equivalents_deg.size() == 4);
        CHECK(r.values(1) >= 0.0);
        CHECK(r.values(1) <= 90.0);
        CHECK(r.values(2) >= 0.0);
        CHECK(r.values(2) < 180.0);
      }
    }
  }
  SUBCASE("zero field carries no orientation information") {
    const auto ds = synth_orientation(pc_hbn(Orientation::from_degrees(10, 50, 70)), {{1, 0, 0}}, {0.0, 0.0}, 0.0,
                                      nullptr);
    const auto r = fit_orientation(ds, {1891, 459}, kFreeElectronG);
    CHECK(r.tensor_rank == 0);
    CHECK(r.has_warning("unobservable"));
  }
  SUBCASE("three orthogonal field axes fix only two tensor components") {
    std::mt19937_64 rng(24);
    const auto truth = pc_hbn(Orientation::from_degrees(30, 90, 40));
    const auto ds = synth_orientation(truth, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {25, 50, 75, 100}, 0.0, nullptr);
    const auto r = fit_orientation(ds, truth.zfs, truth.g);
    CHECK(r.tensor_rank == 2);
    CHECK(r.has_warning("underdetermined"));
    // the data are reproduced, and so is the diagonal of the lab-frame tensor
    CHECK(r.residual_norm < 1e-4);
    const Eigen::Vector3d x(459 - 1891.0 / 3, -459 - 1891.0 / 3, 2 * 1891.0 / 3);
    const Eigen::Matrix3d dt = truth.orientation.matrix() * x.asDiagonal() * truth.orientation.matrix().transpose();
    const Eigen::Matrix3d df = r.orientation.matrix() * x.asDiagonal() * r.orientation.matrix().transpose();
    CHECK((dt.diagonal() - df.diagonal()).cwiseAbs().maxCoeff() < 1e-3);
  }
  SUBCASE("out-of-plane sweep of an edge-on molecule") {
    // molecular y along the substrate normal, molecular x and z in the plane
    const Orientation edge_on =
        Orientation::from_matrix((Eigen::Matrix3d() << 1, 0, 0, 0, 0, -1, 0, 1, 0).finished());
    const auto truth = pc_hbn(edge_on);
    CHECK(std::abs(edge_on.molecular_axis(2).z()) < 1e-12);
    std::vector<double> sweep;
    for (int k = 0; k <= 10; ++k) sweep.push_back(1.0 * k);
    const auto ds = synth_orientation(truth, {{0, 0, 1}}, sweep, 0.0, nullptr);
    // opposite shifts of the two lower transitions
    const double dxy = transition_frequency(truth, FieldVector(0, 0, 10), kPairXY) - 918;
    const double dyz = transition_frequency(truth, FieldVector(0, 0, 10), kPairYZ) - 1432;
    CHECK(dxy * dyz < 0.0);
    const auto r = fit_orientation(ds, truth.zfs, truth.g);
    CHECK(r.tensor_rank == 1);
    CHECK(r.has_warning("single field axis"));
    CHECK(r.residual_norm < 1e-4);
    // B.D.B at the lowest tensor eigenvalue pins the field to molecular y
    CHECK(std::abs(r.orientation.molecular_axis(2).z()) < 1e-3);
    CHECK(std::abs(r.orientation.molecular_axis(1).z()) > 1.0 - 1e-6);
    // the edge-on truth is one of the equally good solutions
    const auto pr = orientation_problem(ds, truth.zfs, truth.g);
    CHECK(pr.residuals(Eigen::Vector3d(edge_on.alpha(), edge_on.beta(), edge_on.gamma())).norm() < 1e-6);
  }
  SUBCASE("Jacobian through the eigensolver") {
    std::mt19937_64 rng(25);
    const auto truth = pc_hbn(random_orientation(rng));
    const auto ds = synth_orientation(truth, six_directions(), {15, 35}, 1.0, &rng);
    const auto pr = orientation_problem(ds, truth.zfs, truth.g);
    int checked = 0;
    for (int i = 0; i < 1000; ++i) {
      const Orientation o = random_orientation(rng);
      if (o.beta() < 0.02 || o.beta() > kPi - 0.02) continue;  // gimbal lock
      CHECK(jacobian_check(pr, Eigen::Vector3d(o.alpha(), o.beta(), o.gamma()), 1e-6) < 1e-4);
      ++checked;
    }
    CHECK(checked > 950);
  }
}

TEST_CASE("fit_decay") {
  const auto grid = time_grid(0, 15, 151);
  SUBCASE("exact stretched exponential") {
    const auto r = fit_decay(stretched(1.0, 3.4, 1.3, 0.0, grid));
    CHECK(r.converged);
    CHECK(rel(r.value("t2_us"), 3.4) < 1e-6);
    CHECK(rel(r.value("exponent"), 1.3) < 1e-6);
    CHECK(rel(r.value("amplitude"), 1.0) < 1e-6);
    CHECK(std::abs(r.value("offset")) < 1e-6);
  }
  SUBCASE("offset and fixed exponent") {
    DecayFitOptions opt;
    opt.fixed_exponent = 2.0;
    const auto r = fit_decay(stretched(0.8, 5.0, 2.0, 0.1, grid), opt);
    CHECK(rel(r.value("t2_us"), 5.0) < 1e-6);
    CHECK(rel(r.value("offset"), 0.1) < 1e-6);
    CHECK(r.value("exponent") == 2.0);
  }
  SUBCASE("calibrated deuterated preset") {
    const auto& p = coherence_preset("Pc-D14-4K");
    const auto tr = coherence_function(p.noise, p.hahn_pair, 1, time_grid(0, 160, 200));
    const auto r = fit_decay(tr);
    CHECK(r.converged);
    CHECK(rel(r.value("t2_us"), 39.8) < 0.03);
  }
  SUBCASE("ESEEM-modulated envelope") {
    for (double depth : {0.1, 0.3}) {
      CoherenceTrace tr;
      for (double t : time_grid(0, 15, 301))
        tr.samples.push_back({t, std::exp(-std::pow(t / 3.4, 1.5)) * (1.0 - 0.5 * depth * (1.0 - std::cos(2 * kPi * 2.3 * t)))});
      const auto r = fit_decay(tr);
      CHECK(rel(r.value("t2_us"), 3.4) < 0.10);
    }
  }
  SUBCASE("non-decaying trace") {
    CoherenceTrace tr;
    for (double t : grid) tr.samples.push_back({t, 1.0 + 0.01 * std::sin(t)});
    const auto r = fit_decay(tr);
    CHECK_FALSE(r.converged);
    CHECK(r.diagnostic.find("not decaying") != std::string::npos);
  }
  SUBCASE("round trip over random parameters") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
      const double t2 = 1 + 9 * u(rng), n = 0.6 + 2.3 * u(rng), a = 0.5 + u(rng);
      const auto r = fit_decay(stretched(a, t2, n, 0.0, time_grid(0, 4 * t2, 200)));
      CHECK(rel(r.value("t2_us"), t2) < 1e-4);
      CHECK(rel(r.value("exponent"), n) < 1e-4);
    }
  }
}

TEST_CASE("fit_cpmg_scaling") {
  const std::vector<int> ns{1, 2, 4, 8, 16, 32, 64};
  SUBCASE("slow Lorentzian noise without saturation") {
    NoiseModel noise;
    noise.dephasing = {LorentzianNoise{0.05, 1e5}};
    std::vector<CpmgPoint> pts;
    for (int n : ns) pts.push_back({double(n), t2_effective(kPairXZ, n, noise)});
    const auto r = fit_cpmg_scaling(pts);
    CHECK(std::abs(r.value("gamma_s") - 2.0 / 3.0) <= 0.05);
    CHECK(r.has_warning("no saturation"));
  }
  SUBCASE("white noise") {
    NoiseModel noise;
    noise.dephasing = {WhiteNoise{0.05}};
    std::vector<CpmgPoint> pts;
    for (int n : ns) pts.push_back({double(n), t2_effective(kPairXZ, n, noise)});
    const auto r = fit_cpmg_scaling(pts);
    CHECK(std::abs(r.value("gamma_s")) <= 0.02);
  }
  SUBCASE("deuterated preset plateau") {
    const auto& p = coherence_preset("Pc-D14-4K");
    const double limit = p.noise.t1_limit(p.protected_pair);
    std::vector<CpmgPoint> pts;
    for (int n : {1, 2, 4, 8, 16, 32, 64, 128, 256}) pts.push_back({double(n), t2_effective(p.protected_pair, n, p.noise)});
    const auto r = fit_cpmg_scaling(pts);
    CHECK(r.value("t_sat_us") >= 300.0);
    CHECK(r.value("t_sat_us") <= limit);
    CpmgFitOptions bounded;
    bounded.t_sat_max_us = limit;
    CHECK(fit_cpmg_scaling(pts, bounded).value("t_sat_us") <= limit);
  }
  SUBCASE("round trip on the model") {
    std::vector<CpmgPoint> pts;
    for (int n : {1, 2, 4, 8, 16, 32, 64, 128, 256, 512})
      pts.push_back({double(n), cpmg_scaling_model(n, 3.4, 0.62, 130.0)});
    const auto r = fit_cpmg_scaling(pts);
    CHECK(rel(r.value("t0_us"), 3.4) < 1e-4);
    CHECK(rel(r.value("gamma_s"), 0.62) < 1e-4);
    CHECK(rel(r.value("t_sat_us"), 130.0) < 1e-4);
  }
  SUBCASE("too few points") {
    const std::vector<CpmgPoint> pts{{1, 3}, {2, 4}, {4, 6}};
    CHECK_THROWS_AS(fit_cpmg_scaling(pts), Underdetermined);
  }
}

TEST_CASE("fit_larmor") {
  SUBCASE("proton and deuteron slopes") {
    const auto h = weak_proton();
    NuclearSpin d = h;
    d.gamma_mhz_per_t = kDeuteronGammaMhzPerT;
    d.hyperfine_mhz *= kDeuteronGammaMhzPerT / kProtonGammaMhzPerT;
    const auto th = larmor_traces(h, 40, 801);
    const auto td = larmor_traces(d, 260, 801);
    const auto rh = fit_larmor(th);
    const auto rd = fit_larmor(td);
    CHECK(rel(rh.value("gamma_mhz_per_t"), 42.577) < 0.01);
    CHECK(rel(rh.value("gamma_mhz_per_t") / rd.value("gamma_mhz_per_t"), 6.5) < 0.02);
  }
  SUBCASE("zero-field trace is excluded") {
    auto traces = larmor_traces(weak_proton(), 40, 801);
    traces.push_back({0.0, hahn_echo_eseem(pc_hbn(), FieldVector(), std::vector<NuclearSpin>{weak_proton()}, kPairYZ,
                                           time_grid(0, 40, 801))});
    const auto r = fit_larmor(traces);
    CHECK(r.has_warning("trace 6 excluded"));
    CHECK(rel(r.value("gamma_mhz_per_t"), 42.577) < 0.01);
    CHECK_THROWS_AS(modulation_frequency(traces.back().trace), NoModulation);
  }
  SUBCASE("fewer than three usable traces") {
    auto traces = larmor_traces(weak_proton(), 40, 801);
    traces.resize(2);
    CHECK_THROWS_AS(fit_larmor(traces), Underdetermined);
  }
  SUBCASE("a single revival is not enough") {
    CoherenceTrace tr;
    for (double t : time_grid(0, 10, 201)) tr.samples.push_back({t, std::cos(2 * kPi * 0.15 * t)});
    CHECK_THROWS_AS(modulation_frequency(tr), NoModulation);
  }
  SUBCASE("Monte-Carlo scatter matches the reported covariance") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> g(0.0, 0.02);
    std::vector<double> slopes, sigmas;
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<FieldTrace> traces;
      for (double b : {5.0, 10.0, 15.0, 20.0, 25.0, 30.0}) {
        CoherenceTrace tr;
        const double f = kProtonGammaMhzPerT * b * 1e-3;
        for (double t : time_grid(0, 40, 401))
          tr.samples.push_back({t, 1.0 - 0.1 * (1.0 - std::cos(2 * kPi * f * t)) + g(rng)});
        traces.push_back({b, tr});
      }
      const auto r = fit_larmor(traces);
      slopes.push_back(r.value("gamma_mhz_per_t"));
      sigmas.push_back(r.sigma("gamma_mhz_per_t"));
    }
    const double ratio = stddev(slopes) / median(sigmas);
    CHECK(ratio > 0.5);
    CHECK(ratio < 2.0);
  }
}

TEST_CASE("fit_polarization") {
  auto scan = [](double a, double theta0, double c, int n, double noise, std::mt19937_64* rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    PolarizationScan s;
    for (int i = 0; i < n; ++i) {
      const double th = 360.0 * i / n;
      const double cs = std::cos((th - theta0) * kPi / 180);
      const double v = a * cs * cs + c;
      s.push_back({th, std::max(0.0, v * (1.0 + (rng ? noise * g(*rng) : 0.0)))});
    }
    return s;
  };
  SUBCASE("noiseless") {
    const auto r = fit_polarization(scan(1.0, 60.0, 0.1, 36, 0.0, nullptr));
    CHECK(r.converged);
    CHECK(std::abs(r.value("theta0_deg") - 60.0) < 0.01);
    CHECK(rel(r.value("amplitude"), 1.0) < 1e-6);
    CHECK(rel(r.value("offset"), 0.1) < 1e-6);
  }
  SUBCASE("mod-180 convention") {
    CHECK(std::abs(fit_polarization(scan(1.0, 150.0, 0.1, 36, 0.0, nullptr)).value("theta0_deg") - 150.0) < 0.01);
    CHECK(std::abs(fit_polarization(scan(1.0, 330.0, 0.1, 36, 0.0, nullptr)).value("theta0_deg") - 150.0) < 0.01);
    CHECK(std::abs(fit_polarization(scan(1.0, 0.0, 0.1, 36, 0.0, nullptr)).value("theta0_deg")) < 0.01);
  }
  SUBCASE("5% noise") {
    std::mt19937_64 rng(51);
    for (int rep = 0; rep < 100; ++rep) {
      const double truth = 180.0 * (rep + 0.5) / 100;
      const double got = fit_polarization(scan(1.0, truth, 0.1, 36, 0.05, &rng)).value("theta0_deg");
      double d = std::abs(got - truth);
      d = std::min(d, 180.0 - d);
      CHECK(d < 2.0);
    }
  }
  SUBCASE("unpolarized scan") {
    const auto r = fit_polarization(scan(0.01, 40.0, 1.0, 36, 0.0, nullptr));
    CHECK(r.has_warning("unpolarized"));
  }
  SUBCASE("preconditions") {
    CHECK_THROWS_AS(fit_polarization(scan(1.0, 60.0, 0.1, 6, 0.0, nullptr)), Underdetermined);
    PolarizationScan narrow;
    for (int i = 0; i < 10; ++i) narrow.push_back({10.0 * i, 1.0});
    CHECK_THROWS_AS(fit_polarization(narrow), Underdetermined);
    auto bad = scan(1.0, 60.0, 0.1, 36, 0.0, nullptr);
    bad[3].counts = -1;
    CHECK_THROWS_AS(fit_polarization(bad), InvalidInput);
  }
}

TEST_CASE("cluster_orientations") {
  SUBCASE("nearest centre") {
    const std::vector<double> a{1, 59, 61, 119};
    const auto c = cluster_orientations(a);
    CHECK(c.assignment == std::vector<int>{0, 1, 1, 2});
    CHECK(c.counts == std::array<int, 3>{1, 2, 1});
    CHECK(std::none_of(c.tie.begin(), c.tie.end(), [](bool t) { return t; }));
    CHECK(c.circular_mean_deg[1] == doctest::Approx(60.0));
    CHECK(c.circular_mean_deg[0] == doctest::Approx(1.0));
  }
  SUBCASE("ties go to the lower class") {
    const std::vector<double> a{30, 90, 150};
    const auto c = cluster_orientations(a);
    CHECK(c.assignment == std::vector<int>{0, 1, 0});
    CHECK(c.tie == std::vector<bool>{true, true, true});
  }
  SUBCASE("wrap-around of the zero class") {
    const std::vector<double> a{178, 2, 181};
    const auto c = cluster_orientations(a);
    CHECK(c.counts[0] == 3);
    double sn = 0.0, cs = 0.0;
    for (double off : {-2.0, 2.0, 1.0}) {
      sn += std::sin(6 * off * kPi / 180);
      cs += std::cos(6 * off * kPi / 180);
    }
    CHECK(c.circular_mean_deg[0] == doctest::Approx(std::atan2(sn, cs) / 6 * 180 / kPi).epsilon(1e-12));
  }
  SUBCASE("synthetic three-cluster sample") {
    std::mt19937_64 rng(61);
    const std::array<double, 3> p{0.5, 0.3, 0.2};
    std::discrete_distribution<int> pick(p.begin(), p.end());
    std::normal_distribution<double> jitter(0.0, 5.0);
    std::vector<double> angles;
    for (int i = 0; i < 100; ++i) angles.push_back(std::fmod(kOrientationClasses[pick(rng)] + jitter(rng) + 180.0, 180.0));
    const auto c = cluster_orientations(angles);
    for (std::size_t k = 0; k < 3; ++k) {
      const double sd = std::sqrt(100 * p[k] * (1 - p[k]));
      CHECK(std::abs(c.counts[k] - 100 * p[k]) <= 1.96 * sd);
      CHECK(std::abs(c.circular_std_deg[k] - 5.0) < 1.5);
    }
    int total = 0;
    for (int h : c.histogram) total += h;
    CHECK(total == 100);
  }
}

TEST_CASE("invert_field") {
  const auto model = pc_hbn(Orientation::from_degrees(20, 70, 35));
  SUBCASE("round trip at 1 mT along molecular z") {
    const Eigen::Vector3d dir = model.orientation.molecular_axis(2);
    const double shift = field_shift(model, kPairXY, dir, 1.0);
    CHECK(shift > 0.0);
    CHECK(std::abs(invert_field(shift, kPairXY, model, dir, 5.0) - 1.0) <= 1e-3);
  }
  SUBCASE("zero shift") { CHECK(invert_field(0.0, kPairYZ, model, Eigen::Vector3d(1, 0, 0), 5.0) == 0.0); }
  SUBCASE("out of range") {
    const Eigen::Vector3d dir(0, 0, 1);
    const double top = field_shift(model, kPairXY, dir, 5.0);
    CHECK_THROWS_AS(invert_field(1.5 * top, kPairXY, model, dir, 5.0), OutOfRange);
    CHECK_THROWS_AS(invert_field(-std::abs(top), kPairXY, model, dir, 5.0), OutOfRange);
  }
  SUBCASE("non-monotone bracket across a level crossing") {
    const auto aligned = pc_hbn();
    CHECK_THROWS_AS(invert_field(-10.0, kPairYZ, aligned, Eigen::Vector3d(0, 0, 1), 100.0), NonMonotoneBracket);
  }
  SUBCASE("forward composed with inverse is the identity") {
    std::mt19937_64 rng(71);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.05, 5.0);
    for (int i = 0; i < 20; ++i) {
      const Eigen::Vector3d dir = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
      const double b = u(rng);
      for (const auto& pair : {kPairXY, kPairYZ, kPairXZ}) {
        const double s = field_shift(model, pair, dir, b);
        if (std::abs(s) < 1e-9) continue;
        const double got = invert_field(s, pair, model, dir, 5.0);
        CHECK(std::abs(field_shift(model, pair, dir, got) - s) <=
              std::abs(field_shift(model, pair, dir, got + 1e-4) - field_shift(model, pair, dir, got)) + 1e-12);
        CHECK(std::abs(got - b) <= 1e-4);
      }
    }
  }
}
