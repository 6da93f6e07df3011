#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>

#include "triplet/workbench.hpp"

namespace triplet::wb {

namespace {

constexpr double kPi = std::numbers::pi;

std::string num(double v, int digits = 5) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
  return std::string(buf, r.ptr);
}

void check(ReproduceReport& r, const std::string& name, bool pass, const std::string& detail) {
  r.checks.push_back({name, pass, detail});
}

Dataset tagged(Dataset d, const std::string& figure, std::uint64_t seed) {
  if (d.provenance.is_object() && !d.provenance.empty()) d.provenance["generator_provenance"] = Json(d.provenance);
  d.provenance["source"] = "reproduce";
  d.provenance["figure"] = figure;
  d.provenance["reproduce_seed"] = seed;
  return d;
}

NuclearSpin weak_proton() {
  NuclearSpin h;
  h.hyperfine_mhz << 0.004, 0.002, 0.0, 0.002, -0.002, 0.001, 0.0, 0.001, 0.006;
  return h;
}

// Hahn-echo trace of a preset on its calibrated pair, with seeded noise, and its fit.
FitResult hahn_fit(const std::string& preset, std::uint64_t seed, ReproduceReport& r, const std::string& tag) {
  RunConfig c;
  c.noise_preset = preset;
  c.seed = seed;
  c.sigma = 0.005;
  const auto& p = coherence_preset(preset);
  c.trace = {"cpmg", p.hahn_pair, 1, 0.0, 4.0 * p.target_hahn_t2_us, 200, 5.0};
  Dataset d = generate(DatasetKind::Trace, c);
  const FitResult f = fit_decay(as_trace(d));
  r.datasets.emplace_back(tag, tagged(std::move(d), r.id, seed));
  return f;
}

void fig1d(ReproduceReport& r, std::uint64_t seed) {
  RunConfig c = config_preset("paper-fig1d");
  c.seed = seed;
  Dataset cw = generate(DatasetKind::Spectrum, c);
  const FitResult pk = fit_peaks(as_spectrum(cw), 2);
  const double lo = pk.value("center_1"), hi = pk.value("center_2");
  check(r, "T_x-T_y line near 917 MHz", pk.converged && std::abs(lo - 917.0) <= 2.0, "fitted " + num(lo) + " MHz");
  check(r, "T_y-T_z line near 1433 MHz", pk.converged && std::abs(hi - 1433.0) <= 2.0, "fitted " + num(hi) + " MHz");

  RunConfig dr = c;
  dr.hold_mhz = 1433.0;
  dr.spectrum = {2250.0, 2450.0, 1.0};
  Dataset dd = generate(DatasetKind::Spectrum, dr);
  const FitResult dp = fit_peaks(as_spectrum(dd), 1);
  const double top = dp.value("center_1");
  check(r, "double-resonance line near 2350 MHz", dp.converged && std::abs(top - 2350.0) <= 2.0,
        "fitted " + num(top) + " MHz");

  const std::vector<double> lines{lo, hi, top};
  const ZfsEstimate z = zfs_from_peaks(lines);
  check(r, "D within 1 MHz of 1891", std::abs(z.zfs.d_mhz - 1891.0) <= 1.0, "D = " + num(z.zfs.d_mhz) + " MHz");
  check(r, "E within 1 MHz of 459", std::abs(z.zfs.e_mhz - 459.0) <= 1.0, "E = " + num(z.zfs.e_mhz) + " MHz");
  check(r, "sum-rule residual <= 1 MHz", z.residual_mhz <= 1.0, "residual " + num(z.residual_mhz) + " MHz");
  r.metrics = {{"f_xy_mhz", lo}, {"f_yz_mhz", hi}, {"f_xz_mhz", top}, {"d_mhz", z.zfs.d_mhz}, {"e_mhz", z.zfs.e_mhz},
               {"residual_mhz", z.residual_mhz}};
  r.datasets.emplace_back("cw_spectrum", tagged(std::move(cw), r.id, seed));
  r.datasets.emplace_back("double_resonance", tagged(std::move(dd), r.id, seed));
}

void fig1e(ReproduceReport& r, std::uint64_t seed) {
  for (const auto& [preset, target] : {std::pair{"Pc-H14-RT", 2.4}, std::pair{"Pc-H14-4K", 3.4}}) {
    const FitResult f = hahn_fit(preset, seed, r, std::string("hahn_") + preset);
    const double t2 = f.value("t2_us");
    check(r, std::string(preset) + " Hahn T2 within 3% of " + num(target) + " us",
          f.converged && std::abs(t2 / target - 1.0) <= 0.03, "fitted " + num(t2) + " us");
    r.metrics[preset] = {{"t2_us", t2}, {"exponent", f.value("exponent")}};
  }
}

void fig2b(ReproduceReport& r, std::uint64_t seed) {
  RunConfig c = config_preset("paper-fig2b");
  c.seed = seed;
  Dataset d = generate(DatasetKind::OrientationPoints, c);
  const OrientationFit f = fit_orientation(as_orientation(d), c.model.zfs, c.model.g);
  const double err = orientation_distance_deg(f.orientation, c.model.orientation);
  check(r, "field directions fix the full tensor", f.tensor_rank == 5, "rank " + std::to_string(f.tensor_rank));
  check(r, "Euler angles within 2 degrees", f.converged && err <= 2.0, "geodesic error " + num(err, 3) + " deg");
  const double beta = f.value("beta_deg");
  check(r, "edge-on (beta near 90 degrees)", std::abs(beta - 90.0) <= 2.0, "beta " + num(beta) + " deg");

  // out-of-plane sweep: the two lower transitions move apart in opposite directions
  const TripletModel& truth = c.model;
  OdmrSpectrum sweep_xy, sweep_yz;
  bool opposite = true;
  for (int k = 1; k <= 10; ++k) {
    const FieldVector b(0, 0, k);
    const double dxy = transition_frequency(truth, b, kPairXY) - transition_frequency(truth, FieldVector(), kPairXY);
    const double dyz = transition_frequency(truth, b, kPairYZ) - transition_frequency(truth, FieldVector(), kPairYZ);
    opposite = opposite && dxy * dyz < 0.0;
    sweep_xy.samples.push_back({double(k), dxy});
    sweep_yz.samples.push_back({double(k), dyz});
  }
  check(r, "lab-z sweep shifts T_x-T_y and T_y-T_z oppositely", opposite,
        "at 10 mT: " + num(sweep_xy.samples.back().contrast, 4) + " / " + num(sweep_yz.samples.back().contrast, 4) +
            " MHz");
  r.metrics = {{"alpha_deg", f.value("alpha_deg")}, {"beta_deg", beta}, {"gamma_deg", f.value("gamma_deg")},
               {"error_deg", err}, {"tensor_rank", f.tensor_rank}};
  r.datasets.emplace_back("vector_field_points", tagged(std::move(d), r.id, seed));
}

void fig2d(ReproduceReport& r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pick{0.4, 0.35, 0.25};
  std::normal_distribution<double> jitter(0.0, 4.0);
  constexpr int kMolecules = 300;
  std::vector<double> fitted;
  std::vector<int> truth;
  RunConfig c = config_preset("paper-fig2d");
  for (int i = 0; i < kMolecules; ++i) {
    const int cls = pick(rng);
    truth.push_back(cls);
    c.polarization.theta0_deg = kOrientationClasses[static_cast<std::size_t>(cls)] + jitter(rng);
    c.seed = rng();
    const Dataset d = generate(DatasetKind::Polarization, c);
    fitted.push_back(fit_polarization(as_polarization(d)).value("theta0_deg"));
    if (i == 0) r.datasets.emplace_back("polarization_scan_0", tagged(d, r.id, seed));
  }
  const ClusterResult cl = cluster_orientations(fitted);
  int agree = 0;
  for (int i = 0; i < kMolecules; ++i) agree += cl.assignment[static_cast<std::size_t>(i)] == truth[static_cast<std::size_t>(i)];
  bool means = true;
  std::string detail;
  for (std::size_t k = 0; k < 3; ++k) {
    double d = std::abs(cl.circular_mean_deg[k] - kOrientationClasses[k]);
    d = std::min(d, 180.0 - d);
    means = means && cl.counts[k] > 0 && d <= 3.0;
    detail += (k ? ", " : "") + num(cl.circular_mean_deg[k], 4) + " (" + std::to_string(cl.counts[k]) + ")";
  }
  check(r, "three clusters at 0/60/120 degrees", means, "means (counts): " + detail);
  check(r, "assignments match the generating class", agree >= 0.95 * kMolecules,
        std::to_string(agree) + " of " + std::to_string(kMolecules));
  r.metrics = {{"counts", cl.counts}, {"circular_mean_deg", cl.circular_mean_deg},
               {"circular_std_deg", cl.circular_std_deg}, {"histogram", cl.histogram}};
  Dataset hist;
  hist.kind = DatasetKind::Polarization;
  hist.columns.assign(2, {});
  hist.text.assign(2, {});
  for (std::size_t b = 0; b < cl.histogram.size(); ++b) {
    hist.columns[0].push_back((static_cast<double>(b) + 0.5) * cl.bin_width_deg);
    hist.columns[1].push_back(cl.histogram[b]);
  }
  r.datasets.emplace_back("orientation_histogram", tagged(std::move(hist), r.id, seed));
}

void fig3b(ReproduceReport& r, std::uint64_t seed) {
  const FitResult d = hahn_fit("Pc-D14-4K", seed, r, "hahn_Pc-D14-4K");
  const FitResult h = hahn_fit("Pc-H14-4K", seed + 1, r, "hahn_Pc-H14-4K");
  const double td = d.value("t2_us"), th = h.value("t2_us");
  check(r, "Pc-D14 Hahn T2 within 3% of 39.8 us", d.converged && std::abs(td / 39.8 - 1.0) <= 0.03,
        "fitted " + num(td) + " us");
  check(r, "deuteration gives a tenfold enhancement", td >= 10.0 * th, "ratio " + num(td / th, 4));
  r.metrics = {{"t2_d14_us", td}, {"t2_h14_us", th}};
}

void fig3d(ReproduceReport& r, std::uint64_t seed) {
  const auto& p = coherence_preset("Pc-D14-4K");
  const double limit = p.noise.t1_limit(p.protected_pair);
  double prev = 0.0;
  bool increasing = true, bounded = true;
  double last = 0.0;
  Json t2s = Json::object();
  for (int n : {1, 16, 256}) {
    RunConfig c;
    c.noise_preset = "Pc-D14-4K";
    c.seed = seed + static_cast<std::uint64_t>(n);
    c.sigma = 0.005;
    const double guess = t2_effective(p.protected_pair, n, p.noise);
    c.trace = {"cpmg", p.protected_pair, n, 0.0, 3.0 * guess, 200, 5.0};
    Dataset d = generate(DatasetKind::Trace, c);
    const FitResult f = fit_decay(as_trace(d));
    last = f.value("t2_us");
    increasing = increasing && last > prev;
    bounded = bounded && last <= limit + 3.0 * f.sigma("t2_us");
    prev = last;
    t2s[std::to_string(n)] = last;
    r.datasets.emplace_back("cpmg_n" + std::to_string(n), tagged(std::move(d), r.id, seed));
  }
  check(r, "T2 grows with the number of pulses", increasing, "T2(N) = " + t2s.dump());
  check(r, "T2 at N = 256 exceeds 300 us", last >= 300.0, "fitted " + num(last) + " us");
  check(r, "T2 stays below the lifetime limit within fit uncertainty", bounded, "limit " + num(limit) + " us");
  r.metrics = {{"t2_us", t2s}, {"limit_us", limit}};
}

void fig3e(ReproduceReport& r, std::uint64_t seed) {
  auto scaling = [&](const std::string& preset, const SublevelPair& pair, const std::vector<int>& ns) {
    RunConfig c;
    c.noise_preset = preset;
    c.cpmg = {pair, ns};
    Dataset d = generate(DatasetKind::CpmgPoints, c);
    CpmgFitOptions opt;
    const FitResult f = fit_cpmg_scaling(as_cpmg(d), opt);
    r.datasets.emplace_back("t2_vs_n_" + preset + "_" + pair_name(pair), tagged(std::move(d), r.id, seed));
    return f;
  };
  const std::vector<int> up_to_256{1, 2, 4, 8, 16, 32, 64, 128, 256};
  const std::vector<int> up_to_1024{1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};

  const auto& d14 = coherence_preset("Pc-D14-4K");
  const FitResult dx = scaling("Pc-D14-4K", kPairXZ, up_to_256);
  const double lx = d14.noise.t1_limit(kPairXZ);
  check(r, "Pc-D14 T_x-T_z plateau exceeds 300 us", dx.value("t_sat_us") >= 300.0,
        "T_sat " + num(dx.value("t_sat_us")) + " us");
  check(r, "Pc-D14 T_x-T_z plateau below its lifetime limit", dx.value("t_sat_us") <= lx, "limit " + num(lx) + " us");
  const FitResult dy = scaling("Pc-D14-4K", kPairYZ, up_to_256);
  const double ly = d14.noise.t1_limit(kPairYZ);
  check(r, "Pc-D14 T_y-T_z plateau approaches its lifetime limit",
        dy.value("t_sat_us") <= ly && dy.value("t_sat_us") >= 0.9 * ly,
        "T_sat " + num(dy.value("t_sat_us")) + " of " + num(ly) + " us");

  const auto& h14 = coherence_preset("Pc-H14-4K");
  const FitResult hx = scaling("Pc-H14-4K", kPairXZ, up_to_1024);
  const double lh = h14.noise.t1_limit(kPairXZ);
  check(r, "Pc-H14 plateau within 10% of 130 us", std::abs(hx.value("t_sat_us") / 130.0 - 1.0) <= 0.10,
        "T_sat " + num(hx.value("t_sat_us")) + " us");
  check(r, "Pc-H14 plateau below its lifetime limit", hx.value("t_sat_us") <= lh, "limit " + num(lh) + " us");

  r.metrics = {{"d14_xz", {{"t_sat_us", dx.value("t_sat_us")}, {"gamma_s", dx.value("gamma_s")}, {"limit_us", lx}}},
               {"d14_yz", {{"t_sat_us", dy.value("t_sat_us")}, {"gamma_s", dy.value("gamma_s")}, {"limit_us", ly}}},
               {"h14_xz", {{"t_sat_us", hx.value("t_sat_us")}, {"gamma_s", hx.value("gamma_s")}, {"limit_us", lh}}}};
}

std::vector<FieldTrace> eseem_series(const NuclearSpin& nuc, double span, std::uint64_t seed, ReproduceReport* r,
                                     const std::string& tag) {
  RunConfig c = config_preset("paper-fig4a");
  c.nuclei = {nuc};
  c.trace.stop_us = span;
  std::vector<FieldTrace> out;
  const Eigen::Vector3d dir = Eigen::Vector3d(1, 2, 3).normalized();
  for (int i = 0; i < 6; ++i) {
    const double b = 5.0 * (i + 1);
    c.field = FieldVector(dir * b);
    c.seed = seed + static_cast<std::uint64_t>(i);
    Dataset d = generate(DatasetKind::Trace, c);
    out.push_back({b, as_trace(d)});
    if (r) r->datasets.emplace_back(tag + "_" + num(b) + "mT", tagged(std::move(d), r->id, seed));
  }
  return out;
}

void fig4a(ReproduceReport& r, std::uint64_t seed) {
  const auto traces = eseem_series(weak_proton(), 40.0, seed, &r, "eseem");
  bool all = true;
  std::string detail;
  Json freqs = Json::array();
  for (const auto& t : traces) {
    double f = std::numeric_limits<double>::quiet_NaN();
    try {
      f = modulation_frequency(t.trace);
    } catch (const NoModulation&) {
    }
    const double expect = kProtonGammaMhzPerT * t.field_mt * 1e-3;
    all = all && std::abs(f / expect - 1.0) <= 0.02;
    detail += (detail.empty() ? "" : ", ") + num(f, 4);
    freqs.push_back(f);
  }
  check(r, "revivals at the proton Larmor frequency at all six fields", all, "MHz: " + detail);
  r.metrics = {{"modulation_mhz", freqs}};
}

void fig4b(ReproduceReport& r, std::uint64_t seed) {
  const auto h = eseem_series(weak_proton(), 40.0, seed, &r, "proton");
  NuclearSpin d = weak_proton();
  d.gamma_mhz_per_t = kDeuteronGammaMhzPerT;
  d.hyperfine_mhz *= kDeuteronGammaMhzPerT / kProtonGammaMhzPerT;
  const auto dt = eseem_series(d, 260.0, seed + 100, nullptr, "deuteron");
  const FitResult fh = fit_larmor(h);
  const FitResult fd = fit_larmor(dt);
  const double gh = fh.value("gamma_mhz_per_t"), gd = fd.value("gamma_mhz_per_t");
  check(r, "proton slope within 1% of 42.577 MHz/T", std::abs(gh / 42.577 - 1.0) <= 0.01,
        "fitted " + num(gh) + " +- " + num(fh.sigma("gamma_mhz_per_t"), 2) + " MHz/T");
  check(r, "deuteron slope 6.5 +- 0.15 times smaller", std::abs(gh / gd - 6.5) <= 0.15, "ratio " + num(gh / gd, 4));
  r.metrics = {{"gamma_h_mhz_per_t", gh}, {"gamma_d_mhz_per_t", gd}, {"ratio", gh / gd}};
}

void fig4d(ReproduceReport& r, std::uint64_t seed) {
  const TripletModel m{{1891.0, 459.0}, Orientation::from_degrees(30.0, 90.0, 70.0), kFreeElectronG};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  RunConfig c;
  c.model = m;
  c.sigma = 5e-4;
  int good = 0;
  double worst = 0.0;
  Json recovered = Json::array();
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector3d dir = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
    const SublevelPair pair =
        std::abs(field_shift(m, kPairXY, dir, 1.0)) >= std::abs(field_shift(m, kPairYZ, dir, 1.0)) ? kPairXY : kPairYZ;
    const double f0 = transition_frequency(m, FieldVector(), pair);
    c.spectrum = {f0 - 20.0, f0 + 20.0, 0.25};
    auto center = [&](const FieldVector& b, std::uint64_t s) {
      c.field = b;
      c.seed = s;
      const Dataset d = generate(DatasetKind::Spectrum, c);
      if (i == 0) r.datasets.emplace_back("spectrum_" + std::string(b.magnitude() > 0 ? "1mT" : "0mT"), tagged(d, r.id, seed));
      return fit_peaks(as_spectrum(d), 1).value("center_1");
    };
    const double shift = center(FieldVector(dir * 1.0), rng()) - center(FieldVector(), rng());
    double b = std::numeric_limits<double>::quiet_NaN();
    try {
      b = invert_field(shift, pair, m, dir, 5.0);
    } catch (const Error&) {
    }
    const double err = std::abs(b - 1.0);
    good += err <= 0.05;
    worst = std::isfinite(err) ? std::max(worst, err) : 1e300;
    recovered.push_back(b);
  }
  check(r, "1.00 mT recovered within 0.05 mT for 20 random directions", good == 20,
        std::to_string(good) + " of 20, worst error " + num(worst, 3) + " mT");
  r.metrics = {{"recovered_mt", recovered}};
}

const std::map<std::string, std::function<void(ReproduceReport&, std::uint64_t)>>& table() {
  static const std::map<std::string, std::function<void(ReproduceReport&, std::uint64_t)>> t{
      {"fig1d", fig1d}, {"fig1e", fig1e}, {"fig2b", fig2b}, {"fig2d", fig2d}, {"fig3b", fig3b},
      {"fig3d", fig3d}, {"fig3e", fig3e}, {"fig4a", fig4a}, {"fig4b", fig4b}, {"fig4d", fig4d}};
  return t;
}

}  // namespace

bool ReproduceReport::pass() const {
  if (checks.empty()) return false;
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

std::vector<std::string> reproduce_ids() {
  std::vector<std::string> ids;
  for (const auto& [k, v] : table()) ids.push_back(k);
  return ids;
}

ReproduceReport reproduce(const std::string& id, std::uint64_t seed) {
  const auto it = table().find(id);
  if (it == table().end()) {
    std::string list;
    for (const auto& k : reproduce_ids()) list += (list.empty() ? "" : ", ") + k;
    throw UsageError("unknown figure id '" + id + "' (valid: " + list + ")");
  }
  ReproduceReport r;
  r.id = id;
  try {
    it->second(r, seed);
  } catch (const std::exception& e) {
    r.checks.push_back({"pipeline completed", false, e.what()});
  }
  return r;
}

}  // namespace triplet::wb
