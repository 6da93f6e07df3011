#include <cmath>
#include <numbers>

#include "triplet/workbench.hpp"

namespace triplet::wb {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

const Dataset& single(const std::vector<Dataset>& inputs, const std::string& kind) {
  if (inputs.size() != 1) throw UsageError("fit " + kind + ": expects exactly one input dataset");
  return inputs.front();
}

Json values_json(const FitResult& r) {
  Json p = Json::object();
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    const double s = r.sigma(r.names[i]);
    p[r.names[i]] = {{"value", r.values(static_cast<Eigen::Index>(i))}, {"sigma", std::isfinite(s) ? Json(s) : Json(nullptr)}};
  }
  return p;
}

}  // namespace

std::vector<std::string> fit_kinds() { return {"peaks", "decay", "cpmg", "polarization", "orientation", "larmor"}; }

Json fit_result_json(const FitResult& r) {
  Json j;
  j["parameters"] = values_json(r);
  Json cov = Json::array();
  for (Eigen::Index i = 0; i < r.covariance.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < r.covariance.cols(); ++k) row.push_back(r.covariance(i, k));
    cov.push_back(row);
  }
  j["covariance"] = cov;
  j["residuals"] = std::vector<double>(r.residuals.data(), r.residuals.data() + r.residuals.size());
  j["residual_norm"] = r.residual_norm;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["diagnostic"] = r.diagnostic;
  j["warnings"] = r.warnings;
  return j;
}

FitOutput run_fit(const std::string& kind, const std::vector<Dataset>& inputs, const RunConfig& cfg) {
  FitOutput out;
  Json extra = Json::object();

  if (kind == "peaks") {
    const OdmrSpectrum s = as_spectrum(single(inputs, kind));
    const int n = cfg.fit.n_peaks;
    out.result = fit_peaks(s, n);
    Eigen::VectorXd p(3 * n + 1);
    std::vector<double> centers;
    for (int k = 1; k <= n; ++k) {
      const std::string i = std::to_string(k);
      p.segment<3>(3 * (k - 1)) << out.result.value("center_" + i), out.result.value("fwhm_" + i),
          out.result.value("amplitude_" + i);
      centers.push_back(out.result.value("center_" + i));
    }
    p(3 * n) = out.result.value("baseline");
    for (const auto& smp : s.samples) {
      out.x.push_back(smp.freq_mhz);
      out.data.push_back(smp.contrast);
      out.model.push_back(peaks_model(p, smp.freq_mhz));
    }
    out.x_label = "frequency (MHz)";
    out.y_label = "ODMR contrast";
    if (n >= 2 && n <= 3) {
      const ZfsEstimate z = zfs_from_peaks(centers);
      extra["zfs"] = {{"d_mhz", z.zfs.d_mhz}, {"e_mhz", z.zfs.e_mhz}};
      if (z.has_residual) extra["zfs"]["residual_mhz"] = z.residual_mhz;
    }
  } else if (kind == "decay") {
    const CoherenceTrace t = as_trace(single(inputs, kind));
    DecayFitOptions opt;
    opt.fit_offset = cfg.fit.fit_offset;
    opt.fixed_exponent = cfg.fit.fixed_exponent;
    out.result = fit_decay(t, opt);
    const double a = out.result.value("amplitude"), t2 = out.result.value("t2_us"),
                 e = out.result.value("exponent"), c = out.result.value("offset");
    for (const auto& smp : t.samples) {
      out.x.push_back(smp.t_us);
      out.data.push_back(smp.signal);
      out.model.push_back(a * std::exp(-std::pow(smp.t_us / t2, e)) + c);
    }
    out.x_label = "time (us)";
    out.y_label = "coherence";
  } else if (kind == "cpmg") {
    const auto pts = as_cpmg(single(inputs, kind));
    CpmgFitOptions opt;
    opt.sharpness = cfg.fit.sharpness;
    opt.t_sat_max_us = cfg.fit.t_sat_max_us;
    out.result = fit_cpmg_scaling(pts, opt);
    for (const auto& q : pts) {
      out.x.push_back(q.n_pulses);
      out.data.push_back(q.t2_us);
      out.model.push_back(cpmg_scaling_model(q.n_pulses, out.result.value("t0_us"), out.result.value("gamma_s"),
                                             out.result.value("t_sat_us"), opt.sharpness));
    }
    out.x_label = "number of pi pulses";
    out.y_label = "T2 (us)";
  } else if (kind == "polarization") {
    const auto scan = as_polarization(single(inputs, kind));
    out.result = fit_polarization(scan);
    const double th = out.result.value("theta0_deg"), a = out.result.value("amplitude"),
                 c = out.result.value("offset");
    for (const auto& smp : scan) {
      const double cs = std::cos((smp.angle_deg - th) * kDeg);
      out.x.push_back(smp.angle_deg);
      out.data.push_back(smp.counts);
      out.model.push_back(a * cs * cs + c);
    }
    out.x_label = "polarization angle (deg)";
    out.y_label = "counts";
  } else if (kind == "orientation") {
    const auto data = as_orientation(single(inputs, kind));
    const OrientationFit f = fit_orientation(data, cfg.model.zfs, cfg.model.g);
    out.result = f;
    extra["tensor_rank"] = f.tensor_rank;
    extra["equivalents_deg"] = f.equivalents_deg;
    for (std::size_t i = 0; i < data.size(); ++i) {
      out.x.push_back(static_cast<double>(i));
      out.data.push_back(data[i].freq_mhz);
      out.model.push_back(data[i].freq_mhz + f.residuals(static_cast<Eigen::Index>(i)) * data[i].sigma_mhz);
    }
    out.x_label = "point index";
    out.y_label = "frequency (MHz)";
  } else if (kind == "larmor") {
    if (inputs.size() < 3) throw UsageError("fit larmor: expects at least 3 trace datasets");
    std::vector<FieldTrace> traces;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto& d = inputs[i];
      if (!d.provenance.contains("field_mt") || !d.provenance["field_mt"].is_number())
        throw ParseError("input " + std::to_string(i + 1) + ": provenance lacks field_mt");
      traces.push_back({d.provenance["field_mt"].get<double>(), as_trace(d)});
    }
    out.result = fit_larmor(traces);
    const double gm = out.result.value("gamma_mhz_per_t");
    for (const auto& tr : traces) {
      double f = std::numeric_limits<double>::quiet_NaN();
      try {
        f = modulation_frequency(tr.trace);
      } catch (const NoModulation&) {
      }
      out.x.push_back(tr.field_mt);
      out.data.push_back(f);
      out.model.push_back(gm * tr.field_mt * 1e-3);
    }
    out.x_label = "field (mT)";
    out.y_label = "modulation frequency (MHz)";
  } else {
    std::string list;
    for (const auto& k : fit_kinds()) list += (list.empty() ? "" : ", ") + k;
    throw UsageError("unknown fit kind '" + kind + "' (valid: " + list + ")");
  }

  out.report = {{"kind", kind}, {"inputs", inputs.size()}};
  out.report["fit"] = fit_result_json(out.result);
  for (const auto& [k, v] : extra.items()) out.report[k] = v;
  return out;
}

}  // namespace triplet::wb
