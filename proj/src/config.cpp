#include <algorithm>
#include <cmath>
#include <set>

#include "triplet/workbench.hpp"

namespace triplet::wb {

namespace {

constexpr double kDeg = 180.0 / 3.14159265358979323846;

// Cursor over one JSON object that tracks its path and rejects unknown keys.
class Node {
 public:
  Node(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) throw ConfigError(sub(k) + ": unknown key");
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  Node child(const char* key) const { return Node(j_.at(key), sub(key)); }
  const Json& raw(const char* key) const { return j_.at(key); }

  void number(const char* key, double& out) const {
    if (!has(key)) return;
    out = as_number(j_.at(key), sub(key));
  }
  void positive(const char* key, double& out) const {
    if (!has(key)) return;
    out = as_number(j_.at(key), sub(key));
    if (!(out > 0.0)) throw ConfigError(sub(key) + ": must be > 0");
  }
  void non_negative(const char* key, double& out) const {
    if (!has(key)) return;
    out = as_number(j_.at(key), sub(key));
    if (out < 0.0) throw ConfigError(sub(key) + ": must be >= 0");
  }
  void integer(const char* key, int& out, int lo, int hi) const {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(sub(key) + ": expected an integer");
    const auto x = v.get<long long>();
    if (x < lo || x > hi)
      throw ConfigError(sub(key) + ": must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    out = static_cast<int>(x);
  }
  void boolean(const char* key, bool& out) const {
    if (!has(key)) return;
    if (!j_.at(key).is_boolean()) throw ConfigError(sub(key) + ": expected true or false");
    out = j_.at(key).get<bool>();
  }
  void string(const char* key, std::string& out) const {
    if (!has(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(sub(key) + ": expected a string");
    out = j_.at(key).get<std::string>();
  }
  void pair(const char* key, SublevelPair& out) const {
    std::string s;
    string(key, s);
    if (s.empty()) return;
    try {
      out = parse_pair(s);
    } catch (const Error&) {
      throw ConfigError(sub(key) + ": unknown transition pair '" + s + "' (use xy, yz or xz)");
    }
  }
  template <std::size_t N>
  void array(const char* key, std::array<double, N>& out) const {
    if (!has(key)) return;
    const auto v = numbers(key);
    if (v.size() != N) throw ConfigError(sub(key) + ": expected " + std::to_string(N) + " numbers");
    std::copy(v.begin(), v.end(), out.begin());
  }
  std::vector<double> numbers(const char* key) const {
    const auto& a = j_.at(key);
    if (!a.is_array()) throw ConfigError(sub(key) + ": expected an array");
    std::vector<double> out;
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(as_number(a[i], sub(key) + "[" + std::to_string(i) + "]"));
    return out;
  }
  std::vector<Node> objects(const char* key) const {
    const auto& a = j_.at(key);
    if (!a.is_array()) throw ConfigError(sub(key) + ": expected an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < a.size(); ++i) out.emplace_back(a[i], sub(key) + "[" + std::to_string(i) + "]");
    return out;
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError((path_.empty() ? "<root>" : path_) + ": " + msg); }

 private:
  static double as_number(const Json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path + ": must be finite");
    return x;
  }

  const Json& j_;
  std::string path_;
};

Eigen::Vector3d unit(const Eigen::Vector3d& v) {
  return std::abs(v.norm() - 1.0) < 1e-12 ? v : v.normalized();
}

Eigen::Vector3d vec3(const Node& n, const char* key) {
  const auto v = n.numbers(key);
  if (v.size() != 3) throw ConfigError(n.sub(key) + ": expected 3 numbers");
  return {v[0], v[1], v[2]};
}

void apply_json(const Json& root, RunConfig& c) {
  const Node n(root, "");
  n.allow({"preset", "seed", "sigma", "counts_scale", "model", "field_mt", "rates", "odmr", "noise", "nuclei",
           "spectrum", "trace", "polarization", "cpmg", "orientation", "fit", "output"});
  if (n.has("seed")) {
    const auto& s = n.raw("seed");
    if (!s.is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
    c.seed = s.get<std::uint64_t>();
  }
  n.non_negative("sigma", c.sigma);
  if (n.has("counts_scale")) {
    double v = 0.0;
    n.positive("counts_scale", v);
    c.counts_scale = v;
  }
  if (n.has("model")) {
    const Node m = n.child("model");
    m.allow({"d_mhz", "e_mhz", "g", "euler_deg"});
    m.number("d_mhz", c.model.zfs.d_mhz);
    m.number("e_mhz", c.model.zfs.e_mhz);
    m.number("g", c.model.g);
    if (m.has("euler_deg")) {
      const Eigen::Vector3d e = vec3(m, "euler_deg");
      c.model.orientation = Orientation::from_degrees(e.x(), e.y(), e.z());
    }
    try {
      c.model.validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("model: ") + e.what());
    }
  }
  if (n.has("field_mt")) {
    const Eigen::Vector3d b = vec3(n, "field_mt");
    if (b.norm() >= FieldVector::kMaxMagnitudeMt) throw ConfigError("field_mt: magnitude must be below 1e4 mT");
    c.field = FieldVector(b);
  }
  if (n.has("rates")) {
    const Node r = n.child("rates");
    r.allow({"k_pump", "k_fl", "k_isc", "k_dec"});
    r.non_negative("k_pump", c.rates.k_pump);
    r.non_negative("k_fl", c.rates.k_fl);
    r.array("k_isc", c.rates.k_isc);
    r.array("k_dec", c.rates.k_dec);
    try {
      c.rates.validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("rates: ") + e.what());
    }
  }
  if (n.has("odmr")) {
    const Node o = n.child("odmr");
    o.allow({"linewidth_fwhm_mhz", "mw_strength", "drive_axis"});
    o.positive("linewidth_fwhm_mhz", c.odmr.linewidth_fwhm_mhz);
    o.non_negative("mw_strength", c.odmr.mw_strength);
    if (o.has("drive_axis")) {
      const Eigen::Vector3d a = vec3(o, "drive_axis");
      if (a.norm() == 0.0) throw ConfigError("odmr.drive_axis: must be nonzero");
      c.odmr.drive_axis = unit(a);
    }
  }
  if (n.has("noise")) {
    const Node z = n.child("noise");
    z.allow({"preset", "t1_us", "white", "lorentzian", "tabulated"});
    if (z.has("preset")) {
      std::string p;
      z.string("preset", p);
      const auto names = coherence_preset_names();
      if (std::find(names.begin(), names.end(), p) == names.end())
        throw ConfigError("noise.preset: unknown preset '" + p + "'");
      c.noise_preset = p;
    }
    z.array("t1_us", c.noise.t1_us);
    if (z.has("white") || z.has("lorentzian") || z.has("tabulated")) c.noise.dephasing.clear();
    if (z.has("white"))
      for (const auto& w : z.objects("white")) {
        w.allow({"s0"});
        WhiteNoise x;
        w.non_negative("s0", x.s0);
        c.noise.dephasing.emplace_back(x);
      }
    if (z.has("lorentzian"))
      for (const auto& l : z.objects("lorentzian")) {
        l.allow({"b_mhz", "tau_c_us"});
        LorentzianNoise x;
        l.non_negative("b_mhz", x.b_mhz);
        l.positive("tau_c_us", x.tau_c_us);
        c.noise.dephasing.emplace_back(x);
      }
    if (z.has("tabulated"))
      for (const auto& t : z.objects("tabulated")) {
        t.allow({"omega", "density"});
        TabulatedNoise x;
        x.omega = t.numbers("omega");
        x.density = t.numbers("density");
        c.noise.dephasing.emplace_back(x);
      }
    try {
      c.noise.validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("noise: ") + e.what());
    }
  }
  if (n.has("nuclei")) {
    c.nuclei.clear();
    for (const auto& a : n.objects("nuclei")) {
      a.allow({"gamma_mhz_per_t", "hyperfine_mhz"});
      NuclearSpin s;
      a.number("gamma_mhz_per_t", s.gamma_mhz_per_t);
      if (a.has("hyperfine_mhz")) {
        const auto& rows = a.raw("hyperfine_mhz");
        if (!rows.is_array() || rows.size() != 3) throw ConfigError(a.sub("hyperfine_mhz") + ": expected 3x3 matrix");
        for (int i = 0; i < 3; ++i) {
          const Json wrap = {{"r", rows[static_cast<std::size_t>(i)]}};
          const Eigen::Vector3d r = vec3(Node(wrap, a.sub("hyperfine_mhz") + "[" + std::to_string(i) + "]"), "r");
          s.hyperfine_mhz.row(i) = r.transpose();
        }
      }
      c.nuclei.push_back(s);
    }
    if (c.nuclei.size() > static_cast<std::size_t>(kMaxNuclei))
      throw ConfigError("nuclei: at most " + std::to_string(kMaxNuclei) + " nuclei");
  }
  if (n.has("spectrum")) {
    const Node s = n.child("spectrum");
    s.allow({"start_mhz", "stop_mhz", "step_mhz", "hold_mhz"});
    s.number("start_mhz", c.spectrum.start);
    s.number("stop_mhz", c.spectrum.stop);
    s.positive("step_mhz", c.spectrum.step);
    if (s.has("hold_mhz")) {
      double h = 0.0;
      s.positive("hold_mhz", h);
      c.hold_mhz = h;
    }
    if (!(c.spectrum.stop > c.spectrum.start)) throw ConfigError("spectrum.stop_mhz: must exceed start_mhz");
  }
  if (n.has("trace")) {
    const Node t = n.child("trace");
    t.allow({"sequence", "pair", "n_pulses", "start_us", "stop_us", "count", "rabi_mhz"});
    t.string("sequence", c.trace.sequence);
    if (c.trace.sequence != "cpmg" && c.trace.sequence != "eseem" && c.trace.sequence != "rabi")
      throw ConfigError("trace.sequence: expected cpmg, eseem or rabi");
    t.pair("pair", c.trace.pair);
    t.integer("n_pulses", c.trace.n_pulses, 0, 1 << 20);
    t.non_negative("start_us", c.trace.start_us);
    t.positive("stop_us", c.trace.stop_us);
    int count = static_cast<int>(c.trace.count);
    t.integer("count", count, 2, 1 << 22);
    c.trace.count = static_cast<std::size_t>(count);
    t.positive("rabi_mhz", c.trace.rabi_mhz);
    if (!(c.trace.stop_us > c.trace.start_us)) throw ConfigError("trace.stop_us: must exceed start_us");
  }
  if (n.has("polarization")) {
    const Node p = n.child("polarization");
    p.allow({"theta0_deg", "amplitude", "offset", "n_angles"});
    p.number("theta0_deg", c.polarization.theta0_deg);
    p.non_negative("amplitude", c.polarization.amplitude);
    p.non_negative("offset", c.polarization.offset);
    p.integer("n_angles", c.polarization.n_angles, 8, 100000);
  }
  if (n.has("cpmg")) {
    const Node p = n.child("cpmg");
    p.allow({"pair", "n_pulses"});
    p.pair("pair", c.cpmg.pair);
    if (p.has("n_pulses")) {
      c.cpmg.n_pulses.clear();
      for (double v : p.numbers("n_pulses")) {
        if (v < 1 || v != std::floor(v) || v > (1 << 20)) throw ConfigError("cpmg.n_pulses: expected integers >= 1");
        c.cpmg.n_pulses.push_back(static_cast<int>(v));
      }
    }
  }
  if (n.has("orientation")) {
    const Node o = n.child("orientation");
    o.allow({"directions", "fields_mt", "sigma_mhz"});
    if (o.has("directions")) {
      c.orientation.directions.clear();
      const auto& a = o.raw("directions");
      if (!a.is_array()) throw ConfigError("orientation.directions: expected an array");
      for (std::size_t i = 0; i < a.size(); ++i) {
        const Json wrap = {{"d", a[i]}};
        const Eigen::Vector3d d = vec3(Node(wrap, "orientation.directions[" + std::to_string(i) + "]"), "d");
        if (d.norm() == 0.0) throw ConfigError("orientation.directions[" + std::to_string(i) + "]: must be nonzero");
        c.orientation.directions.push_back(unit(d));
      }
    }
    if (o.has("fields_mt")) c.orientation.fields_mt = o.numbers("fields_mt");
    o.positive("sigma_mhz", c.orientation.sigma_mhz);
  }
  if (n.has("fit")) {
    const Node f = n.child("fit");
    f.allow({"n_peaks", "fit_offset", "fixed_exponent", "t_sat_max_us", "sharpness"});
    f.integer("n_peaks", c.fit.n_peaks, 1, 16);
    f.boolean("fit_offset", c.fit.fit_offset);
    if (f.has("fixed_exponent")) {
      double v = 0.0;
      f.positive("fixed_exponent", v);
      c.fit.fixed_exponent = v;
    }
    if (f.has("t_sat_max_us")) {
      double v = 0.0;
      f.positive("t_sat_max_us", v);
      c.fit.t_sat_max_us = v;
    }
    f.positive("sharpness", c.fit.sharpness);
  }
  if (n.has("output")) {
    const Node o = n.child("output");
    o.allow({"dir", "svg"});
    o.string("dir", c.out_dir);
    o.boolean("svg", c.svg);
  }
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col > 1 ? col - 1 : 1};
}

}  // namespace

void RunConfig::validate() const {
  if ((sigma > 0.0 || counts_scale) && !seed) throw ConfigError("seed: required when noise is injected");
}

std::vector<std::string> config_preset_names() {
  return {"paper-fig1d", "paper-fig1e", "paper-fig2b", "paper-fig2d", "paper-fig3e", "paper-fig4a"};
}

RunConfig config_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "paper-fig1d") {
    c.seed = 1;
    c.sigma = 0.002;
    c.spectrum = {850.0, 1500.0, 1.0};
    c.fit.n_peaks = 2;
  } else if (name == "paper-fig1e") {
    c.seed = 1;
    c.sigma = 0.005;
    c.noise_preset = "Pc-H14-4K";
    c.trace = {"cpmg", kPairYZ, 1, 0.0, 12.0, 200, 5.0};
  } else if (name == "paper-fig2b") {
    c.seed = 1;
    c.model.orientation = Orientation::from_degrees(30.0, 90.0, 70.0);
    c.orientation.directions = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, Eigen::Vector3d(1, 1, 0).normalized(),
                                Eigen::Vector3d(0, 1, 1).normalized(), Eigen::Vector3d(1, 0, 1).normalized()};
    c.orientation.fields_mt = {10, 20, 30, 40};
    c.orientation.sigma_mhz = 1.0;
    c.sigma = 1.0;
  } else if (name == "paper-fig2d") {
    c.seed = 1;
    c.sigma = 0.05;
    c.polarization = {60.0, 1.0, 0.1, 36};
    c.counts_scale.reset();
  } else if (name == "paper-fig3e") {
    c.noise_preset = "Pc-D14-4K";
    c.cpmg.pair = kPairXZ;
    c.cpmg.n_pulses = {1, 2, 4, 8, 16, 32, 64, 128, 256};
  } else if (name == "paper-fig4a") {
    c.seed = 1;
    // modulation depth of this weakly coupled proton is about 3e-5
    c.sigma = 1e-6;
    c.field = FieldVector(Eigen::Vector3d(1, 2, 3).normalized() * 20.0);
    NuclearSpin h;
    h.hyperfine_mhz << 0.004, 0.002, 0.0, 0.002, -0.002, 0.001, 0.0, 0.001, 0.006;
    c.nuclei = {h};
    c.trace = {"eseem", kPairYZ, 1, 0.0, 40.0, 801, 5.0};
  } else {
    std::string list;
    for (const auto& n : config_preset_names()) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("preset: unknown preset '" + name + "' (valid: " + list + ")");
  }
  return c;
}

RunConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    throw ConfigError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": invalid JSON");
  }
  if (!j.is_object()) throw ConfigError("<root>: expected an object");
  RunConfig c;
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError("preset: expected a string");
    c = config_preset(j["preset"].get<std::string>());
  }
  apply_json(j, c);
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Json config_to_json(const RunConfig& c) {
  Json j;
  if (c.preset) j["preset"] = *c.preset;
  if (c.seed) j["seed"] = *c.seed;
  j["sigma"] = c.sigma;
  if (c.counts_scale) j["counts_scale"] = *c.counts_scale;
  const Orientation& o = c.model.orientation;
  j["model"] = {{"d_mhz", c.model.zfs.d_mhz},
                {"e_mhz", c.model.zfs.e_mhz},
                {"g", c.model.g},
                {"euler_deg", {o.alpha() * kDeg, o.beta() * kDeg, o.gamma() * kDeg}}};
  j["field_mt"] = {c.field.bx(), c.field.by(), c.field.bz()};
  j["rates"] = {{"k_pump", c.rates.k_pump}, {"k_fl", c.rates.k_fl}, {"k_isc", c.rates.k_isc}, {"k_dec", c.rates.k_dec}};
  j["odmr"] = {{"linewidth_fwhm_mhz", c.odmr.linewidth_fwhm_mhz}, {"mw_strength", c.odmr.mw_strength}};
  if (c.odmr.drive_axis) j["odmr"]["drive_axis"] = {c.odmr.drive_axis->x(), c.odmr.drive_axis->y(), c.odmr.drive_axis->z()};
  Json noise;
  if (c.noise_preset) noise["preset"] = *c.noise_preset;
  noise["t1_us"] = c.noise.t1_us;
  for (const auto& comp : c.noise.dephasing) {
    if (const auto* w = std::get_if<WhiteNoise>(&comp)) noise["white"].push_back({{"s0", w->s0}});
    if (const auto* l = std::get_if<LorentzianNoise>(&comp))
      noise["lorentzian"].push_back({{"b_mhz", l->b_mhz}, {"tau_c_us", l->tau_c_us}});
    if (const auto* t = std::get_if<TabulatedNoise>(&comp))
      noise["tabulated"].push_back({{"omega", t->omega}, {"density", t->density}});
  }
  j["noise"] = noise;
  j["nuclei"] = Json::array();
  for (const auto& n : c.nuclei) {
    Json a = Json::array();
    for (int i = 0; i < 3; ++i) a.push_back({n.hyperfine_mhz(i, 0), n.hyperfine_mhz(i, 1), n.hyperfine_mhz(i, 2)});
    j["nuclei"].push_back({{"gamma_mhz_per_t", n.gamma_mhz_per_t}, {"hyperfine_mhz", a}});
  }
  j["spectrum"] = {{"start_mhz", c.spectrum.start}, {"stop_mhz", c.spectrum.stop}, {"step_mhz", c.spectrum.step}};
  if (c.hold_mhz) j["spectrum"]["hold_mhz"] = *c.hold_mhz;
  j["trace"] = {{"sequence", c.trace.sequence}, {"pair", pair_name(c.trace.pair)}, {"n_pulses", c.trace.n_pulses},
                {"start_us", c.trace.start_us},  {"stop_us", c.trace.stop_us},     {"count", c.trace.count},
                {"rabi_mhz", c.trace.rabi_mhz}};
  j["polarization"] = {{"theta0_deg", c.polarization.theta0_deg},
                       {"amplitude", c.polarization.amplitude},
                       {"offset", c.polarization.offset},
                       {"n_angles", c.polarization.n_angles}};
  j["cpmg"] = {{"pair", pair_name(c.cpmg.pair)}, {"n_pulses", c.cpmg.n_pulses}};
  Json dirs = Json::array();
  for (const auto& d : c.orientation.directions) dirs.push_back({d.x(), d.y(), d.z()});
  j["orientation"] = {{"directions", dirs}, {"fields_mt", c.orientation.fields_mt}, {"sigma_mhz", c.orientation.sigma_mhz}};
  j["fit"] = {{"n_peaks", c.fit.n_peaks}, {"fit_offset", c.fit.fit_offset}, {"sharpness", c.fit.sharpness}};
  if (c.fit.fixed_exponent) j["fit"]["fixed_exponent"] = *c.fit.fixed_exponent;
  if (c.fit.t_sat_max_us) j["fit"]["t_sat_max_us"] = *c.fit.t_sat_max_us;
  j["output"] = {{"dir", c.out_dir}, {"svg", c.svg}};
  return j;
}

}  // namespace triplet::wb
