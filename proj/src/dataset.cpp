#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "triplet/workbench.hpp"

namespace triplet::wb {

namespace {

constexpr std::size_t kPairColumn = 3;

struct Schema {
  DatasetKind kind;
  const char* name;
  std::vector<std::string> columns;
  std::vector<std::string> units;
};

const std::vector<Schema>& schemas() {
  static const std::vector<Schema> s{
      {DatasetKind::Spectrum, "spectrum", {"freq_mhz", "contrast"}, {"MHz", "1"}},
      {DatasetKind::Trace, "trace", {"t_us", "signal"}, {"us", "1"}},
      {DatasetKind::Polarization, "polarization", {"angle_deg", "counts"}, {"deg", "counts"}},
      {DatasetKind::CpmgPoints, "cpmg-points", {"n_pulses", "t2_us"}, {"1", "us"}},
      {DatasetKind::OrientationPoints,
       "orientation-points",
       {"bx_mt", "by_mt", "bz_mt", "pair", "freq_mhz", "sigma_mhz"},
       {"mT", "mT", "mT", "-", "MHz", "MHz"}},
  };
  return s;
}

const Schema& schema(DatasetKind k) {
  for (const auto& s : schemas())
    if (s.kind == k) return s;
  throw InvalidInput("unknown dataset kind");
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && e[-1] == ' ') --e;
  if (b < e && *b == '+') ++b;
  const auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e && std::isfinite(out);
}

Dataset empty(DatasetKind k) {
  Dataset d;
  d.kind = k;
  const auto n = schema(k).columns.size();
  d.columns.assign(n, {});
  d.text.assign(n, {});
  return d;
}

void require_kind(const Dataset& d, DatasetKind k) {
  if (d.kind != k)
    throw InvalidInput("dataset is '" + kind_name(d.kind) + "', expected '" + kind_name(k) + "'");
}

}  // namespace

std::string kind_name(DatasetKind k) { return schema(k).name; }

DatasetKind parse_kind(const std::string& name) {
  std::string list;
  for (const auto& s : schemas()) {
    if (name == s.name) return s.kind;
    list += (list.empty() ? "" : ", ") + std::string(s.name);
  }
  throw UsageError("unknown dataset kind '" + name + "' (valid: " + list + ")");
}

const std::vector<std::string>& kind_columns(DatasetKind k) { return schema(k).columns; }
const std::vector<std::string>& kind_units(DatasetKind k) { return schema(k).units; }

std::size_t Dataset::rows() const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (!columns[c].empty()) return columns[c].size();
    if (c < text.size() && !text[c].empty()) return text[c].size();
  }
  return 0;
}

void Dataset::validate() const {
  const auto& s = schema(kind);
  if (columns.size() != s.columns.size()) throw InvalidInput("dataset: wrong number of columns");
  const std::size_t n = rows();
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const bool textual = kind == DatasetKind::OrientationPoints && c == kPairColumn;
    const std::size_t len = textual ? text[c].size() : columns[c].size();
    if (len != n) throw InvalidInput("dataset: column '" + s.columns[c] + "' length differs");
  }
  if (provenance.is_null() || provenance.empty()) throw InvalidInput("dataset: provenance is empty");
}

Dataset make_dataset(const OdmrSpectrum& sp) {
  Dataset d = empty(DatasetKind::Spectrum);
  for (const auto& s : sp.samples) {
    d.columns[0].push_back(s.freq_mhz);
    d.columns[1].push_back(s.contrast);
  }
  return d;
}

Dataset make_dataset(const CoherenceTrace& t) {
  Dataset d = empty(DatasetKind::Trace);
  for (const auto& s : t.samples) {
    d.columns[0].push_back(s.t_us);
    d.columns[1].push_back(s.signal);
  }
  return d;
}

Dataset make_dataset(const PolarizationScan& p) {
  Dataset d = empty(DatasetKind::Polarization);
  for (const auto& s : p) {
    d.columns[0].push_back(s.angle_deg);
    d.columns[1].push_back(s.counts);
  }
  return d;
}

Dataset make_dataset(std::span<const CpmgPoint> pts) {
  Dataset d = empty(DatasetKind::CpmgPoints);
  for (const auto& p : pts) {
    d.columns[0].push_back(p.n_pulses);
    d.columns[1].push_back(p.t2_us);
  }
  return d;
}

Dataset make_dataset(const OrientationDataset& o) {
  Dataset d = empty(DatasetKind::OrientationPoints);
  for (const auto& p : o) {
    d.columns[0].push_back(p.field.bx());
    d.columns[1].push_back(p.field.by());
    d.columns[2].push_back(p.field.bz());
    d.text[kPairColumn].push_back(pair_name(p.pair));
    d.columns[4].push_back(p.freq_mhz);
    d.columns[5].push_back(p.sigma_mhz);
  }
  return d;
}

OdmrSpectrum as_spectrum(const Dataset& d) {
  require_kind(d, DatasetKind::Spectrum);
  OdmrSpectrum s;
  for (std::size_t i = 0; i < d.rows(); ++i) s.samples.push_back({d.columns[0][i], d.columns[1][i]});
  return s;
}

CoherenceTrace as_trace(const Dataset& d) {
  require_kind(d, DatasetKind::Trace);
  CoherenceTrace t;
  for (std::size_t i = 0; i < d.rows(); ++i) t.samples.push_back({d.columns[0][i], d.columns[1][i]});
  return t;
}

PolarizationScan as_polarization(const Dataset& d) {
  require_kind(d, DatasetKind::Polarization);
  PolarizationScan p;
  for (std::size_t i = 0; i < d.rows(); ++i) p.push_back({d.columns[0][i], d.columns[1][i]});
  return p;
}

std::vector<CpmgPoint> as_cpmg(const Dataset& d) {
  require_kind(d, DatasetKind::CpmgPoints);
  std::vector<CpmgPoint> p;
  for (std::size_t i = 0; i < d.rows(); ++i) p.push_back({d.columns[0][i], d.columns[1][i]});
  return p;
}

OrientationDataset as_orientation(const Dataset& d) {
  require_kind(d, DatasetKind::OrientationPoints);
  OrientationDataset o;
  for (std::size_t i = 0; i < d.rows(); ++i)
    o.push_back({FieldVector(d.columns[0][i], d.columns[1][i], d.columns[2][i]), parse_pair(d.text[kPairColumn][i]),
                 d.columns[4][i], d.columns[5][i]});
  return o;
}

std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string dataset_csv(const Dataset& d) {
  d.validate();
  const auto& s = schema(d.kind);
  std::string out = join(s.columns) + "\n" + join(s.units) + "\n";
  const std::size_t n = d.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < s.columns.size(); ++c) {
      if (c) out += ',';
      if (d.kind == DatasetKind::OrientationPoints && c == kPairColumn) {
        out += d.text[c][i];
      } else {
        out += format_number(d.columns[c][i]);
      }
    }
    out += '\n';
  }
  return out;
}

Dataset parse_dataset_csv(const std::string& text, std::optional<DatasetKind> expected) {
  std::vector<std::string> lines;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("line 1: empty file, expected a column-name header");

  const Schema* sch = nullptr;
  for (const auto& s : schemas())
    if (lines[0] == join(s.columns)) sch = &s;
  if (!sch) {
    std::string allowed;
    for (const auto& s : schemas()) allowed += "\n  " + join(s.columns);
    throw ParseError("line 1: unrecognized column header '" + lines[0] + "'; expected one of:" + allowed);
  }
  if (expected && sch->kind != *expected)
    throw ParseError("line 1: header is a '" + std::string(sch->name) + "' dataset, expected '" + kind_name(*expected) +
                     "'");
  if (lines.size() < 2 || lines[1] != join(sch->units)) {
    const std::string got = lines.size() < 2 ? "end of file" : "'" + lines[1] + "'";
    throw ParseError("line 2: missing units header, expected '" + join(sch->units) + "', found " + got);
  }

  Dataset d = empty(sch->kind);
  const std::size_t ncol = sch->columns.size();
  for (std::size_t li = 2; li < lines.size(); ++li) {
    const std::string where = "line " + std::to_string(li + 1) + " (row " + std::to_string(li - 1) + ")";
    const auto fields = split(lines[li]);
    if (fields.size() != ncol)
      throw ParseError(where + ": expected " + std::to_string(ncol) + " columns, found " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < ncol; ++c) {
      if (sch->kind == DatasetKind::OrientationPoints && c == kPairColumn) {
        try {
          d.text[c].push_back(pair_name(parse_pair(fields[c])));
        } catch (const Error&) {
          throw ParseError(where + ", column " + std::to_string(c + 1) + " (" + sch->columns[c] +
                           "): invalid transition pair '" + fields[c] + "'");
        }
        continue;
      }
      double v = 0.0;
      if (!parse_double(fields[c], v))
        throw ParseError(where + ", column " + std::to_string(c + 1) + " (" + sch->columns[c] + "): invalid number '" +
                         fields[c] + "'");
      d.columns[c].push_back(v);
    }
  }
  return d;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_dataset(const Dataset& d, const std::filesystem::path& csv_path) {
  const std::string csv = dataset_csv(d);
  Json side;
  side["kind"] = kind_name(d.kind);
  side["rows"] = d.rows();
  side["provenance"] = d.provenance;
  write_file_atomic(csv_path, csv);
  write_file_atomic(csv_path.string() + ".provenance.json", side.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& csv_path, std::optional<DatasetKind> expected) {
  std::string text;
  try {
    text = read_file(csv_path);
  } catch (const Error& e) {
    throw ParseError(e.what());
  }
  Dataset d;
  try {
    d = parse_dataset_csv(text, expected);
  } catch (const ParseError& e) {
    throw ParseError(csv_path.string() + ": " + e.what());
  }
  const std::filesystem::path side = csv_path.string() + ".provenance.json";
  if (std::filesystem::exists(side)) {
    Json j;
    try {
      j = Json::parse(read_file(side));
    } catch (const Json::parse_error&) {
      throw ParseError(side.string() + ": invalid JSON");
    }
    if (!j.is_object() || !j.contains("provenance")) throw ParseError(side.string() + ": missing provenance block");
    if (j.contains("kind") && j["kind"] != kind_name(d.kind))
      throw ParseError(side.string() + ": kind does not match the CSV header");
    d.provenance = j["provenance"];
  }
  if (d.provenance.is_null() || d.provenance.empty())
    d.provenance = {{"source", "import"}, {"path", csv_path.filename().string()}};
  return d;
}

}  // namespace triplet::wb
