#pragma once

// Workbench: JSON run configuration, CSV datasets with provenance sidecars,
// seeded synthetic data, fit drivers, figure reproduction and SVG plots.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "triplet/inference.hpp"

namespace triplet::wb {

using Json = nlohmann::ordered_json;

enum ExitCode : int {
  kExitOk = 0,
  kExitReproduceFail = 1,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitParse = 4,
  kExitFit = 5,
  kExitRuntime = 6,
};

// Message starts with the offending field path or "line L, column C".
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset files: message names the line and column.
class ParseError : public Error {
 public:
  using Error::Error;
};

class FitFailure : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Configuration

struct GridSpec {
  double start = 0.0;
  double stop = 0.0;
  double step = 1.0;
};

struct TraceSpec {
  std::string sequence = "cpmg";  // cpmg | eseem | rabi
  SublevelPair pair = kPairYZ;
  int n_pulses = 1;
  double start_us = 0.0;
  double stop_us = 10.0;
  std::size_t count = 200;
  double rabi_mhz = 5.0;
};

struct PolarizationSpec {
  double theta0_deg = 60.0;
  double amplitude = 1000.0;
  double offset = 100.0;
  int n_angles = 36;
};

struct CpmgSpec {
  SublevelPair pair = kPairXZ;
  std::vector<int> n_pulses{1, 2, 4, 8, 16, 32, 64, 128, 256};
};

struct OrientationSpec {
  std::vector<Eigen::Vector3d> directions;
  std::vector<double> fields_mt{10, 20, 30, 40};
  double sigma_mhz = 1.0;
};

struct FitSpec {
  int n_peaks = 2;
  bool fit_offset = true;
  std::optional<double> fixed_exponent;
  std::optional<double> t_sat_max_us;
  double sharpness = 4.0;
};

struct RunConfig {
  std::optional<std::string> preset;
  TripletModel model{{1891.0, 459.0}, Orientation(), kFreeElectronG};
  FieldVector field;
  RateSet rates;
  OdmrOptions odmr;
  NoiseModel noise;
  std::optional<std::string> noise_preset;
  std::vector<NuclearSpin> nuclei;
  std::optional<std::uint64_t> seed;
  double sigma = 0.0;
  std::optional<double> counts_scale;
  GridSpec spectrum{850.0, 1500.0, 1.0};
  std::optional<double> hold_mhz;
  TraceSpec trace;
  PolarizationSpec polarization;
  CpmgSpec cpmg;
  OrientationSpec orientation;
  FitSpec fit;
  std::string out_dir = ".";
  bool svg = true;

  // Throws ConfigError when noise is requested without a seed.
  void validate() const;
};

// Built-in starting points: "paper-fig1d", "paper-fig1e", "paper-fig2b",
// "paper-fig2d", "paper-fig3e", "paper-fig4a".
std::vector<std::string> config_preset_names();
RunConfig config_preset(const std::string& name);

// Unknown keys anywhere are rejected. A "preset" key seeds the defaults.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
Json config_to_json(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Datasets

enum class DatasetKind { Spectrum, Trace, Polarization, CpmgPoints, OrientationPoints };

std::string kind_name(DatasetKind k);
DatasetKind parse_kind(const std::string& name);  // throws UsageError
const std::vector<std::string>& kind_columns(DatasetKind k);
const std::vector<std::string>& kind_units(DatasetKind k);

struct Dataset {
  DatasetKind kind = DatasetKind::Spectrum;
  // Numeric columns in schema order; text columns (the transition pair) are
  // kept in `text` at the same index with an empty numeric column.
  std::vector<std::vector<double>> columns;
  std::vector<std::vector<std::string>> text;
  Json provenance = Json::object();

  std::size_t rows() const;
  // Throws InvalidInput when column lengths differ or provenance is empty.
  void validate() const;
};

Dataset make_dataset(const OdmrSpectrum& s);
Dataset make_dataset(const CoherenceTrace& t);
Dataset make_dataset(const PolarizationScan& p);
Dataset make_dataset(std::span<const CpmgPoint> pts);
Dataset make_dataset(const OrientationDataset& o);

OdmrSpectrum as_spectrum(const Dataset& d);
CoherenceTrace as_trace(const Dataset& d);
PolarizationScan as_polarization(const Dataset& d);
std::vector<CpmgPoint> as_cpmg(const Dataset& d);
OrientationDataset as_orientation(const Dataset& d);

// Shortest round-trip decimal form.
std::string format_number(double v);

std::string dataset_csv(const Dataset& d);
// Throws ParseError naming line and column.
Dataset parse_dataset_csv(const std::string& text, std::optional<DatasetKind> expected = std::nullopt);

// CSV plus "<path>.provenance.json".
void write_dataset(const Dataset& d, const std::filesystem::path& csv_path);
Dataset read_dataset(const std::filesystem::path& csv_path, std::optional<DatasetKind> expected = std::nullopt);

// Temp file then rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Generation

// Noiseless forward model, then Gaussian noise of cfg.sigma (or shot noise
// sqrt(|y| / counts_scale)) drawn from a mt19937_64 seeded with cfg.seed.
Dataset generate(DatasetKind kind, const RunConfig& cfg);

// Resolved coherence model: the named preset if set, else cfg.noise.
NoiseModel resolved_noise(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Fitting

// peaks | decay | cpmg | polarization | orientation | larmor
struct FitOutput {
  FitResult result;
  Json report;
  // Columns x, data, model for overlay plotting.
  std::vector<double> x, data, model;
  std::string x_label, y_label;
};

std::vector<std::string> fit_kinds();
FitOutput run_fit(const std::string& kind, const std::vector<Dataset>& inputs, const RunConfig& cfg);
Json fit_result_json(const FitResult& r);

// ---------------------------------------------------------------------------
// Reproduction

struct ReproduceCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ReproduceReport {
  std::string id;
  std::vector<ReproduceCheck> checks;
  std::vector<std::pair<std::string, Dataset>> datasets;
  Json metrics = Json::object();
  bool pass() const;
};

std::vector<std::string> reproduce_ids();
// Throws UsageError listing the valid ids for an unknown id.
ReproduceReport reproduce(const std::string& id, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Plots

struct Series {
  std::string name;
  std::vector<double> x, y;
  bool markers = false;
};

std::string svg_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series);

}  // namespace triplet::wb
