#include "paircam/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace paircam {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

KvFile KvFile::parse(const std::string& text) {
  KvFile kv;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    }
    kv.values_[key] = value;
  }
  return kv;
}

KvFile KvFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string KvFile::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

void KvFile::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << serialize();
}

void KvFile::set(const std::string& key, double value) { values_[key] = fmt_double(value); }
void KvFile::set(const std::string& key, int64_t value) { values_[key] = std::to_string(value); }
void KvFile::set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }

std::string KvFile::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key " + key);
  return it->second;
}

double KvFile::get_double(const std::string& key) const {
  const std::string s = get_string(key);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw ConfigError("config key " + key + ": '" + s + "' is not a number");
  }
  return v;
}

int64_t KvFile::get_int(const std::string& key) const {
  const std::string s = get_string(key);
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') {
    throw ConfigError("config key " + key + ": '" + s + "' is not an integer");
  }
  return v;
}

bool KvFile::get_bool(const std::string& key) const {
  const std::string s = get_string(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key " + key + ": '" + s + "' is not a boolean");
}

std::vector<std::string> KvFile::keys() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

KvFile run_config_to_kv(const RunConfig& c) {
  KvFile kv;
  kv.set("seed", static_cast<int64_t>(c.seed));

  kv.set("source.sigma_sum_m", c.source.sigma_sum_m);
  kv.set("source.sigma_diff_m", c.source.sigma_diff_m);
  kv.set("source.kappa_sum_inv_m", c.source.kappa_sum_inv_m);
  kv.set("source.kappa_diff_inv_m", c.source.kappa_diff_inv_m);
  kv.set("source.pair_rate_hz", c.source.pair_rate_hz);
  kv.set("source.separable", c.source.separable);

  kv.set("detector.quantum_efficiency", c.detector.quantum_efficiency);
  kv.set("detector.dead_time_ps", c.detector.dead_time_ps);
  kv.set("detector.cluster_psf_sigma_px", c.detector.cluster_psf_sigma_px);
  kv.set("detector.mean_cluster_tot", c.detector.mean_cluster_tot);
  kv.set("detector.tot_noise_sigma", c.detector.tot_noise_sigma);
  kv.set("detector.timewalk_coeff_ps", c.detector.timewalk_coeff_ps);
  kv.set("detector.dark_rate_hz_per_px", c.detector.dark_rate_hz_per_px);
  kv.set("detector.tick_ps", c.detector.tick_ps);
  kv.set("detector.time_jitter_ps", c.detector.time_jitter_ps);
  kv.set("detector.center_left_x_px", c.detector.center_left_x_px);
  kv.set("detector.center_left_y_px", c.detector.center_left_y_px);
  kv.set("detector.center_right_x_px", c.detector.center_right_x_px);
  kv.set("detector.center_right_y_px", c.detector.center_right_y_px);

  kv.set("optics.pixel_pitch_m", c.optics_nf.pixel_pitch_m);
  kv.set("optics.magnification_nf", c.optics_nf.magnification_nf);
  kv.set("optics.f_eff_m", c.optics_ff.f_eff_m);
  kv.set("optics.wavelength_m", c.optics_nf.wavelength_m);

  kv.set("cluster.spatial_adjacency_px", static_cast<int64_t>(c.cluster.spatial_adjacency_px));
  kv.set("cluster.time_window_ps", c.cluster.cluster_time_window_ps);
  kv.set("cluster.min_tot", static_cast<int64_t>(c.cluster.min_cluster_tot));

  kv.set("pairing.coincidence_window_ps", c.pairing.coincidence_window_ps);
  kv.set("pairing.cross_halves_only", c.pairing.cross_halves_only);

  kv.set("pipeline.timewalk_mode", c.timewalk_mode);
  kv.set("pipeline.timewalk_coeff_ps", c.timewalk_coeff_ps);

  kv.set("analysis.min_column_counts", static_cast<int64_t>(c.analysis.min_column_counts));
  kv.set("analysis.peak_significance", c.analysis.peak_significance);
  kv.set("analysis.max_column_width_px", c.analysis.max_column_width_px);
  kv.set("analysis.fit_crop_radius", static_cast<int64_t>(c.analysis.fit_crop_radius));
  kv.set("analysis.mc_trials", static_cast<int64_t>(c.analysis.mc_trials));
  kv.set("analysis.mc_resample", c.analysis.mc_resample);
  kv.set("analysis.cond_ref_px", static_cast<int64_t>(c.analysis.cond_ref_px));
  kv.set("analysis.cond_ref_py", static_cast<int64_t>(c.analysis.cond_ref_py));

  kv.set("sim.duration_s", c.sim_duration_s);
  kv.set("sim.time_chunk_s", c.sim_time_chunk_s);
  return kv;
}

RunConfig run_config_from_kv(const KvFile& kv) {
  RunConfig c;
  c.seed = static_cast<uint64_t>(kv.get_int("seed"));

  c.source.sigma_sum_m = kv.get_double("source.sigma_sum_m");
  c.source.sigma_diff_m = kv.get_double("source.sigma_diff_m");
  c.source.kappa_sum_inv_m = kv.get_double("source.kappa_sum_inv_m");
  c.source.kappa_diff_inv_m = kv.get_double("source.kappa_diff_inv_m");
  c.source.pair_rate_hz = kv.get_double("source.pair_rate_hz");
  c.source.separable = kv.get_bool("source.separable");

  c.detector.quantum_efficiency = kv.get_double("detector.quantum_efficiency");
  c.detector.dead_time_ps = kv.get_double("detector.dead_time_ps");
  c.detector.cluster_psf_sigma_px = kv.get_double("detector.cluster_psf_sigma_px");
  c.detector.mean_cluster_tot = kv.get_double("detector.mean_cluster_tot");
  c.detector.tot_noise_sigma = kv.get_double("detector.tot_noise_sigma");
  c.detector.timewalk_coeff_ps = kv.get_double("detector.timewalk_coeff_ps");
  c.detector.dark_rate_hz_per_px = kv.get_double("detector.dark_rate_hz_per_px");
  c.detector.tick_ps = kv.get_double("detector.tick_ps");
  c.detector.time_jitter_ps = kv.get_double("detector.time_jitter_ps");
  c.detector.center_left_x_px = kv.get_double("detector.center_left_x_px");
  c.detector.center_left_y_px = kv.get_double("detector.center_left_y_px");
  c.detector.center_right_x_px = kv.get_double("detector.center_right_x_px");
  c.detector.center_right_y_px = kv.get_double("detector.center_right_y_px");

  OpticsConfig optics;
  optics.pixel_pitch_m = kv.get_double("optics.pixel_pitch_m");
  optics.magnification_nf = kv.get_double("optics.magnification_nf");
  optics.f_eff_m = kv.get_double("optics.f_eff_m");
  optics.wavelength_m = kv.get_double("optics.wavelength_m");
  c.optics_nf = optics;
  c.optics_nf.basis = Basis::NearField;
  c.optics_ff = optics;
  c.optics_ff.basis = Basis::FarField;

  c.cluster.spatial_adjacency_px = static_cast<int>(kv.get_int("cluster.spatial_adjacency_px"));
  c.cluster.cluster_time_window_ps = kv.get_int("cluster.time_window_ps");
  c.cluster.min_cluster_tot = static_cast<uint32_t>(kv.get_int("cluster.min_tot"));

  c.pairing.coincidence_window_ps = kv.get_int("pairing.coincidence_window_ps");
  c.pairing.cross_halves_only = kv.get_bool("pairing.cross_halves_only");

  c.timewalk_mode = kv.get_string("pipeline.timewalk_mode");
  if (c.timewalk_mode != "auto" && c.timewalk_mode != "fixed" && c.timewalk_mode != "off") {
    throw ConfigError("pipeline.timewalk_mode must be auto, fixed, or off");
  }
  c.timewalk_coeff_ps = kv.get_double("pipeline.timewalk_coeff_ps");

  c.analysis.min_column_counts =
      static_cast<uint64_t>(kv.get_int("analysis.min_column_counts"));
  c.analysis.peak_significance = kv.get_double("analysis.peak_significance");
  c.analysis.max_column_width_px = kv.get_double("analysis.max_column_width_px");
  c.analysis.fit_crop_radius = static_cast<int>(kv.get_int("analysis.fit_crop_radius"));
  c.analysis.mc_trials = static_cast<int>(kv.get_int("analysis.mc_trials"));
  c.analysis.mc_resample = kv.get_bool("analysis.mc_resample");
  c.analysis.cond_ref_px = static_cast<int>(kv.get_int("analysis.cond_ref_px"));
  c.analysis.cond_ref_py = static_cast<int>(kv.get_int("analysis.cond_ref_py"));

  c.sim_duration_s = kv.get_double("sim.duration_s");
  c.sim_time_chunk_s = kv.get_double("sim.time_chunk_s");
  return c;
}

std::string env_var_for_key(const std::string& key) {
  std::string name = "PAIRCAM_";
  for (char ch : key) {
    name += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  }
  return name;
}

RunConfig load_run_config(const std::optional<std::string>& path,
                          const std::map<std::string, std::string>& overrides) {
  KvFile kv = run_config_to_kv(RunConfig{});  // layer 0: defaults

  for (const auto& key : kv.keys()) {  // layer 1: environment
    if (const char* v = std::getenv(env_var_for_key(key).c_str())) kv.set(key, v);
  }

  if (path) {  // layer 2: file
    const KvFile file = KvFile::load(*path);
    for (const auto& [key, value] : file.values()) {
      if (!kv.has(key)) throw ConfigError("unknown config key '" + key + "' in " + *path);
      kv.set(key, value);
    }
  }

  for (const auto& [key, value] : overrides) {  // layer 3: explicit overrides
    if (!kv.has(key)) throw ConfigError("unknown config override '" + key + "'");
    kv.set(key, value);
  }
  return run_config_from_kv(kv);
}

std::string config_hash(const RunConfig& cfg) {
  return hex64(fnv1a64(run_config_to_kv(cfg).serialize()));
}

}  // namespace paircam
