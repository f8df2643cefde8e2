#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paircam/analysis.hpp"
#include "paircam/pipeline.hpp"
#include "paircam/sim.hpp"
#include "paircam/types.hpp"

namespace paircam {

/// Flat "key = value" text file with '#' comments. Keys are dotted paths.
class KvFile {
 public:
  KvFile() = default;

  static KvFile parse(const std::string& text);
  static KvFile load(const std::string& path);

  std::string serialize() const;  // canonical: sorted keys, "k = v\n"
  void save(const std::string& path) const;

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value);
  void set(const std::string& key, int64_t value);
  void set(const std::string& key, bool value);

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::vector<std::string> keys() const;

 private:
  std::map<std::string, std::string> values_;
};

/// FNV-1a 64-bit over the canonical serialization; used as the provenance hash.
uint64_t fnv1a64(const std::string& text);
std::string hex64(uint64_t v);

/// Everything a run needs, with every default pinned in one place.
struct RunConfig {
  uint64_t seed = 1;

  SourceParams source;
  DetectorParams detector;
  OpticsConfig optics_nf;   // basis fixed to NearField
  OpticsConfig optics_ff;   // basis fixed to FarField
  ClusterParams cluster;
  PairingParams pairing;
  AnalysisParams analysis;

  double sim_duration_s = 1.0;
  double sim_time_chunk_s = 1.0;  // chunking policy is part of the config

  /// Timewalk handling in `process`: "auto" calibrates from the pair sample,
  /// "fixed" uses pipeline.timewalk_coeff_ps, "off" skips correction.
  std::string timewalk_mode = "auto";
  double timewalk_coeff_ps = 0.0;

  OpticsConfig optics(Basis b) const {
    return b == Basis::NearField ? optics_nf : optics_ff;
  }
};

/// Defaults -> environment (PAIRCAM_ prefixed) -> file -> explicit overrides,
/// later layers winning. Unknown keys in the file are rejected.
RunConfig load_run_config(const std::optional<std::string>& path,
                          const std::map<std::string, std::string>& overrides = {});

KvFile run_config_to_kv(const RunConfig& cfg);
RunConfig run_config_from_kv(const KvFile& kv);

/// Hash of the canonical serialization, embedded in reports.
std::string config_hash(const RunConfig& cfg);

/// Environment variable name for a config key: PAIRCAM_ + key with dots
/// replaced by underscores, upper-cased (e.g. source.pair_rate_hz ->
/// PAIRCAM_SOURCE_PAIR_RATE_HZ).
std::string env_var_for_key(const std::string& key);

}  // namespace paircam
