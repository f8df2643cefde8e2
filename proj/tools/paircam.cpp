#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "paircam/analysis.hpp"
#include "paircam/config.hpp"
#include "paircam/jpd.hpp"
#include "paircam/phl1.hpp"
#include "paircam/pipeline.hpp"
#include "paircam/sim.hpp"

namespace fs = std::filesystem;
using namespace paircam;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitAnalysis = 3;

struct CommonOpts {
  std::optional<std::string> config_path;
  std::optional<int64_t> seed;
  std::string basis = "nf";
  std::optional<double> window_ns;
};

RunConfig resolve_config(const CommonOpts& opts) {
  std::map<std::string, std::string> overrides;
  if (opts.seed) overrides["seed"] = std::to_string(*opts.seed);
  if (opts.window_ns) {
    overrides["pairing.coincidence_window_ps"] =
        std::to_string(static_cast<int64_t>(*opts.window_ns * 1000.0));
  }
  return load_run_config(opts.config_path, overrides);
}

double resolved_timewalk(const RunConfig& cfg) {
  if (cfg.timewalk_mode == "off") return 0.0;
  if (cfg.timewalk_mode == "fixed") return cfg.timewalk_coeff_ps;
  return -1.0;  // auto: process_hits self-calibrates
}

int cmd_simulate(const CommonOpts& opts, const std::string& out_dir,
                 std::optional<double> duration_override) {
  RunConfig cfg = resolve_config(opts);
  if (duration_override) cfg.sim_duration_s = *duration_override;
  const Basis basis = basis_from_string(opts.basis);
  const OpticsConfig optics = cfg.optics(basis);

  fs::create_directories(out_dir);
  run_config_to_kv(cfg).save((fs::path(out_dir) / "config.cfg").string());

  std::ofstream hits_out(fs::path(out_dir) / "hits.phl1", std::ios::binary);
  if (!hits_out) {
    std::cerr << "error: cannot write to " << out_dir << "\n";
    return kExitData;
  }
  const auto duration_ps = static_cast<uint64_t>(cfg.sim_duration_s * 1e12);
  Phl1Writer writer(hits_out, duration_ps);

  std::ofstream pairs_out(fs::path(out_dir) / "truth_pairs.csv");
  std::ofstream clusters_out(fs::path(out_dir) / "truth_clusters.csv");
  pairs_out << "pair_id,photon_idx,u_m,v_m,t_ps\n";
  clusters_out << "cluster_id,pair_id,photon_idx,t_ps,x_px,y_px\n";
  char buf[160];
  uint64_t cluster_id = 0;

  Simulator sim(cfg.source, cfg.detector, optics, cfg.seed, cfg.sim_time_chunk_s);
  const auto stats = sim.run(
      cfg.sim_duration_s, [&writer](const PixelHit& h) { writer.write(h); },
      [&](int64_t pair_id, const TruthPair& p) {
        std::snprintf(buf, sizeof(buf), "%lld,0,%.17g,%.17g,%lld\n",
                      static_cast<long long>(pair_id), p.u1, p.v1,
                      static_cast<long long>(p.t_ps));
        pairs_out << buf;
        std::snprintf(buf, sizeof(buf), "%lld,1,%.17g,%.17g,%lld\n",
                      static_cast<long long>(pair_id), p.u2, p.v2,
                      static_cast<long long>(p.t_ps));
        pairs_out << buf;
      },
      [&](const TruthCluster& c) {
        std::snprintf(buf, sizeof(buf), "%llu,%lld,%d,%lld,%.17g,%.17g\n",
                      static_cast<unsigned long long>(cluster_id++),
                      static_cast<long long>(c.pair_id), c.photon_idx,
                      static_cast<long long>(c.det_t_ps), c.det_x_px, c.det_y_px);
        clusters_out << buf;
      });
  writer.close();

  std::cout << "simulate: basis " << to_string(basis) << ", duration "
            << cfg.sim_duration_s << " s, seed " << cfg.seed << "\n"
            << "  pairs emitted:     " << stats.pairs_emitted << "\n"
            << "  hits written:      " << stats.hits_written << "\n"
            << "  photons off sensor:" << stats.photons_off_sensor << "\n"
            << "  dead-time dropped: " << stats.hits_dead_time_dropped << "\n"
            << "  output:            " << out_dir << "/hits.phl1\n";
  return kExitOk;
}

int cmd_process(const CommonOpts& opts, const std::string& hits_path,
                const std::string& out_dir) {
  const RunConfig cfg = resolve_config(opts);
  const Basis basis = basis_from_string(opts.basis);

  std::ifstream in(hits_path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open " << hits_path << "\n";
    return kExitData;
  }
  Phl1Reader reader(in);
  std::vector<PixelHit> hits;
  hits.reserve(reader.header().record_count);
  while (auto h = reader.next()) hits.push_back(*h);
  const double acquisition_s =
      static_cast<double>(reader.header().acquisition_duration_ps) * 1e-12;

  const auto result =
      process_hits(hits, cfg.cluster, cfg.pairing, resolved_timewalk(cfg));

  Jpd jpd(basis, cfg.optics(basis), acquisition_s);
  for (const auto& p : result.pairs) jpd.add(p);

  fs::create_directories(out_dir);
  {
    std::ofstream pairs_out(fs::path(out_dir) / "pairs.csv");
    write_pairs_csv(pairs_out, result.pairs);
  }
  jpd.save((fs::path(out_dir) / ("jpd_" + to_string(basis) + ".csv")).string());

  std::cout << "process: " << hits.size() << " hits -> " << result.clusters
            << " photons -> " << result.pairs.size() << " coincidences ("
            << to_string(basis) << ")\n"
            << "  timewalk coefficient applied: " << result.timewalk_coeff_ps
            << " ps*tot\n"
            << "  same-half coincident events:  "
            << result.pairing.same_half_coincident_events << " (excluded from JPD)\n"
            << "  JPD: " << jpd.total_pairs() << " pairs in " << jpd.occupied_bins()
            << " occupied bins\n";
  return kExitOk;
}

void export_projections(const Jpd& jpd, const AnalysisParams& params,
                        const fs::path& out_dir) {
  const std::string tag = to_string(jpd.basis());
  const auto save = [&](const Projection& p, const std::string& name) {
    write_projection_text(p, (out_dir / (name + "_" + tag + ".txt")).string());
    write_projection_pgm(p, (out_dir / (name + "_" + tag + ".pgm")).string());
  };
  save(jpd.marginal(Half::Right), "marginal");
  save(jpd.minus_projection(), "minus");
  save(jpd.sum_projection(), "sum");
  // Conditional at the configured (or brightest) reference pixel.
  int ref_px = params.cond_ref_px, ref_py = params.cond_ref_py;
  if (ref_px < 0 || ref_py < 0) {
    const auto m = jpd.marginal(Half::Left);
    double best = -1.0;
    for (int iy = 0; iy < m.ny; ++iy) {
      for (int ix = 0; ix < m.nx; ++ix) {
        if (m.at(ix, iy) > best) {
          best = m.at(ix, iy);
          ref_px = ix;
          ref_py = iy;
        }
      }
    }
  }
  save(jpd.conditional(ref_px, ref_py), "conditional");
}

int cmd_analyze(const CommonOpts& opts, const std::string& nf_path,
                const std::string& ff_path, const std::string& out_dir,
                bool inject_table1) {
  const RunConfig cfg = resolve_config(opts);
  fs::create_directories(out_dir);

  CertificationReport report;
  if (inject_table1) {
    report = table1_injected_report();
  } else {
    if (nf_path.empty() || ff_path.empty()) {
      std::cerr << "error: analyze needs both --nf and --ff joint distributions "
                   "(or --inject-table1)\n";
      return kExitUsage;
    }
    const Jpd jpd_nf = Jpd::load(nf_path);
    const Jpd jpd_ff = Jpd::load(ff_path);
    report = certify(jpd_nf, jpd_ff, cfg.analysis, cfg.seed);
    report.input_nf = nf_path;
    report.input_ff = ff_path;
    export_projections(jpd_nf, cfg.analysis, out_dir);
    export_projections(jpd_ff, cfg.analysis, out_dir);
  }
  report.config_hash = config_hash(cfg);

  const std::string report_path = (fs::path(out_dir) / "report.txt").string();
  write_report(report, report_path);
  std::cout << format_report(report);
  std::cout << "analyze: report written to " << report_path << "\n";
  return kExitOk;
}

int cmd_report(const std::string& report_path) {
  std::vector<std::string> unknown;
  const CertificationReport report = read_report(report_path, &unknown);
  for (const auto& key : unknown) {
    std::cerr << "warning: unknown report key '" << key << "'\n";
  }
  std::cout << format_report(report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "paircam: simulates an entangled-photon-pair source on a time-stamping "
      "camera, reconstructs coincidences, and quantifies spatial entanglement"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string out_dir = "out";
  std::string hits_path, nf_path, ff_path, report_path;
  std::optional<double> duration_override;
  bool inject_table1 = false;

  const auto add_common = [&opts](CLI::App* cmd, bool with_basis = true) {
    cmd->add_option("--config", opts.config_path,
                    "flat key = value config file; defaults documented in README "
                    "and `config` subcommand; PAIRCAM_* env vars override "
                    "defaults at lowest precedence");
    cmd->add_option("--seed", opts.seed, "override the top-level seed");
    if (with_basis) {
      cmd->add_option("--basis", opts.basis, "imaging configuration: nf or ff")
          ->check(CLI::IsMember({"nf", "ff"}));
    }
    cmd->add_option("--window-ns", opts.window_ns,
                    "override the coincidence window (nanoseconds)");
  };

  auto* sim_cmd = app.add_subcommand(
      "simulate", "generate a synthetic pixel-hit stream (PHL1) plus truth record");
  add_common(sim_cmd);
  sim_cmd->add_option("--out", out_dir, "output directory")->required();
  sim_cmd->add_option("--duration", duration_override, "override sim.duration_s");

  auto* proc_cmd = app.add_subcommand(
      "process", "hits -> clusters -> photons -> coincidences -> joint distribution");
  add_common(proc_cmd);
  proc_cmd->add_option("--hits", hits_path, "input PHL1 file")->required();
  proc_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* ana_cmd = app.add_subcommand(
      "analyze", "certification report + projection grids from NF and FF distributions");
  add_common(ana_cmd, false);
  ana_cmd->add_option("--nf", nf_path, "near-field JPD csv (from process)");
  ana_cmd->add_option("--ff", ff_path, "far-field JPD csv (from process)");
  ana_cmd->add_option("--out", out_dir, "output directory")->required();
  ana_cmd->add_flag("--inject-table1", inject_table1,
                    "debug: evaluate the published widths instead of fitting");

  auto* rep_cmd = app.add_subcommand("report", "pretty-print a report file");
  rep_cmd->add_option("--report", report_path, "report file")->required();

  auto* cfg_cmd = app.add_subcommand("config", "print the fully resolved configuration");
  add_common(cfg_cmd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim_cmd->parsed()) return cmd_simulate(opts, out_dir, duration_override);
    if (proc_cmd->parsed()) return cmd_process(opts, hits_path, out_dir);
    if (ana_cmd->parsed()) return cmd_analyze(opts, nf_path, ff_path, out_dir, inject_table1);
    if (rep_cmd->parsed()) return cmd_report(report_path);
    if (cfg_cmd->parsed()) {
      std::cout << run_config_to_kv(resolve_config(opts)).serialize();
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CodecError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const OrderingError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const AnalysisError& e) {
    std::cerr << "analysis error: " << e.what() << "\n";
    return kExitAnalysis;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
