#include "nlos/cli.hpp"

#include "nlos/baselines.hpp"
#include "nlos/driver.hpp"
#include "nlos/forward.hpp"
#include "nlos/io.hpp"
#include "nlos/parallel.hpp"
#include "nlos/photon.hpp"
#include "nlos/surfaciation.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

namespace nlos {

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  os << text;
}

Json metrics_json(const SurfaceMetrics& m) {
  Json j;
  j["iou"] = m.iou;
  j["depth_rmse_voxels"] = std::isnan(m.depth_rmse_voxels) ? Json(nullptr) : Json(m.depth_rmse_voxels);
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["empty_truth"] = m.empty_truth;
  return j;
}

struct SimulateArgs {
  std::string scene, geometry, output, truth;
  std::uint32_t pulses = 0;
  std::uint64_t seed = 0;
};

void simulate(const SimulateArgs& a, std::ostream& out) {
  const Scene scene = parse_scene(load_json_file(a.scene));
  const MeasurementGeometry geometry = parse_geometry(load_json_file(a.geometry));
  if (a.pulses < 1) throw UsageError("--pulses: must be >= 1");
  const ForwardOperator op(scene.grid, geometry, scene.cosine_factor);
  const TransientSignal tau = op.forward(scene.volume);
  NoiseModel noise = scene.noise;
  const double peak = tau.values.size() > 0 ? tau.values.maxCoeff() : 0.0;
  if (scene.peak_count > 0 && peak > 0) noise.eta = scene.peak_count / (a.pulses * peak);
  const PhotonHistogram hist = sample_histogram(tau, a.pulses, noise, a.seed);
  write_histogram_file(a.output, hist);
  if (!a.truth.empty()) write_surface_file(a.truth, scene.surface);
  std::uint64_t total = 0;
  for (auto c : hist.counts) total += c;
  out << "simulate: " << hist.counts.size() << " bins, " << total << " events, eta "
      << noise.eta << "\n";
}

struct ReconstructArgs {
  std::string method, config, input, prefix;
};

void reconstruct(const ReconstructArgs& a, int threads_flag, std::ostream& out,
                 std::ostream& err) {
  static const char* kMethods = "sscr, bp, logbp, ls";
  if (a.method != "sscr" && a.method != "bp" && a.method != "logbp" && a.method != "ls")
    throw UsageError("--method: unknown method '" + a.method + "' (valid: " + kMethods + ")");
  const RunConfig cfg = parse_run_config(load_json_file(a.config));
  set_num_threads(threads_flag > 0 ? threads_flag : cfg.threads);
  const PhotonHistogram hist = read_histogram_file(a.input);

  Json manifest;
  manifest["tool"] = "nlos";
  manifest["version"] = kVersion;
  manifest["command"] = "reconstruct";
  manifest["method"] = a.method;
  manifest["inputs"] = {{"histogram", a.input},
                        {"config", a.config},
                        {"rng_id", hist.rng_id},
                        {"seed", hist.seed},
                        {"pulses", hist.pulses}};
  manifest["config"] = run_config_to_json(cfg);
  manifest["threads"] = num_threads();

  AlbedoVolume u;
  SurfaceG g;
  std::vector<IterationRecord> trace;
  std::string curves;
  if (a.method == "sscr") {
    const SscrState st = sscr_reconstruct(hist, hist.geometry, cfg.grid, cfg.sscr);
    u = st.u;
    g = st.g;
    trace = st.trace;
    manifest["params"] = sscr_params_to_json(st);
    for (const auto& w : st.params.warnings) err << "warning: " << w << "\n";
  } else {
    const ForwardOperator op(cfg.grid, hist.geometry, cfg.sscr.cosine_factor);
    try {
      if (a.method == "bp") {
        u = back_projection(hist, op);
      } else if (a.method == "logbp") {
        u = log_bp(hist, op, cfg.logbp_sigma);
      } else {
        const LsCgResult ls = ls_cg_reconstruct(hist, op, cfg.ls_iters);
        u = ls.u;
        std::ostringstream os;
        write_curves_csv(os, ls.log_normal_residual, ls.log_misfit);
        curves = os.str();
      }
      g = thresholded_surface(u, cfg.baseline_threshold);
    } catch (const std::exception& e) {
      throw StageError(a.method, e.what());
    }
    manifest["params"] = {{"baseline_threshold", cfg.baseline_threshold}};
  }

  Json outputs;
  outputs["volume"] = a.prefix + ".vol";
  outputs["surface"] = a.prefix + ".surf";
  outputs["trace"] = a.prefix + ".trace.csv";
  write_volume_file(a.prefix + ".vol", u);
  write_surface_file(a.prefix + ".surf", g);
  std::ostringstream tr;
  write_trace_csv(tr, trace);
  write_text(a.prefix + ".trace.csv", tr.str());
  if (!curves.empty()) {
    outputs["curves"] = a.prefix + ".curves.csv";
    write_text(a.prefix + ".curves.csv", curves);
  }
  outputs["manifest"] = a.prefix + ".manifest.json";
  manifest["outputs"] = outputs;
  manifest["foreground_pixels"] = g.foreground_count();
  write_text(a.prefix + ".manifest.json", manifest.dump(2) + "\n");
  out << "reconstruct: " << a.method << ", " << g.foreground_count()
      << " foreground pixels -> " << a.prefix << ".*\n";
}

void metrics_cmd(const std::string& recon, const std::string& truth, const std::string& output,
                 std::ostream& out) {
  const SurfaceG r = read_surface_file(recon);
  const SurfaceG t = read_surface_file(truth);
  const std::string text = metrics_json(metrics(r, t)).dump(2) + "\n";
  if (output.empty() || output == "-")
    out << text;
  else
    write_text(output, text);
}

void render_cmd(const std::string& input, const std::string& view, const std::string& map,
                const std::string& output) {
  std::string magic;
  {
    std::ifstream is(input, std::ios::binary);
    if (!is) throw Error("cannot open '" + input + "'");
    std::getline(is, magic);
  }
  Image16 img;
  if (magic == "NLOSVOL1") {
    img = render_volume(read_volume_file(input), parse_view(view));
  } else if (magic == "NLOSSURF1") {
    SurfaceMap m;
    if (map == "depth")
      m = SurfaceMap::Depth;
    else if (map == "albedo")
      m = SurfaceMap::Albedo;
    else
      throw UsageError("--map: unknown map '" + map + "' (valid: depth, albedo)");
    img = render_surface(read_surface_file(input), m);
  } else {
    throw FormatError(0, "--input: not a volume or surface file");
  }
  std::ofstream os(output, std::ios::binary);
  if (!os) throw Error("cannot open '" + output + "' for writing");
  write_pgm(os, img);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot NLOS reconstruction toolkit", "nlos"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: config or 1)");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "simulate a photon histogram");
  s->add_option("--scene", sim.scene)->required();
  s->add_option("--geometry", sim.geometry)->required();
  s->add_option("--pulses", sim.pulses)->required();
  s->add_option("--seed", sim.seed)->required();
  s->add_option("-o,--output", sim.output)->required();
  s->add_option("--truth", sim.truth, "also write the ground-truth surface");

  ReconstructArgs rec;
  auto* r = app.add_subcommand("reconstruct", "reconstruct a volume and surface");
  r->add_option("--method", rec.method)->required();
  r->add_option("--config", rec.config)->required();
  r->add_option("-i,--input", rec.input)->required();
  r->add_option("-o,--output", rec.prefix)->required();

  std::string recon, truth, mout;
  auto* m = app.add_subcommand("metrics", "compare a surface with the ground truth");
  m->add_option("--recon", recon)->required();
  m->add_option("--truth", truth)->required();
  m->add_option("-o,--output", mout, "JSON output path, '-' for stdout");

  std::string rin, view = "front", map = "depth", rout;
  auto* rd = app.add_subcommand("render", "render a volume or surface to 16-bit PGM");
  rd->add_option("--input", rin)->required();
  rd->add_option("--view", view, "front, top or side (volumes)");
  rd->add_option("--map", map, "depth or albedo (surfaces)");
  rd->add_option("-o,--output", rout)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (threads > 0) set_num_threads(threads);
    if (*s) simulate(sim, out);
    if (*r) reconstruct(rec, threads, out, err);
    if (*m) metrics_cmd(recon, truth, mout, out);
    if (*rd) render_cmd(rin, view, map, rout);
  } catch (const StageError& e) {
    err << "error: stage " << e.what() << "\n";
    return 1;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvariantError& e) {
    err << "error: validation: " << e.what() << "\n";
    return 2;
  } catch (const DimensionMismatch& e) {
    err << "error: validation: " << e.what() << "\n";
    return 2;
  } catch (const GeometryError& e) {
    err << "error: validation: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace nlos
