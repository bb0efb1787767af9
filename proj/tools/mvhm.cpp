// Command line front end: dataset generation, evaluation, mesh-hierarchy
// export, multi-view triangulation and dataset inspection.
//
// Exit codes: 0 success, 2 invalid input (bad flags, bad config, malformed or
// inconsistent data files), 3 I/O failure.

#include "mvhm/mvhm.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mvhm::IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw mvhm::IoError("write failed: " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic multi-view hand dataset toolkit"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "render a synthetic dataset");
  std::string config_path;
  mvhm::GenerateConfig flags;
  gen->add_option("--config", config_path, "config file (key value lines)");
  gen->add_option("--out", flags.out_dir, "output dataset directory");
  gen->add_option("--count", flags.count, "number of samples");
  gen->add_option("--seed", flags.seed, "dataset seed");
  gen->add_option("--views", flags.views, "cameras on the ring");
  gen->add_option("--radius", flags.radius, "camera ring radius, mm");
  gen->add_option("--resolution", flags.resolution, "square image size, px");
  gen->add_option("--threads", flags.threads, "worker threads (0 = auto)");
  gen->add_option("--poses", flags.pose_source,
                  "keypoint file to pose samples from (default: sampler)");
  gen->callback([&]() {
    mvhm::GenerateConfig cfg;
    if (!config_path.empty()) cfg = mvhm::load_generate_config(config_path);
    if (gen->count("--out")) cfg.out_dir = flags.out_dir;
    if (gen->count("--count")) cfg.count = flags.count;
    if (gen->count("--seed")) cfg.seed = flags.seed;
    if (gen->count("--views")) cfg.views = flags.views;
    if (gen->count("--radius")) cfg.radius = flags.radius;
    if (gen->count("--resolution")) cfg.resolution = flags.resolution;
    if (gen->count("--threads")) cfg.threads = flags.threads;
    if (gen->count("--poses")) cfg.pose_source = flags.pose_source;
    mvhm::DatasetManifest m = mvhm::generate(cfg);
    std::cout << "wrote " << cfg.out_dir << ": " << m.generated
              << " samples, " << m.skipped_samples.size() << " skipped, "
              << m.files.size() << " files\n";
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score predictions against a dataset");
  std::string ev_data, ev_pred, ev_out;
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--pred", ev_pred, "prediction file")->required();
  ev->add_option("--out", ev_out, "also write the report here");
  ev->callback([&]() {
    mvhm::PoseErrorReport r = mvhm::evaluate(ev_data, ev_pred);
    std::string text = mvhm::render_report(r);
    std::cout << text;
    if (!ev_out.empty()) write_text(ev_out, text);
  });

  // coarsen
  auto* co = app.add_subcommand("coarsen",
                                "export the template-mesh coarsening hierarchy");
  std::string co_out = "hierarchy.txt";
  std::uint64_t co_seed = 0;
  int co_levels = 3, co_budget = 2560;
  co->add_option("--out", co_out, "output file");
  co->add_option("--seed", co_seed, "matching seed");
  co->add_option("--levels", co_levels, "coarsening levels");
  co->add_option("--budget", co_budget, "template vertex budget");
  co->callback([&]() {
    std::cout << mvhm::export_coarsening(co_out, co_budget, co_levels, co_seed);
  });

  // triangulate
  auto* tr = app.add_subcommand(
      "triangulate", "recover world keypoints from per-view pixel annotations");
  std::string tr_data, tr_out;
  double tr_noise = 0.0;
  std::uint64_t tr_noise_seed = 0;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "write recovered keypoints here");
  tr->add_option("--noise", tr_noise, "pixel noise sigma for a noise-floor study");
  tr->add_option("--noise-seed", tr_noise_seed, "seed for the pixel noise");
  tr->callback([&]() {
    mvhm::TriangulationReport r =
        mvhm::triangulate_dataset(tr_data, tr_noise, tr_noise_seed);
    std::cout << mvhm::render_triangulation_report(r);
    if (!tr_out.empty()) mvhm::write_predictions(tr_out, r.predictions);
  });

  // inspect
  auto* in = app.add_subcommand("inspect", "audit a dataset's hashes and annotations");
  std::string in_data;
  in->add_option("--data", in_data, "dataset directory")->required();
  in->callback([&]() { std::cout << mvhm::inspect(in_data); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const mvhm::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const mvhm::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mvhm::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mvhm::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
