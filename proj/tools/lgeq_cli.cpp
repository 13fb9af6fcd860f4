#include <CLI11.hpp>

#include <iostream>
#include <new>
#include <optional>
#include <string>

#include "lgeq/cli/app.hpp"

namespace {

using lgeq::cli::Command;

/// Single-line stderr message: "lgeq: error code=<n> kind=<Kind> msg=<text>".
int fail(int code, const std::string& kind, std::string msg) {
  for (auto& ch : msg)
    if (ch == '\n' || ch == '\r') ch = ' ';
  std::cerr << "lgeq: error code=" << code << " kind=" << kind << " msg=" << msg << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LGE-MRI infarct detection and quantification toolkit", "lgeq"};
  app.set_version_flag("--version", lgeq::cli::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out;
  bool no_detect = false, no_refine = false, no_mvo = false;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "Override every module seed");
  app.add_option("--jobs", jobs, "Worker threads");
  app.add_option("--out", out, "Output directory");
  app.add_flag("--no-detect", no_detect, "Disable the detection gate");
  app.add_flag("--no-refine", no_refine, "Disable boundary refinement");
  app.add_flag("--no-mvo", no_mvo, "Disable MVO inclusion");

  std::optional<Command> cmd;
  auto leaf = [&](CLI::App* parent, const char* name, const char* help, Command c) {
    auto* s = parent->add_subcommand(name, help);
    s->fallthrough();
    s->callback([&cmd, c] { cmd = c; });
    return s;
  };
  auto* phantom = app.add_subcommand("phantom", "Synthetic corpus");
  phantom->fallthrough();
  phantom->require_subcommand(1);
  leaf(phantom, "gen", "Generate a phantom corpus", Command::phantom_gen);
  auto* train = app.add_subcommand("train", "Model training");
  train->fallthrough();
  train->require_subcommand(1);
  leaf(train, "detect", "Train the slice detector", Command::train_detect);
  leaf(train, "refine", "Train the refinement ensemble", Command::train_refine);
  leaf(&app, "detect", "Score slices with a trained detector", Command::detect);
  leaf(&app, "segment", "Run the segmentation cascade", Command::segment);
  leaf(&app, "baselines", "Run the nine baseline methods", Command::baselines);
  leaf(&app, "evaluate", "Cross-validated evaluation against ground truth", Command::evaluate);
  leaf(&app, "permtest", "Detection permutation analysis", Command::permtest);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(1, "UsageError", e.what());
  }

  try {
    lgeq::cli::RunConfig cfg;
    if (!config_path.empty()) cfg = lgeq::cli::load_config(config_path);
    if (seed) cfg.seeds.set_all(*seed);
    if (jobs) cfg.jobs = *jobs;
    if (!out.empty()) cfg.out = out;
    if (no_detect) cfg.use_detect = false;
    if (no_refine) cfg.segment.refine = false;
    if (no_mvo) cfg.segment.mvo = false;
    const auto result = lgeq::cli::run(*cmd, cfg);
    std::cout << result.summary << std::endl;
    return 0;
  } catch (const lgeq::Error& e) {
    return fail(static_cast<int>(e.error_class()), e.kind(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(2, "IoError", e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(2, "FormatError", e.what());
  } catch (const std::bad_alloc&) {
    return fail(3, "OutOfMemory", "allocation failed");
  } catch (const std::exception& e) {
    return fail(3, "InternalError", e.what());
  }
}
