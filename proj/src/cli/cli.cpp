#include "eogstage/cli/cli.hpp"

#include <algorithm>
#include <map>
#include <new>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "eogstage/common/error.hpp"
#include "eogstage/common/io.hpp"
#include "eogstage/common/log.hpp"

namespace eogstage::cli {

namespace fs = std::filesystem;

const char* version() { return EOGSTAGE_VERSION; }

nlohmann::json to_json(const RunSpec& s) {
  nlohmann::json j{{"subcommand", s.subcommand}, {"seed", s.seed}};
  std::vector<std::string> configs;
  for (const auto& c : s.configs) configs.push_back(c.string());
  if (!s.manifest.empty()) j["manifest"] = s.manifest.string();
  if (!s.checkpoint.empty()) j["checkpoint"] = s.checkpoint.string();
  if (!s.input.empty()) j["input"] = s.input.string();
  if (!configs.empty()) j["config_files"] = configs;

  const auto& sub = s.subcommand;
  const bool uses_model = sub == "train" || sub == "crossval";
  const bool uses_data = sub != "synth" && sub != "report";
  if (uses_model) j["preset"] = s.preset;
  if (uses_data && sub != "crossval") j["subjects"] = s.subjects;
  if (s.folds) j["folds"] = *s.folds;
  if (s.fold) j["fold"] = *s.fold;
  if (sub == "crossval") j["jobs"] = s.jobs;
  if (s.stride) j["stride"] = *s.stride;
  if (sub == "synth") {
    if (s.num_subjects) j["num_subjects"] = *s.num_subjects;
    if (s.epochs_per_recording) j["epochs_per_recording"] = *s.epochs_per_recording;
    if (s.sampling_rate) j["sampling_rate"] = *s.sampling_rate;
  }
  if (sub == "gradcam") {
    j["count"] = s.count;
    j["stage"] = s.stage;
    j["target"] = s.target;
  }
  if (sub == "tsne") j["max_points"] = s.max_points;
  return j;
}

namespace {

using Command = void (*)(RunContext&);

struct Parser {
  CLI::App app{"Sleep staging from a single EOG channel.", "eog-stager"};
  RunSpec spec;
  std::map<CLI::App*, Command> commands;

  CLI::App* add(const std::string& name, const std::string& help, Command cmd) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--out,-o", spec.out, "Output directory")->required();
    sub->add_option("--seed", spec.seed, "Seed for every random choice")->capture_default_str();
    sub->add_option("--config,-c", spec.configs,
                    "JSON config with model/training/synth/tsne sections, or a run.meta");
    sub->add_flag("--force", spec.force, "Write into a non-empty output directory");
    commands[sub] = cmd;
    return sub;
  }

  void add_data(CLI::App* sub) {
    sub->add_option("--manifest,-m", spec.manifest, "Dataset manifest")->required();
    auto* subjects = sub->add_option("--subjects", spec.subjects, "Restrict to these subjects")
                         ->delimiter(',');
    auto* folds = sub->add_option("--folds", spec.folds, "Subject-level k-fold split")
                      ->check(CLI::Range(2, 1000000));
    auto* fold = sub->add_option("--fold", spec.fold, "Use this fold of the --folds split");
    fold->needs(folds);
    fold->excludes(subjects);
  }

  Parser() {
    app.require_subcommand(1, 1);
    app.failure_message(CLI::FailureMessage::help);
    app.set_version_flag("--version", version());

    auto* synth = add("synth", "Write a synthetic dataset (EDF + hypnograms + manifest)", cmd_synth);
    synth->add_option("--num-subjects", spec.num_subjects)->check(CLI::PositiveNumber);
    synth->add_option("--epochs", spec.epochs_per_recording, "Epochs per recording")
        ->check(CLI::PositiveNumber);
    synth->add_option("--rate", spec.sampling_rate, "Sampling rate in Hz")->check(CLI::PositiveNumber);

    auto* ingest = add("ingest", "Load and check a dataset, summarise its epochs", cmd_ingest);
    add_data(ingest);

    auto* train = add("train", "Train one model", cmd_train);
    add_data(train);
    train->add_option("--preset", spec.preset, "Model preset")
        ->check(CLI::IsMember({"default", "desk", "tiny"}))
        ->capture_default_str();

    auto* evaluate = add("evaluate", "Score a checkpoint on a dataset", cmd_evaluate);
    add_data(evaluate);
    evaluate->add_option("--checkpoint", spec.checkpoint)->required();
    evaluate->add_option("--stride", spec.stride, "Window stride")->check(CLI::PositiveNumber);

    auto* crossval = add("crossval", "Subject-level k-fold cross-validation", cmd_crossval);
    crossval->add_option("--manifest,-m", spec.manifest, "Dataset manifest")->required();
    auto* k = crossval->add_option("--folds", spec.folds, "Number of folds (default 5)")
                  ->check(CLI::Range(2, 1000000));
    crossval->add_option("--fold", spec.fold, "Run only this fold")->needs(k);
    crossval->add_option("--jobs,-j", spec.jobs, "Folds trained concurrently")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    crossval->add_option("--preset", spec.preset, "Model preset")
        ->check(CLI::IsMember({"default", "desk", "tiny"}))
        ->capture_default_str();

    auto* gradcam = add("gradcam", "1D GradCAM saliency for sampled windows", cmd_gradcam);
    add_data(gradcam);
    gradcam->add_option("--checkpoint", spec.checkpoint)->required();
    gradcam->add_option("--count", spec.count, "Windows to explain")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gradcam->add_option("--stage", spec.stage, "Only windows whose center epoch has this stage");
    gradcam->add_option("--target", spec.target, "predicted, annotated or a stage name")
        ->capture_default_str();

    auto* tsne = add("tsne", "t-SNE of the last residual block's features", cmd_tsne);
    add_data(tsne);
    tsne->add_option("--checkpoint", spec.checkpoint)->required();
    tsne->add_option("--stride", spec.stride, "Window stride")->check(CLI::PositiveNumber);
    tsne->add_option("--max-points", spec.max_points, "Windows sampled for the embedding")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    auto* report = add("report", "Render SVG figures from the CSVs of a run directory", cmd_report);
    report->add_option("--input,-i", spec.input, "Run directory")->required();
  }
};

int exit_code_for(const std::exception_ptr& e, std::string& message) {
  try {
    std::rethrow_exception(e);
  } catch (const UsageError& ex) {
    message = ex.what();
    return kExitUsage;
  } catch (const ConfigError& ex) {
    message = ex.what();
    return kExitUsage;
  } catch (const DataError& ex) {
    message = ex.what();
    return kExitData;
  } catch (const fs::filesystem_error& ex) {
    message = ex.what();
    return kExitData;
  } catch (const nlohmann::json::exception& ex) {
    message = ex.what();
    return kExitData;
  } catch (const std::bad_alloc&) {
    message = "out of memory";
    return kExitNumeric;
  } catch (const std::exception& ex) {
    message = ex.what();
    return kExitNumeric;
  }
}

// The output directory must be new or empty unless --force is given.
void prepare_out(const RunSpec& spec) {
  if (fs::exists(spec.out)) {
    if (!fs::is_directory(spec.out))
      throw UsageError(fmt::format("--out {} exists and is not a directory", spec.out.string()));
    if (!spec.force && !fs::is_empty(spec.out))
      throw UsageError(fmt::format("--out {} is not empty (use --force to write into it)",
                                   spec.out.string()));
  }
  fs::create_directories(spec.out);
}

void write_meta(const RunSpec& spec, const nlohmann::json& config, const std::string& status,
                const std::string& error = {}) {
  nlohmann::json meta{{"tool", "eog-stager"},
                      {"version", version()},
                      {"run", to_json(spec)},
                      {"config", config},
                      {"status", status}};
  if (!error.empty()) meta["error"] = error;
  io::write_atomic(spec.out / "run.meta", meta.dump(2) + "\n");
}

// Without an explicit --seed, a run.meta given as --config supplies its seed.
void adopt_meta_seed(RunSpec& spec) {
  for (const auto& path : spec.configs) {
    try {
      const auto j = nlohmann::json::parse(io::read_text(path));
      if (j.contains("tool") && j.contains("run") && j.at("run").contains("seed"))
        spec.seed = j.at("run").at("seed").get<std::uint64_t>();
    } catch (const std::exception&) {
      // reported when the config is loaded
    }
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  init_logging_from_env();
  Parser parser;
  auto& app = parser.app;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  RunSpec& spec = parser.spec;
  spec.subcommand = chosen->get_name();
  if (chosen->get_option("--seed")->count() == 0) adopt_meta_seed(spec);
  RunContext ctx{spec, out, nlohmann::json::object(), {}};
  bool prepared = false;
  ctx.publish = [&] { write_meta(spec, ctx.config, "running"); };

  try {
    prepare_out(spec);
    prepared = true;
    ctx.publish();
    parser.commands.at(chosen)(ctx);
    write_meta(spec, ctx.config, "complete");
    return kExitOk;
  } catch (...) {
    std::string message;
    const int code = exit_code_for(std::current_exception(), message);
    err << "eog-stager " << spec.subcommand << ": " << message << "\n";
    if (prepared) {
      try {
        write_meta(spec, ctx.config, "failed", message);
      } catch (const std::exception& e) {
        err << "eog-stager: could not update run.meta: " << e.what() << "\n";
      }
    }
    return code;
  }
}

}  // namespace eogstage::cli
