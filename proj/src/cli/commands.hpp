#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>

#include "eogstage/cli/cli.hpp"
#include "json.hpp"

namespace eogstage::cli {

struct RunContext {
  const RunSpec& spec;
  std::ostream& out;
  // Resolved configuration, echoed into run.meta.
  nlohmann::json config = nlohmann::json::object();
  // Rewrites run.meta with status "running"; commands call it once their
  // configuration is resolved, before any long-running work.
  std::function<void()> publish;
};

// Merged "model"/"training"/"synth"/"tsne" sections of every --config file.
// A previous run.meta is accepted and contributes its "config" object.
nlohmann::json load_config_files(const RunSpec& spec);

void cmd_synth(RunContext& ctx);
void cmd_ingest(RunContext& ctx);
void cmd_train(RunContext& ctx);
void cmd_evaluate(RunContext& ctx);
void cmd_crossval(RunContext& ctx);
void cmd_gradcam(RunContext& ctx);
void cmd_tsne(RunContext& ctx);
void cmd_report(RunContext& ctx);

}  // namespace eogstage::cli
