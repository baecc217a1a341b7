#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "claimsrisk/config.hpp"

namespace claimsrisk::cli {

/// Resolved inputs shared by every subcommand.
struct Context {
  RunConfig config;
  std::filesystem::path out = "run";
  std::optional<std::string> individual_id;  // attend only
  std::ostream* log = nullptr;               // progress lines; stderr when null
  std::ostream* out_stream = nullptr;        // command results; stdout when null
};

std::filesystem::path records_path(const Context& ctx);
std::filesystem::path codesets_path(const Context& ctx);

void cmd_synth(const Context& ctx);
void cmd_cohort(const Context& ctx);
void cmd_embed(const Context& ctx);
void cmd_train(const Context& ctx);
void cmd_eval(const Context& ctx);
void cmd_attend(const Context& ctx);
void cmd_report(const Context& ctx);
void cmd_run_all(const Context& ctx);

/// Parses argv and dispatches; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace claimsrisk::cli
