#pragma once

// Command dispatch for the jetspec tool.
//
// Every command works from a resolved JSON config (defaults, then a config
// file, then --set overrides), writes its CSV/JSON/SVG files into out_dir and
// returns the summary that was written as <command>.json.

#include <exception>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace jetspec::cli {

using Json = nlohmann::ordered_json;

std::string_view version();

const std::vector<std::string>& command_names();

/// Full default config of a command; every tunable knob appears here.
Json default_config(std::string_view command);

/// Applies `file` and then `overrides` ("grid.base_points=301", values parsed
/// as JSON when possible) on top of the defaults. Unknown keys and type
/// mismatches raise ValidationError.
Json resolve_config(std::string_view command, const Json& file, const std::vector<std::string>& overrides);

/// Runs a command on a resolved config and returns its summary.
Json run_command(std::string_view command, const Json& config);

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Static line chart. Non-finite points, and nonpositive ones on log axes, are skipped.
std::string svg_line_chart(std::string_view title, std::string_view x_label, std::string_view y_label,
                           const std::vector<Series>& series, bool log_x, bool log_y);

/// 0 for success; 2 validation, 3 numerical contract, 4 I/O.
int exit_code(const std::exception_ptr& error);

/// One-line machine-readable record for stderr.
Json error_record(const std::exception_ptr& error, std::string_view command);

/// Entry point of the jetspec executable.
int main_entry(int argc, char** argv);

}  // namespace jetspec::cli
