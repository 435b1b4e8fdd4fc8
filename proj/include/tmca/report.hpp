#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace tmca {

// One training run found on disk (a directory holding metrics.jsonl).
struct RunSummary {
    std::string name;  // path relative to the runs root
    std::string label;
    std::string ladder;
    std::string fingerprint;
    std::vector<nlohmann::json> epochs;
    nlohmann::json test = nullptr;  // split metrics from report.json, if any
    std::vector<std::string> missing;
};

// Throws ConfigError when no run directory is found.
std::vector<RunSummary> collect_runs(const std::filesystem::path& runs_dir);

std::string render_markdown(const std::vector<RunSummary>& runs);
std::string render_html(const std::vector<RunSummary>& runs);
// Total / segmentation / alignment loss per epoch.
std::string loss_curve_svg(const RunSummary& run);

// Writes Markdown (with sibling SVG files) or HTML (inline SVG) by extension.
void write_report(const std::filesystem::path& runs_dir, const std::filesystem::path& out);

}  // namespace tmca
