#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace scalpel::cli {

/// Renders the CSV tables a matrix run leaves in `dir` (report.csv,
/// tune_report.csv, runs.csv, curves.csv) as dir/report.md. With `plots`,
/// also writes dir/f1_bars.svg and one dir/pr_<testset>.svg per test set.
/// Returns the paths written.
std::vector<std::filesystem::path> render_report(const std::filesystem::path& dir, bool plots);

}  // namespace scalpel::cli
