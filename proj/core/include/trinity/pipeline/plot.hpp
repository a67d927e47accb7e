#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace trinity::pipeline {

/// Numeric CSV with a header row.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  /// Values of one column; throws FormatError if absent.
  std::vector<double> column(const std::string& name) const;
  bool has(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text, const std::string& label);
CsvTable read_csv(const std::filesystem::path& path);

struct PlotSeries {
  std::string name;
  std::vector<double> values;
};

/// Score timelines on a fixed [0, 1] axis; frames with label 1 are shaded.
std::string timeline_svg(const std::string& title, const std::vector<PlotSeries>& series,
                         std::span<const double> labels = {});

/// ROC curve with the chance diagonal.
std::string roc_svg(const std::string& title, std::span<const double> fpr,
                    std::span<const double> tpr);

/// Renders a score CSV (frame_index, S_r, ..., label) or an ROC CSV
/// (fpr, tpr, threshold), picked by its columns.
std::string plot_csv(const std::filesystem::path& csv);

}  // namespace trinity::pipeline
