#include <algorithm>
#include <cstdio>
#include <string>

#include "actmon/error.hpp"
#include "actmon/experiment.hpp"
#include "actmon/io.hpp"

namespace actmon {

namespace {

std::string file_stem(std::string_view name) {
  std::string out;
  for (char c : name) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '.' || c == '-' || c == '_';
    out += keep ? c : '_';
  }
  return out.empty() ? "condition" : out;
}

std::string fmt(double v, const char* format = "%g") {
  char buf[32];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string histogram_csv(const Histogram& h) {
  std::string out = "bin_lower,bin_upper,count\n";
  for (std::size_t j = 0; j < h.counts.size(); ++j) {
    out += fmt(h.edges[j]) + ',' + fmt(h.edges[j + 1]) + ',' + std::to_string(h.counts[j]) + '\n';
  }
  return out;
}

std::string histogram_svg(const ConditionReport& c) {
  constexpr double width = 480, height = 240, left = 40, bottom = 30, top = 20, right = 10;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const auto& counts = c.histogram.counts;
  const std::size_t peak = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  const double scale = peak == 0 ? 0.0 : plot_h / double(peak);
  const double bar_w = counts.empty() ? 0.0 : plot_w / double(counts.size());

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) +
                    "\" height=\"" + fmt(height) + "\">\n";
  svg += "<title>" + c.name + "</title>\n";
  svg += "<text x=\"" + fmt(left) + "\" y=\"14\" font-size=\"12\">" + c.name + " (n=" +
         std::to_string(c.n) + ")</text>\n";
  for (std::size_t j = 0; j < counts.size(); ++j) {
    const double h = double(counts[j]) * scale;
    svg += "<rect x=\"" + fmt(left + double(j) * bar_w, "%.2f") + "\" y=\"" +
           fmt(top + plot_h - h, "%.2f") + "\" width=\"" + fmt(std::max(bar_w - 1.0, 1.0), "%.2f") +
           "\" height=\"" + fmt(h, "%.2f") + "\" fill=\"steelblue\"/>\n";
  }
  const std::string y0 = fmt(top + plot_h);
  svg += "<line x1=\"" + fmt(left) + "\" y1=\"" + y0 + "\" x2=\"" + fmt(left + plot_w) +
         "\" y2=\"" + y0 + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(top) + "\" x2=\"" + fmt(left) + "\" y2=\"" +
         y0 + "\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + fmt(left) + "\" y=\"" + fmt(height - 8) + "\" font-size=\"10\">0</text>\n";
  svg += "<text x=\"" + fmt(left + plot_w - 6) + "\" y=\"" + fmt(height - 8) +
         "\" font-size=\"10\">1</text>\n";
  svg += "<text x=\"" + fmt(left + plot_w / 2 - 20) + "\" y=\"" + fmt(height - 8) +
         "\" font-size=\"10\">p-value</text>\n";
  svg += "<text x=\"4\" y=\"" + fmt(top + 10) + "\" font-size=\"10\">" + std::to_string(peak) +
         "</text>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace

std::vector<std::filesystem::path> write_report_files(const ExperimentReport& report,
                                                      const std::filesystem::path& out_dir,
                                                      bool svg) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string());

  std::vector<std::filesystem::path> written;
  std::string table = "name,n,id_count,ood_count\n";
  for (const auto& c : report.conditions) {
    table += c.name + ',' + std::to_string(c.n) + ',' + std::to_string(c.id_count) + ',' +
             std::to_string(c.ood_count) + '\n';
  }
  written.push_back(out_dir / "table.csv");
  write_file_atomic(written.back(), table);

  for (const auto& c : report.conditions) {
    const auto stem = "hist_" + file_stem(c.name);
    written.push_back(out_dir / (stem + ".csv"));
    write_file_atomic(written.back(), histogram_csv(c.histogram));
    if (svg) {
      written.push_back(out_dir / (stem + ".svg"));
      write_file_atomic(written.back(), histogram_svg(c));
    }
  }
  return written;
}

}  // namespace actmon
