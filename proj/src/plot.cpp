#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sophia/errors.hpp"
#include "sophia/experiment.hpp"

namespace sophia {

namespace {

constexpr double kWidth = 840, kHeight = 520;
constexpr double kLeft = 70, kRight = 20, kTop = 30, kBottom = 50;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void emit_plot(const std::vector<std::pair<std::string, RunRecord>>& records,
               const std::filesystem::path& path) {
  if (records.empty()) throw ParameterError("emit_plot needs at least one record");

  double min_loss = 0.0, max_loss = 0.0;
  int64_t max_step = 1;
  bool first = true, all_positive = true;
  for (const auto& [name, record] : records) {
    for (const RunRow& r : record.rows) {
      if (first) {
        min_loss = max_loss = r.loss;
        first = false;
      }
      min_loss = std::min(min_loss, r.loss);
      max_loss = std::max(max_loss, r.loss);
      max_step = std::max(max_step, r.step);
      if (r.loss <= 0.0) all_positive = false;
    }
  }
  if (first) throw ParameterError("emit_plot needs at least one row");
  // Log scale when the data spans orders of magnitude and stays positive.
  bool log_y = all_positive && max_loss / std::max(min_loss, 1e-300) > 50.0;
  auto y_value = [&](double v) { return log_y ? std::log10(v) : v; };
  double y0 = y_value(min_loss), y1 = y_value(max_loss);
  if (y1 - y0 < 1e-12) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  auto px = [&](double step) { return kLeft + plot_w * step / static_cast<double>(max_step); };
  auto py = [&](double v) { return kTop + plot_h * (1.0 - (y_value(v) - y0) / (y1 - y0)); };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // axes
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kTop + plot_h << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
      << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    double fy = y0 + (y1 - y0) * i / 5.0;
    double label = log_y ? std::pow(10.0, fy) : fy;
    double y = kTop + plot_h * (1.0 - static_cast<double>(i) / 5.0);
    svg << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << y << "\" x2=\"" << kLeft << "\" y2=\"" << y
        << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-size=\"12\">" << num(label) << "</text>\n";
    double xs = static_cast<double>(max_step) * i / 5.0;
    double x = kLeft + plot_w * static_cast<double>(i) / 5.0;
    svg << "<line x1=\"" << x << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << x << "\" y2=\""
        << kTop + plot_h + 4 << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << x << "\" y=\"" << kTop + plot_h + 18
        << "\" text-anchor=\"middle\" font-size=\"12\">" << num(xs) << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">step</text>\n"
      << "<text x=\"16\" y=\"" << kTop + plot_h / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
      << kTop + plot_h / 2 << ")\">" << (log_y ? "loss (log scale)" : "loss") << "</text>\n";

  size_t color = 0;
  for (const auto& [name, record] : records) {
    const char* stroke = kPalette[color % (sizeof(kPalette) / sizeof(kPalette[0]))];
    svg << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (const RunRow& r : record.rows)
      svg << num(px(static_cast<double>(r.step))) << "," << num(py(r.loss)) << " ";
    svg << "\"/>\n";
    double ly = kTop + 16 + 16 * static_cast<double>(color);
    svg << "<line x1=\"" << kLeft + plot_w - 150 << "\" y1=\"" << ly << "\" x2=\""
        << kLeft + plot_w - 125 << "\" y2=\"" << ly << "\" stroke=\"" << stroke
        << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << kLeft + plot_w - 118 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">"
        << name << "</text>\n";
    ++color;
  }
  svg << "</svg>\n";

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << svg.str();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename to " + path.string() + " failed: " + ec.message());
}

}  // namespace sophia
