#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tabsyn/experiment.hpp"

namespace tabsyn {

std::string_view to_string(PlotDimension dimension) {
  switch (dimension) {
    case PlotDimension::runtime: return "runtime";
    case PlotDimension::utility: return "utility";
    case PlotDimension::similarity: return "similarity";
  }
  return "runtime";
}

PlotDimension plot_dimension_from_string(std::string_view text) {
  if (text == "runtime") return PlotDimension::runtime;
  if (text == "utility") return PlotDimension::utility;
  if (text == "similarity") return PlotDimension::similarity;
  throw ConfigError("unknown plot dimension '" + std::string(text) + "' (expected runtime, utility or similarity)");
}

namespace {

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 70, kRight = 80, kTop = 50, kBottom = 70;

std::string fmt(double value) {
  char buffer[32];
  const auto end = std::to_chars(buffer, buffer + sizeof buffer, value, std::chars_format::general, 6).ptr;
  return std::string(buffer, end);
}

std::string escape(const std::string& text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

struct Series {
  std::string name;
  std::string color;
  std::vector<std::optional<double>> values;
};

std::optional<double> primary_utility(const EvalReport& report, bool synthetic) {
  if (!report.utility) return std::nullopt;
  const auto metric = report.utility->task == Task::classification ? "accuracy" : "r2";
  for (const auto& m : report.utility->metrics) {
    if (m.learner == "forest" && m.metric == metric) return synthetic ? m.synthetic : m.real;
  }
  return std::nullopt;
}

}  // namespace

std::string render_svg(const std::vector<EvalReport>& reports, PlotDimension dimension) {
  if (reports.empty()) throw DataError("no reports to plot");
  for (const auto& report : reports) {
    if (report.dataset != reports.front().dataset) {
      throw ConfigError("cannot plot reports of different datasets ('" + reports.front().dataset + "' and '" +
                        report.dataset + "')");
    }
  }

  std::vector<Series> series;
  std::string y_label;
  if (dimension == PlotDimension::runtime) {
    Series total{"total seconds", "#4477aa", {}};
    for (const auto& r : reports) {
      const auto* stat = r.runtime_for(Phase::total);
      total.values.push_back(stat ? std::optional<double>(stat->mean_seconds) : std::nullopt);
    }
    series.push_back(std::move(total));
    y_label = "runtime (s)";
  } else if (dimension == PlotDimension::utility) {
    Series real{"real", "#4477aa", {}}, synth{"synthetic", "#ee6677", {}};
    for (const auto& r : reports) {
      real.values.push_back(primary_utility(r, false));
      synth.values.push_back(primary_utility(r, true));
    }
    series.push_back(std::move(real));
    series.push_back(std::move(synth));
    y_label = "forest utility";
  } else {
    Series acc{"discriminator accuracy", "#228833", {}};
    for (const auto& r : reports) {
      acc.values.push_back(r.similarity ? std::optional<double>(r.similarity->discriminator_accuracy) : std::nullopt);
    }
    series.push_back(std::move(acc));
    y_label = "discriminator accuracy";
  }

  double y_min = 0.0, y_max = dimension == PlotDimension::runtime ? 0.0 : 1.0;
  for (const auto& s : series) {
    for (const auto& v : s.values) {
      if (!v) continue;
      y_min = std::min(y_min, *v);
      y_max = std::max(y_max, dimension == PlotDimension::runtime ? *v * 1.1 : *v);
    }
  }
  if (!(y_max > y_min)) y_max = y_min + 1.0;

  double size_lo = std::numeric_limits<double>::infinity(), size_hi = 0.0;
  for (const auto& r : reports) {
    const double size = static_cast<double>(std::max<std::uint64_t>(r.size_estimate.estimated_params, 1));
    size_lo = std::min(size_lo, size);
    size_hi = std::max(size_hi, size);
  }
  double decade_lo = std::floor(std::log10(size_lo)), decade_hi = std::ceil(std::log10(size_hi));
  if (decade_hi <= decade_lo) decade_hi = decade_lo + 1.0;

  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  const double bottom = kTop + plot_h;
  auto y_primary = [&](double v) { return bottom - (v - y_min) / (y_max - y_min) * plot_h; };
  auto y_size = [&](double v) { return bottom - (std::log10(v) - decade_lo) / (decade_hi - decade_lo) * plot_h; };
  const double group_w = plot_w / static_cast<double>(reports.size());
  const double bar_w = group_w * 0.7 / static_cast<double>(series.size());

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kWidth) << "\" height=\"" << fmt(kHeight)
      << "\" viewBox=\"0 0 " << fmt(kWidth) << ' ' << fmt(kHeight) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(std::string(to_string(dimension)) + ": " + reports.front().dataset) << "</text>\n";

  // Axes.
  svg << "<line class=\"axis\" x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kTop) << "\" x2=\"" << fmt(kLeft) << "\" y2=\""
      << fmt(bottom) << "\" stroke=\"black\"/>\n";
  svg << "<line class=\"axis\" x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(bottom) << "\" x2=\"" << fmt(kLeft + plot_w)
      << "\" y2=\"" << fmt(bottom) << "\" stroke=\"black\"/>\n";
  svg << "<line class=\"axis secondary\" x1=\"" << fmt(kLeft + plot_w) << "\" y1=\"" << fmt(kTop) << "\" x2=\""
      << fmt(kLeft + plot_w) << "\" y2=\"" << fmt(bottom) << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = y_min + (y_max - y_min) * t / 4.0;
    svg << "<text class=\"tick\" x=\"" << fmt(kLeft - 6) << "\" y=\"" << fmt(y_primary(v) + 4)
        << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
  }
  for (double d = decade_lo; d <= decade_hi; d += 1.0) {
    svg << "<text class=\"tick log\" x=\"" << fmt(kLeft + plot_w + 6) << "\" y=\"" << fmt(y_size(std::pow(10.0, d)) + 4)
        << "\">1e" << static_cast<int>(d) << "</text>\n";
  }
  svg << "<text x=\"18\" y=\"" << fmt(kTop + plot_h / 2) << "\" transform=\"rotate(-90 18 " << fmt(kTop + plot_h / 2)
      << ")\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
  svg << "<text x=\"" << fmt(kWidth - 14) << "\" y=\"" << fmt(kTop + plot_h / 2) << "\" transform=\"rotate(90 "
      << fmt(kWidth - 14) << ' ' << fmt(kTop + plot_h / 2) << ")\" text-anchor=\"middle\">size estimate (log)</text>\n";

  // Bars.
  for (std::size_t g = 0; g < reports.size(); ++g) {
    const double x0 = kLeft + group_w * static_cast<double>(g) + group_w * 0.15;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const auto& value = series[s].values[g];
      if (!value) continue;
      const double top = y_primary(std::max(*value, 0.0)), base = y_primary(std::min(*value, 0.0));
      svg << "<rect class=\"bar\" data-series=\"" << escape(series[s].name) << "\" x=\""
          << fmt(x0 + bar_w * static_cast<double>(s)) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(bar_w)
          << "\" height=\"" << fmt(std::max(base - top, 0.0)) << "\" fill=\"" << series[s].color << "\"/>\n";
    }
    const auto& p = reports[g].point;
    svg << "<text class=\"label\" x=\"" << fmt(kLeft + group_w * (static_cast<double>(g) + 0.5)) << "\" y=\""
        << fmt(bottom + 16) << "\" text-anchor=\"middle\">L=" << p.layers << " H=" << p.hidden
        << (reports[g].ok() ? "" : " (failed)") << "</text>\n";
  }

  if (dimension == PlotDimension::similarity) {
    svg << "<line class=\"reference\" x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(y_primary(0.5)) << "\" x2=\""
        << fmt(kLeft + plot_w) << "\" y2=\"" << fmt(y_primary(0.5))
        << "\" stroke=\"red\" stroke-dasharray=\"6 4\" data-y=\"0.5\"/>\n";
  }

  // Size line on the secondary axis.
  svg << "<polyline class=\"size-line\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"";
  for (std::size_t g = 0; g < reports.size(); ++g) {
    const double size = static_cast<double>(std::max<std::uint64_t>(reports[g].size_estimate.estimated_params, 1));
    svg << (g ? " " : "") << fmt(kLeft + group_w * (static_cast<double>(g) + 0.5)) << ',' << fmt(y_size(size));
  }
  svg << "\"/>\n";
  for (std::size_t g = 0; g < reports.size(); ++g) {
    const double size = static_cast<double>(std::max<std::uint64_t>(reports[g].size_estimate.estimated_params, 1));
    svg << "<circle class=\"size-marker\" cx=\"" << fmt(kLeft + group_w * (static_cast<double>(g) + 0.5)) << "\" cy=\""
        << fmt(y_size(size)) << "\" r=\"3\" fill=\"black\"/>\n";
  }

  // Legend.
  double lx = kLeft;
  for (const auto& s : series) {
    svg << "<rect class=\"legend\" x=\"" << fmt(lx) << "\" y=\"" << fmt(kHeight - 24) << "\" width=\"10\" height=\"10\" fill=\""
        << s.color << "\"/><text x=\"" << fmt(lx + 14) << "\" y=\"" << fmt(kHeight - 15) << "\">" << escape(s.name)
        << "</text>\n";
    lx += 160;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::filesystem::path emit_plot(const std::vector<EvalReport>& reports, PlotDimension dimension,
                                const std::filesystem::path& directory) {
  const auto svg = render_svg(reports, dimension);
  std::filesystem::create_directories(directory);
  const auto path = directory / (std::string(to_string(dimension)) + ".svg");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << svg;
  return path;
}

}  // namespace tabsyn
