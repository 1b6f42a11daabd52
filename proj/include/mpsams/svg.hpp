#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "mpsams/csv.hpp"
#include "mpsams/errors.hpp"

namespace mpsams {

struct SvgSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

/// Dependency-free SVG line chart: one polyline per series, linear or log
/// axes, tick labels, legend. Output is structurally stable so tests can
/// compare element counts.
inline std::string render_line_chart(std::vector<SvgSeries> series, const std::string& title,
                                     const std::string& xlabel, const std::string& ylabel, bool logx = false,
                                     bool logy = false) {
    if (series.empty()) throw InvalidInput("svg: no series");
    const double width = 800, height = 500;
    const double ml = 70, mr = 160, mt = 40, mb = 55;
    const double plot_w = width - ml - mr, plot_h = height - mt - mb;

    auto tx = [&](double v) { return logx ? std::log10(v) : v; };
    auto ty = [&](double v) { return logy ? std::log10(v) : v; };

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    std::size_t total_points = 0;
    for (auto& s : series) {
        for (auto& [x, y] : s.points) {
            if ((logx && x <= 0.0) || (logy && y <= 0.0))
                throw InvalidInput("svg: log axis requires positive values");
            xmin = std::min(xmin, tx(x));
            xmax = std::max(xmax, tx(x));
            ymin = std::min(ymin, ty(y));
            ymax = std::max(ymax, ty(y));
            ++total_points;
        }
    }
    if (total_points == 0) throw InvalidInput("svg: no data points");
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.5;
        ymax += 0.5;
    }

    auto px = [&](double v) { return ml + (tx(v) - xmin) / (xmax - xmin) * plot_w; };
    auto py = [&](double v) { return mt + plot_h - (ty(v) - ymin) / (ymax - ymin) * plot_h; };
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", v);
        return std::string(buf);
    };

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) + "\" height=\"" + fmt(height) +
           "\" viewBox=\"0 0 " + fmt(width) + " " + fmt(height) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + fmt(ml + plot_w / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" + title +
           "</text>\n";
    // axes
    out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(ml) + "\" y2=\"" + fmt(mt + plot_h) +
           "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt + plot_h) + "\" x2=\"" + fmt(ml + plot_w) + "\" y2=\"" +
           fmt(mt + plot_h) + "\" stroke=\"black\"/>\n";
    // ticks
    for (int i = 0; i <= 5; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 5.0;
        const double fy = ymin + (ymax - ymin) * i / 5.0;
        const double gx = ml + plot_w * i / 5.0;
        const double gy = mt + plot_h - plot_h * i / 5.0;
        const double label_x = logx ? std::pow(10.0, fx) : fx;
        const double label_y = logy ? std::pow(10.0, fy) : fy;
        out += "<line x1=\"" + fmt(gx) + "\" y1=\"" + fmt(mt + plot_h) + "\" x2=\"" + fmt(gx) + "\" y2=\"" +
               fmt(mt + plot_h + 5) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + fmt(gx) + "\" y=\"" + fmt(mt + plot_h + 18) +
               "\" text-anchor=\"middle\" font-size=\"11\">" + fmt(label_x) + "</text>\n";
        out += "<line x1=\"" + fmt(ml - 5) + "\" y1=\"" + fmt(gy) + "\" x2=\"" + fmt(ml) + "\" y2=\"" + fmt(gy) +
               "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + fmt(ml - 8) + "\" y=\"" + fmt(gy + 4) + "\" text-anchor=\"end\" font-size=\"11\">" +
               fmt(label_y) + "</text>\n";
    }
    out += "<text x=\"" + fmt(ml + plot_w / 2) + "\" y=\"" + fmt(height - 12) +
           "\" text-anchor=\"middle\" font-size=\"13\">" + xlabel + "</text>\n";
    out += "<text x=\"18\" y=\"" + fmt(mt + plot_h / 2) + "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 " +
           fmt(mt + plot_h / 2) + ")\">" + ylabel + "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = palette[s % 6];
        std::sort(series[s].points.begin(), series[s].points.end());
        std::string pts;
        for (const auto& [x, y] : series[s].points) {
            if (!pts.empty()) pts += ' ';
            pts += fmt(px(x)) + "," + fmt(py(y));
        }
        out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts +
               "\"/>\n";
        const double ly = mt + 18 + 18 * static_cast<double>(s);
        out += "<line x1=\"" + fmt(ml + plot_w + 10) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" +
               fmt(ml + plot_w + 34) + "\" y2=\"" + fmt(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + fmt(ml + plot_w + 40) + "\" y=\"" + fmt(ly) + "\" font-size=\"12\">" +
               series[s].label + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

inline void save_svg(const std::string& path, const std::string& svg) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("svg: cannot open " + path + " for writing");
    out << svg;
    if (!out) throw IoError("svg: write failed for " + path);
}

}  // namespace mpsams
