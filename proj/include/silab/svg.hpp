#ifndef SILAB_SVG_HPP
#define SILAB_SVG_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "silab/error.hpp"

namespace silab {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
    std::string color;  // empty picks from the palette
    bool markers = true;
};

struct VLine {
    double x = 0.0;
    std::string label;
    bool dotted = false;  // dashed otherwise
};

struct LineChart {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
    std::vector<Series> series;
    std::vector<VLine> vlines;
    int width = 720;
    int height = 440;
};

namespace detail {

inline std::string fmt(double v, const char* spec = "%.2f") {
    char buf[48];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

inline std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string tick_label(double v, bool log) {
    if (log) return "1e" + std::to_string(static_cast<int>(std::lround(v)));
    return fmt(v, "%.3g");
}

} // namespace detail

/// Single-file SVG line chart. Non-finite points and, on log axes, non-positive ones
/// are skipped; a series breaks its line at every skipped point.
inline std::string render_svg(const LineChart& c) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"};
    auto tx = [&](double x) { return c.log_x ? std::log10(x) : x; };
    auto ty = [&](double y) { return c.log_y ? std::log10(y) : y; };
    auto usable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!c.log_x || x > 0) && (!c.log_y || y > 0);
    };

    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : c.series) {
        for (const auto& [x, y] : s.points) {
            if (!usable(x, y)) continue;
            x0 = std::min(x0, tx(x));
            x1 = std::max(x1, tx(x));
            y0 = std::min(y0, ty(y));
            y1 = std::max(y1, ty(y));
        }
    }
    for (const auto& v : c.vlines) {
        if (!std::isfinite(v.x) || (c.log_x && v.x <= 0)) continue;
        x0 = std::min(x0, tx(v.x));
        x1 = std::max(x1, tx(v.x));
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1;
    if (!std::isfinite(y0)) y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;

    const double L = 70, R = c.width - 170, T = 40, B = c.height - 55;
    auto px = [&](double x) { return L + (tx(x) - x0) / (x1 - x0) * (R - L); };
    auto py = [&](double y) { return B - (ty(y) - y0) / (y1 - y0) * (B - T); };
    using detail::fmt;

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(c.width) +
                    "\" height=\"" + std::to_string(c.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + fmt((L + R) / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         detail::escape_xml(c.title) + "</text>\n";
    s += "<rect x=\"" + fmt(L) + "\" y=\"" + fmt(T) + "\" width=\"" + fmt(R - L) + "\" height=\"" + fmt(B - T) +
         "\" fill=\"none\" stroke=\"black\"/>\n";

    // Ticks: integer decades on log axes, five even steps otherwise.
    auto ticks = [](double lo, double hi, bool log) {
        std::vector<double> t;
        if (log) {
            for (double d = std::ceil(lo); d <= std::floor(hi) + 1e-9; d += 1) t.push_back(d);
            if (t.size() < 2) t = {lo, hi};
        } else {
            for (int i = 0; i <= 5; ++i) t.push_back(lo + (hi - lo) * i / 5.0);
        }
        return t;
    };
    for (double t : ticks(x0, x1, c.log_x)) {
        const double X = L + (t - x0) / (x1 - x0) * (R - L);
        s += "<line x1=\"" + fmt(X) + "\" y1=\"" + fmt(B) + "\" x2=\"" + fmt(X) + "\" y2=\"" + fmt(B + 5) +
             "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + fmt(X) + "\" y=\"" + fmt(B + 18) + "\" text-anchor=\"middle\">" +
             detail::tick_label(t, c.log_x) + "</text>\n";
    }
    for (double t : ticks(y0, y1, c.log_y)) {
        const double Y = B - (t - y0) / (y1 - y0) * (B - T);
        s += "<line x1=\"" + fmt(L - 5) + "\" y1=\"" + fmt(Y) + "\" x2=\"" + fmt(L) + "\" y2=\"" + fmt(Y) +
             "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + fmt(L - 8) + "\" y=\"" + fmt(Y + 4) + "\" text-anchor=\"end\">" +
             detail::tick_label(t, c.log_y) + "</text>\n";
    }
    s += "<text x=\"" + fmt((L + R) / 2) + "\" y=\"" + fmt(c.height - 12.0) + "\" text-anchor=\"middle\">" +
         detail::escape_xml(c.x_label) + "</text>\n";
    s += "<text x=\"16\" y=\"" + fmt((T + B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         fmt((T + B) / 2) + ")\">" + detail::escape_xml(c.y_label) + "</text>\n";

    for (const auto& v : c.vlines) {
        if (!std::isfinite(v.x) || (c.log_x && v.x <= 0)) continue;
        const double X = px(v.x);
        s += "<line x1=\"" + fmt(X) + "\" y1=\"" + fmt(T) + "\" x2=\"" + fmt(X) + "\" y2=\"" + fmt(B) +
             "\" stroke=\"#444\" stroke-dasharray=\"" + (v.dotted ? "2,3" : "6,4") + "\"/>\n";
        if (!v.label.empty()) {
            s += "<text x=\"" + fmt(X + 3) + "\" y=\"" + fmt(T + 12) + "\" font-size=\"10\">" +
                 detail::escape_xml(v.label) + "</text>\n";
        }
    }

    for (std::size_t i = 0; i < c.series.size(); ++i) {
        const auto& ser = c.series[i];
        const std::string color = ser.color.empty() ? palette[i % 10] : ser.color;
        std::string path;
        bool pen = false;
        for (const auto& [x, y] : ser.points) {
            if (!usable(x, y)) {
                pen = false;
                continue;
            }
            path += (pen ? " L" : " M") + fmt(px(x)) + "," + fmt(py(y));
            pen = true;
        }
        if (!path.empty()) {
            s += "<path d=\"" + path.substr(1) + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
        }
        if (ser.markers) {
            for (const auto& [x, y] : ser.points) {
                if (!usable(x, y)) continue;
                s += "<circle cx=\"" + fmt(px(x)) + "\" cy=\"" + fmt(py(y)) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
            }
        }
        const double ly = T + 14 + 18.0 * static_cast<double>(i);
        s += "<line x1=\"" + fmt(R + 12) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" + fmt(R + 32) + "\" y2=\"" +
             fmt(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + fmt(R + 38) + "\" y=\"" + fmt(ly) + "\">" + detail::escape_xml(ser.name) + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

} // namespace silab

#endif
