#include "capforge/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "capforge/errors.hpp"

namespace capforge {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

std::string loss_curve_svg(const std::vector<LossRecord>& history, int width, int height) {
    if (history.empty()) throw ConfigError("loss history is empty, nothing to plot");
    if (width < 100 || height < 100) throw ConfigError("plot dimensions too small");

    const double ml = 60, mr = 20, mt = 20, mb = 45;  // margins
    const double pw = width - ml - mr, ph = height - mt - mb;

    long it_min = history.front().iteration, it_max = history.back().iteration;
    float lo = history.front().loss, hi = history.front().loss;
    for (const LossRecord& r : history) {
        it_min = std::min(it_min, r.iteration);
        it_max = std::max(it_max, r.iteration);
        lo = std::min(lo, r.loss);
        hi = std::max(hi, r.loss);
    }
    if (it_max == it_min) it_max = it_min + 1;
    if (hi - lo < 1e-9f) hi = lo + 1.0f;

    auto px = [&](long it) {
        return ml + pw * static_cast<double>(it - it_min) / static_cast<double>(it_max - it_min);
    };
    auto py = [&](float loss) {
        return mt + ph * (1.0 - static_cast<double>(loss - lo) / static_cast<double>(hi - lo));
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // axes
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << (mt + ph) << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << (mt + ph) << "\" x2=\"" << (ml + pw)
        << "\" y2=\"" << (mt + ph) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << (ml + pw / 2) << "\" y=\"" << (height - 8)
        << "\" text-anchor=\"middle\" font-size=\"13\">iteration</text>\n";
    svg << "<text x=\"14\" y=\"" << (mt + ph / 2)
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 14 "
        << (mt + ph / 2) << ")\">mean loss</text>\n";
    // min/max tick labels
    svg << "<text x=\"" << (ml - 6) << "\" y=\"" << (py(hi) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(hi) << "</text>\n";
    svg << "<text x=\"" << (ml - 6) << "\" y=\"" << (py(lo) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(lo) << "</text>\n";
    svg << "<text x=\"" << px(it_min) << "\" y=\"" << (mt + ph + 16)
        << "\" text-anchor=\"middle\" font-size=\"11\">" << it_min << "</text>\n";
    svg << "<text x=\"" << px(it_max) << "\" y=\"" << (mt + ph + 16)
        << "\" text-anchor=\"middle\" font-size=\"11\">" << it_max << "</text>\n";

    // decay markers where the recorded LR drops between consecutive records
    for (std::size_t i = 1; i < history.size(); ++i) {
        if (history[i].lr < history[i - 1].lr) {
            const double x = px(history[i].iteration);
            svg << "<line x1=\"" << x << "\" y1=\"" << mt << "\" x2=\"" << x << "\" y2=\""
                << (mt + ph) << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
            svg << "<text x=\"" << (x + 3) << "\" y=\"" << (mt + 12)
                << "\" font-size=\"11\" fill=\"#555\">lr=" << fmt(history[i].lr) << "</text>\n";
        }
    }

    svg << "<polyline fill=\"none\" stroke=\"#1565c0\" stroke-width=\"1.5\" points=\"";
    for (const LossRecord& r : history) {
        svg << fmt(px(r.iteration)) << "," << fmt(py(r.loss)) << " ";
    }
    svg << "\"/>\n</svg>\n";
    return svg.str();
}

void write_loss_curve_svg(const std::vector<LossRecord>& history, const std::string& path,
                          int width, int height) {
    std::ofstream f(path);
    if (!f) throw FileError("cannot open " + path + " for writing");
    f << loss_curve_svg(history, width, height);
    if (!f) throw FileError("short write to " + path);
}

}  // namespace capforge
