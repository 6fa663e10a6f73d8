#include "csisleep/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace csisleep {

double overlap_ratio(const TruthRow& a, const TruthRow& b) {
    const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
    const double shorter = std::min(a.end - a.start, b.end - b.start);
    if (inter <= 0.0 || shorter <= 0.0) return 0.0;
    return inter / shorter;
}

std::vector<EventMatch> match_events(std::span<const TruthRow> detected, std::span<const TruthRow> truth,
                                     double min_overlap) {
    std::vector<EventMatch> out;
    std::vector<bool> used(detected.size(), false);
    std::size_t lo = 0;  // detections ending before the current truth can never match again
    for (std::size_t t = 0; t < truth.size(); ++t) {
        while (lo < detected.size() && (used[lo] || detected[lo].end <= truth[t].start)) ++lo;
        for (std::size_t d = lo; d < detected.size() && detected[d].start < truth[t].end; ++d) {
            if (used[d]) continue;
            if (overlap_ratio(detected[d], truth[t]) >= min_overlap) {
                used[d] = true;
                out.push_back({d, t});
                break;
            }
        }
    }
    return out;
}

MetricsReport compute_metrics(std::span<const EventMatch> matches, std::span<const TruthRow> detected,
                              std::span<const TruthRow> truth) {
    MetricsReport r;
    r.truth = truth.size();
    r.detected = detected.size();
    r.matched = matches.size();
    r.missed = r.truth - r.matched;
    r.spurious = r.detected - r.matched;
    std::vector<bool> hit(truth.size(), false);
    double err = 0.0;
    for (const auto& m : matches) {
        if (m.detected >= detected.size() || m.truth >= truth.size()) {
            throw std::out_of_range("compute_metrics: match index out of range");
        }
        const auto& d = detected[m.detected];
        const auto& t = truth[m.truth];
        hit[m.truth] = true;
        const auto tp = body_part(parse_motion_class(t.label));
        const auto dp = body_part(parse_motion_class(d.label));
        r.confusion(static_cast<int>(tp), static_cast<int>(dp)) += 1;
        if (tp == dp) ++r.correct;
        err += std::abs((d.end - d.start) - (t.end - t.start));
    }
    for (std::size_t t = 0; t < truth.size(); ++t) {
        if (!hit[t]) r.confusion(static_cast<int>(body_part(parse_motion_class(truth[t].label))), 6) += 1;
    }
    auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    r.dr = ratio(r.matched, r.detected);
    r.rr = ratio(r.correct, r.matched);
    r.mr = ratio(r.missed, r.truth);
    if (r.matched > 0) r.mae = err / static_cast<double>(r.matched);
    return r;
}

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::string pct(const std::optional<double>& v) {
    if (!v) return "undefined";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", *v * 100.0);
    return buf;
}

}  // namespace

Json to_json(const MetricsReport& r) {
    Json j;
    j["dr"] = opt(r.dr);
    j["rr"] = opt(r.rr);
    j["mr"] = opt(r.mr);
    j["mae_s"] = opt(r.mae);
    j["counts"] = Json{{"truth", r.truth},       {"detected", r.detected}, {"matched", r.matched},
                       {"missed", r.missed},     {"spurious", r.spurious}, {"correct", r.correct}};
    Json labels = Json::array();
    for (auto p : kAllBodyParts) labels.push_back(std::string(to_string(p)));
    j["confusion_labels"] = labels;
    Json rows = Json::array();
    for (int i = 0; i < 6; ++i) {
        Json row = Json::array();
        for (int c = 0; c < 7; ++c) row.push_back(r.confusion(i, c));
        rows.push_back(row);
    }
    j["confusion"] = rows;
    return j;
}

std::string format_table(const MetricsReport& r) {
    std::ostringstream os;
    char buf[160];
    os << "metric  value\n";
    os << "DR      " << pct(r.dr) << '\n';
    os << "RR      " << pct(r.rr) << '\n';
    os << "MR      " << pct(r.mr) << '\n';
    if (r.mae) {
        std::snprintf(buf, sizeof(buf), "MAE     %.3f s\n", *r.mae);
        os << buf;
    } else {
        os << "MAE     undefined\n";
    }
    std::snprintf(buf, sizeof(buf), "truth %zu  detected %zu  matched %zu  missed %zu  spurious %zu\n\n", r.truth,
                  r.detected, r.matched, r.missed, r.spurious);
    os << buf;
    std::snprintf(buf, sizeof(buf), "%-10s", "truth\\det");
    os << buf;
    for (auto p : kAllBodyParts) {
        std::snprintf(buf, sizeof(buf), "%10s", std::string(to_string(p)).c_str());
        os << buf;
    }
    os << "    missed\n";
    for (int i = 0; i < 6; ++i) {
        std::snprintf(buf, sizeof(buf), "%-10s", std::string(to_string(kAllBodyParts[i])).c_str());
        os << buf;
        for (int c = 0; c < 7; ++c) {
            std::snprintf(buf, sizeof(buf), "%10d", r.confusion(i, c));
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

std::vector<TruthRow> detections(const SleepLog& log) {
    std::vector<TruthRow> rows;
    for (const auto& e : log.events) rows.push_back({e.event.start, e.event.end(), std::string(to_string(e.label))});
    return rows;
}

// ---------------------------------------------------------------------------

const std::array<Rgb, 256>& colormap() {
    static const std::array<Rgb, 256> table = [] {
        // piecewise linear through blue, cyan, yellow, red
        const double stops[4][3] = {{0, 0, 255}, {0, 255, 255}, {255, 255, 0}, {255, 0, 0}};
        std::array<Rgb, 256> t{};
        for (int i = 0; i < 256; ++i) {
            const double x = i / 255.0 * 3.0;
            const int seg = std::min(2, static_cast<int>(x));
            const double f = x - seg;
            double c[3];
            for (int k = 0; k < 3; ++k) c[k] = stops[seg][k] + f * (stops[seg + 1][k] - stops[seg][k]);
            t[i] = {static_cast<std::uint8_t>(std::lround(c[0])), static_cast<std::uint8_t>(std::lround(c[1])),
                    static_cast<std::uint8_t>(std::lround(c[2]))};
        }
        return t;
    }();
    return table;
}

void write_ppm(const Frame& frame, double lo, double hi, const std::string& path, const MaskGrid* mask) {
    const auto& px = frame.pixels;
    if (mask && (mask->rows() != px.rows() || mask->cols() != px.cols())) {
        throw std::invalid_argument("write_ppm: mask shape mismatch");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "P6\n" << px.cols() << ' ' << px.rows() << "\n255\n";
    const auto& cmap = colormap();
    const double span = hi > lo ? hi - lo : 1.0;
    std::string row(static_cast<std::size_t>(px.cols()) * 3, '\0');
    for (Eigen::Index m = 0; m < px.rows(); ++m) {
        for (Eigen::Index n = 0; n < px.cols(); ++n) {
            Rgb c;
            const bool edge = mask && (*mask)(m, n) &&
                              (m == 0 || n == 0 || m + 1 == px.rows() || n + 1 == px.cols() || !(*mask)(m - 1, n) ||
                               !(*mask)(m + 1, n) || !(*mask)(m, n - 1) || !(*mask)(m, n + 1));
            if (edge) {
                c = {255, 255, 255};
            } else {
                const double f = std::clamp((px(m, n) - lo) / span, 0.0, 1.0);
                c = cmap[static_cast<std::size_t>(std::lround(f * 255.0))];
            }
            row[3 * n] = static_cast<char>(c.r);
            row[3 * n + 1] = static_cast<char>(c.g);
            row[3 * n + 2] = static_cast<char>(c.b);
        }
        out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

RenderSummary render_heatmap(const std::vector<std::vector<Frame>>& frames, const std::string& dir,
                             const std::vector<std::vector<MaskGrid>>* masks) {
    RenderSummary s;
    s.lo = std::numeric_limits<double>::infinity();
    s.hi = -std::numeric_limits<double>::infinity();
    for (const auto& per : frames) {
        for (const auto& f : per) {
            if (f.pixels.size() == 0) continue;
            s.lo = std::min(s.lo, f.pixels.minCoeff());
            s.hi = std::max(s.hi, f.pixels.maxCoeff());
        }
    }
    if (s.lo > s.hi) s.lo = s.hi = 0.0;
    std::filesystem::create_directories(dir);
    for (std::size_t a = 0; a < frames.size(); ++a) {
        for (std::size_t k = 0; k < frames[a].size(); ++k) {
            char name[64];
            std::snprintf(name, sizeof(name), "frame_%05zu_ant%zu.ppm", k, a);
            const MaskGrid* mask = nullptr;
            if (masks && a < masks->size() && k < (*masks)[a].size()) mask = &(*masks)[a][k];
            write_ppm(frames[a][k], s.lo, s.hi, (std::filesystem::path(dir) / name).string(), mask);
            ++s.images;
        }
    }
    return s;
}

}  // namespace csisleep
