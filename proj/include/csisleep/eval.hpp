#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "csisleep/csi_model.hpp"
#include "csisleep/foreground_filter.hpp"
#include "csisleep/guardian.hpp"

namespace csisleep {

// Fraction of the shorter interval covered by the intersection.
double overlap_ratio(const TruthRow& a, const TruthRow& b);

struct EventMatch {
    std::size_t detected;
    std::size_t truth;
};

// Greedy one-to-one matching in time order: each truth event takes the
// earliest still-free detection overlapping it by >= min_overlap of the
// shorter of the two. Both lists must be time ordered.
std::vector<EventMatch> match_events(std::span<const TruthRow> detected, std::span<const TruthRow> truth,
                                     double min_overlap = 0.5);

struct MetricsReport {
    std::size_t truth = 0;
    std::size_t detected = 0;
    std::size_t matched = 0;
    std::size_t missed = 0;
    std::size_t spurious = 0;
    std::size_t correct = 0;  // matched with the right body part
    // nullopt when the denominator is zero
    std::optional<double> dr;   // matched / detected
    std::optional<double> rr;   // correct / matched
    std::optional<double> mr;   // missed / truth
    std::optional<double> mae;  // mean |duration error| over matches, seconds
    // rows: true body part; cols: predicted body part, last col = missed
    Eigen::Matrix<int, 6, 7> confusion = Eigen::Matrix<int, 6, 7>::Zero();
};

// Labels must parse as motion classes.
MetricsReport compute_metrics(std::span<const EventMatch> matches, std::span<const TruthRow> detected,
                              std::span<const TruthRow> truth);

Json to_json(const MetricsReport& r);
std::string format_table(const MetricsReport& r);

// Logged events as (start, end, class) rows.
std::vector<TruthRow> detections(const SleepLog& log);

// ---------------------------------------------------------------------------
// heatmaps

struct Rgb {
    std::uint8_t r, g, b;
};

// Fixed 256-entry blue -> cyan -> yellow -> red ramp.
const std::array<Rgb, 256>& colormap();

// P6 image of one frame: rows = subcarriers, cols = samples. Amplitudes map
// linearly from [lo, hi] to the colormap; with `mask`, foreground pixels whose
// 4-neighbourhood leaves the foreground are drawn white.
void write_ppm(const Frame& frame, double lo, double hi, const std::string& path, const MaskGrid* mask = nullptr);

struct RenderSummary {
    std::size_t images = 0;
    double lo = 0.0;
    double hi = 0.0;
};

// frames[a][k]; masks (optional) indexed the same way. Files are
// <dir>/frame_<k>_ant<a>.ppm with k zero-padded to 5 digits.
RenderSummary render_heatmap(const std::vector<std::vector<Frame>>& frames, const std::string& dir,
                             const std::vector<std::vector<MaskGrid>>* masks = nullptr);

}  // namespace csisleep
