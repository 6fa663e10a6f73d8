#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "csisleep/csi_model.hpp"
#include "csisleep/foreground_filter.hpp"

namespace csisleep {

enum class MotionClass : std::uint8_t {
    HeadSwing,
    ArmUpDown,
    ArmSwing,
    LegBend,
    LegStretch,
    TorsoTwist,
    Rollover,
    FullStretch,
};

enum class BodyPart : std::uint8_t { Head, Arm, Leg, Torso, Multiple1, Multiple2 };

inline constexpr std::array<MotionClass, 8> kAllMotionClasses = {
    MotionClass::HeadSwing, MotionClass::ArmUpDown,  MotionClass::ArmSwing, MotionClass::LegBend,
    MotionClass::LegStretch, MotionClass::TorsoTwist, MotionClass::Rollover, MotionClass::FullStretch,
};
inline constexpr std::array<BodyPart, 6> kAllBodyParts = {
    BodyPart::Head, BodyPart::Arm, BodyPart::Leg, BodyPart::Torso, BodyPart::Multiple1, BodyPart::Multiple2,
};

BodyPart body_part(MotionClass c);
std::string_view to_string(MotionClass c);
std::string_view to_string(BodyPart p);
// Throws std::invalid_argument for unknown names.
MotionClass parse_motion_class(std::string_view name);
// One representative class per body part, in table order.
MotionClass representative(BodyPart p);

struct MotionEvent {
    double start = 0.0;      // seconds
    double duration = 0.0;   // seconds
    double intensity = 0.0;  // dBm / s
    double coverage = 0.0;   // peak fraction of subcarriers
    std::vector<std::int64_t> antenna_votes;
    std::int64_t first_column = 0;
    std::int64_t last_column = 0;  // inclusive
    std::int64_t pixels = 0;

    double end() const { return start + duration; }
};

using MaskColumn = Eigen::Array<bool, Eigen::Dynamic, 1>;

struct SegmentParams {
    double merge_gap = 0.3;  // seconds; runs closer than this are one event

    void validate() const;
};

// Incremental event segmentation over post-filter columns.
//
// intensity = sample_rate * mean over affected pixels of |x[m,n] - x[m,n-1]|,
// where each pixel's difference is averaged over antennas. It is built from
// successive differences, so a constant amplitude offset leaves it unchanged.
class EventSegmenter {
public:
    EventSegmenter(const FrameConfig& config, const SegmentParams& params, double start_time = 0.0);

    // `amplitudes` is M x A (column a = antenna a at this sample),
    // `antenna_masks` is M x A of per-antenna GMM labels. Columns must arrive
    // in consecutive order. Returns an event when the merge gap closed one.
    std::optional<MotionEvent> push_column(std::int64_t column, const Eigen::Ref<const MaskColumn>& fg,
                                           const Eigen::Ref<const Eigen::MatrixXd>& amplitudes,
                                           const Eigen::Ref<const MaskGrid>& antenna_masks);

    std::optional<MotionEvent> flush();

    bool open() const { return open_; }
    // Earliest column an undelivered event may still start at.
    std::int64_t pending_since() const { return open_ ? first_ : next_column_; }

private:
    MotionEvent close();

    FrameConfig config_;
    double start_time_;
    std::int64_t gap_columns_;
    std::int64_t next_column_ = 0;
    Eigen::MatrixXd previous_;
    bool has_previous_ = false;

    bool open_ = false;
    std::int64_t first_ = 0;
    std::int64_t last_ = 0;
    std::int64_t pixels_ = 0;
    std::int64_t peak_rows_ = 0;
    double diff_sum_ = 0.0;
    std::vector<std::int64_t> votes_;
};

// Batch segmentation. `frames[a]` holds antenna a's amplitudes for exactly the
// columns of `mask`; `antenna_masks`, when non-empty, gives per-antenna labels
// for the vote counts.
std::vector<MotionEvent> segment_motions(const ForegroundMask& mask, std::span<const Frame> frames,
                                         std::span<const ForegroundMask> antenna_masks = {},
                                         const SegmentParams& params = {});

// ---------------------------------------------------------------------------
// features and k-NN

using Features = Eigen::Vector3d;  // duration, intensity, coverage

Features raw_features(const MotionEvent& e);

struct FeatureStats {
    Features mean = Features::Zero();
    Features scale = Features::Ones();
    bool fitted = false;

    // Order-independent: each column is summed in sorted order.
    static FeatureStats fit(const Eigen::Matrix<double, Eigen::Dynamic, 3>& raw);
    Features normalize(const Features& raw) const;
};

struct FeatureVector {
    Features raw;
    Features normalized;
};

// Throws std::logic_error when `stats` is unfitted.
FeatureVector extract_features(const MotionEvent& event, const FeatureStats& stats);
FeatureVector extract_features(const Features& raw, const FeatureStats& stats);

struct LabeledFeatures {
    Features raw;
    MotionClass label;
};

struct KnnModel {
    int k = 5;
    FeatureStats stats;
    Eigen::Matrix<double, Eigen::Dynamic, 3> raw;
    Eigen::Matrix<double, Eigen::Dynamic, 3> points;  // normalized
    std::vector<MotionClass> labels;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
};

struct KnnResult {
    MotionClass label;
    std::map<MotionClass, int> votes;
};

// k must be odd, positive and <= sample count. A single-class set is accepted
// (the caller gets `single_class = true` to warn on).
KnnModel fit_knn(std::span<const LabeledFeatures> samples, int k, bool* single_class = nullptr);
KnnResult knn_classify(const KnnModel& model, const FeatureVector& features);
KnnResult knn_classify(const KnnModel& model, const MotionEvent& event);

struct LeaveOneOutReport {
    double accuracy = 0.0;
    // rows: true body part, cols: predicted body part
    Eigen::Matrix<int, 6, 6> confusion = Eigen::Matrix<int, 6, 6>::Zero();
};

// Refits on n-1 samples for each held-out sample. Correctness is judged by
// body part.
LeaveOneOutReport leave_one_out(std::span<const LabeledFeatures> samples, int k);

// CSV: duration_s,intensity_dbm_per_s,coverage,class_label
std::vector<LabeledFeatures> read_training_set(std::istream& in);
void write_training_set(std::ostream& out, std::span<const LabeledFeatures> samples);

// Model export: one stats line, then the training-set CSV.
void save_model(std::ostream& out, const KnnModel& model);
KnnModel load_model(std::istream& in);

}  // namespace csisleep
