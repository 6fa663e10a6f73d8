#include "csisleep/motion_events.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace csisleep {

namespace {

constexpr std::array<std::string_view, 8> kClassNames = {
    "HeadSwing", "ArmUpDown", "ArmSwing", "LegBend", "LegStretch", "TorsoTwist", "Rollover", "FullStretch",
};
constexpr std::array<std::string_view, 6> kPartNames = {"Head", "Arm", "Leg", "Torso", "Multiple1", "Multiple2"};

std::string shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

double parse_double(std::string_view s, const char* what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw std::invalid_argument(std::string("bad ") + what + " '" + std::string(s) + "'");
    }
    return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, sep)) {
        if (!f.empty() && f.back() == '\r') f.pop_back();
        out.push_back(f);
    }
    return out;
}

std::string join3(const Features& v) {
    return shortest(v[0]) + ';' + shortest(v[1]) + ';' + shortest(v[2]);
}

Features parse3(const std::string& s) {
    const auto parts = split(s, ';');
    if (parts.size() != 3) throw std::invalid_argument("expected three ';'-separated values");
    return Features(parse_double(parts[0], "value"), parse_double(parts[1], "value"), parse_double(parts[2], "value"));
}

}  // namespace

BodyPart body_part(MotionClass c) {
    switch (c) {
        case MotionClass::HeadSwing: return BodyPart::Head;
        case MotionClass::ArmUpDown:
        case MotionClass::ArmSwing: return BodyPart::Arm;
        case MotionClass::LegBend:
        case MotionClass::LegStretch: return BodyPart::Leg;
        case MotionClass::TorsoTwist: return BodyPart::Torso;
        case MotionClass::Rollover: return BodyPart::Multiple1;
        case MotionClass::FullStretch: return BodyPart::Multiple2;
    }
    throw std::invalid_argument("unknown motion class");
}

std::string_view to_string(MotionClass c) { return kClassNames.at(static_cast<std::size_t>(c)); }
std::string_view to_string(BodyPart p) { return kPartNames.at(static_cast<std::size_t>(p)); }

MotionClass parse_motion_class(std::string_view name) {
    for (std::size_t i = 0; i < kClassNames.size(); ++i) {
        if (kClassNames[i] == name) return static_cast<MotionClass>(i);
    }
    throw std::invalid_argument("unknown motion class '" + std::string(name) + "'");
}

MotionClass representative(BodyPart p) {
    switch (p) {
        case BodyPart::Head: return MotionClass::HeadSwing;
        case BodyPart::Arm: return MotionClass::ArmSwing;
        case BodyPart::Leg: return MotionClass::LegBend;
        case BodyPart::Torso: return MotionClass::TorsoTwist;
        case BodyPart::Multiple1: return MotionClass::Rollover;
        case BodyPart::Multiple2: return MotionClass::FullStretch;
    }
    throw std::invalid_argument("unknown body part");
}

void SegmentParams::validate() const {
    if (!(merge_gap >= 0.0)) throw std::invalid_argument("segment: merge gap must be >= 0");
}

// ---------------------------------------------------------------------------

EventSegmenter::EventSegmenter(const FrameConfig& config, const SegmentParams& params, double start_time)
    : config_(config),
      start_time_(start_time),
      gap_columns_(std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(params.merge_gap * config.sample_rate - 1e-9)))),
      previous_(Eigen::MatrixXd::Zero(config.subcarriers, config.antennas)),
      votes_(config.antennas, 0) {
    params.validate();
}

std::optional<MotionEvent> EventSegmenter::push_column(std::int64_t column, const Eigen::Ref<const MaskColumn>& fg,
                                                       const Eigen::Ref<const Eigen::MatrixXd>& amplitudes,
                                                       const Eigen::Ref<const MaskGrid>& antenna_masks) {
    if (column != next_column_) throw std::logic_error("EventSegmenter: columns must be consecutive");
    if (fg.rows() != config_.subcarriers || amplitudes.rows() != config_.subcarriers ||
        amplitudes.cols() != config_.antennas) {
        throw std::invalid_argument("EventSegmenter: column shape mismatch");
    }
    ++next_column_;

    std::optional<MotionEvent> closed;
    const Eigen::Index rows = fg.count();
    if (rows > 0) {
        if (open_ && column - last_ - 1 >= gap_columns_) closed = close();
        if (!open_) {
            open_ = true;
            first_ = column;
            pixels_ = 0;
            peak_rows_ = 0;
            diff_sum_ = 0.0;
            std::fill(votes_.begin(), votes_.end(), 0);
        }
        last_ = column;
        peak_rows_ = std::max<std::int64_t>(peak_rows_, rows);
        for (Eigen::Index m = 0; m < fg.rows(); ++m) {
            if (!fg(m)) continue;
            ++pixels_;
            if (has_previous_) diff_sum_ += (amplitudes.row(m) - previous_.row(m)).cwiseAbs().mean();
            if (antenna_masks.size() > 0) {
                for (int a = 0; a < config_.antennas; ++a) votes_[a] += antenna_masks(m, a) ? 1 : 0;
            }
        }
    } else if (open_ && column - last_ >= gap_columns_) {
        closed = close();
    }
    previous_ = amplitudes;
    has_previous_ = true;
    return closed;
}

std::optional<MotionEvent> EventSegmenter::flush() {
    if (!open_) return std::nullopt;
    return close();
}

MotionEvent EventSegmenter::close() {
    MotionEvent e;
    const double stride = config_.stride();
    e.first_column = first_;
    e.last_column = last_;
    e.start = start_time_ + static_cast<double>(first_) * stride;
    e.duration = static_cast<double>(last_ - first_ + 1) * stride;
    e.pixels = pixels_;
    e.coverage = static_cast<double>(peak_rows_) / config_.subcarriers;
    e.intensity = pixels_ > 0 ? diff_sum_ * config_.sample_rate / static_cast<double>(pixels_) : 0.0;
    e.antenna_votes = votes_;
    open_ = false;
    return e;
}

std::vector<MotionEvent> segment_motions(const ForegroundMask& mask, std::span<const Frame> frames,
                                         std::span<const ForegroundMask> antenna_masks, const SegmentParams& params) {
    if (frames.empty()) throw std::invalid_argument("segment_motions: no frames");
    const auto m = mask.subcarriers();
    const auto n = mask.columns();
    for (const auto& f : frames) {
        if (f.pixels.rows() != m || f.pixels.cols() != n) throw std::invalid_argument("segment_motions: frame shape mismatch");
    }
    for (const auto& am : antenna_masks) {
        if (am.grid.rows() != m || am.grid.cols() != n) throw std::invalid_argument("segment_motions: mask shape mismatch");
    }
    FrameConfig config;
    config.subcarriers = static_cast<int>(m);
    config.antennas = static_cast<int>(frames.size());
    config.sample_rate = 1.0 / mask.sample_stride;

    EventSegmenter seg(config, params, mask.start_time);
    std::vector<MotionEvent> events;
    Eigen::MatrixXd amps(m, config.antennas);
    MaskGrid votes = MaskGrid::Zero(antenna_masks.empty() ? 0 : m, antenna_masks.empty() ? 0 : config.antennas);
    for (Eigen::Index c = 0; c < n; ++c) {
        for (int a = 0; a < config.antennas; ++a) {
            amps.col(a) = frames[a].pixels.col(c);
            if (!antenna_masks.empty()) votes.col(a) = antenna_masks[a].grid.col(c);
        }
        if (auto e = seg.push_column(c, mask.grid.col(c), amps, votes)) events.push_back(std::move(*e));
    }
    if (auto e = seg.flush()) events.push_back(std::move(*e));
    return events;
}

// ---------------------------------------------------------------------------

Features raw_features(const MotionEvent& e) { return Features(e.duration, e.intensity, e.coverage); }

FeatureStats FeatureStats::fit(const Eigen::Matrix<double, Eigen::Dynamic, 3>& raw) {
    if (raw.rows() == 0) throw std::invalid_argument("FeatureStats: empty training set");
    FeatureStats s;
    const auto n = static_cast<double>(raw.rows());
    for (int j = 0; j < 3; ++j) {
        std::vector<double> col(raw.col(j).data(), raw.col(j).data() + raw.rows());
        std::sort(col.begin(), col.end());
        const double mean = std::accumulate(col.begin(), col.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : col) ss += (v - mean) * (v - mean);
        const double sd = std::sqrt(ss / n);
        s.mean[j] = mean;
        s.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    s.fitted = true;
    return s;
}

Features FeatureStats::normalize(const Features& raw) const { return (raw - mean).cwiseQuotient(scale); }

FeatureVector extract_features(const Features& raw, const FeatureStats& stats) {
    if (!stats.fitted) throw std::logic_error("extract_features: feature statistics are not fitted");
    return FeatureVector{raw, stats.normalize(raw)};
}

FeatureVector extract_features(const MotionEvent& event, const FeatureStats& stats) {
    return extract_features(raw_features(event), stats);
}

KnnModel fit_knn(std::span<const LabeledFeatures> samples, int k, bool* single_class) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("fit_knn: k must be a positive odd integer");
    if (samples.size() < static_cast<std::size_t>(k)) {
        throw std::invalid_argument("fit_knn: need at least k = " + std::to_string(k) + " samples, got " +
                                    std::to_string(samples.size()));
    }
    KnnModel model;
    model.k = k;
    model.raw.resize(static_cast<Eigen::Index>(samples.size()), 3);
    model.labels.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        model.raw.row(static_cast<Eigen::Index>(i)) = samples[i].raw.transpose();
        model.labels.push_back(samples[i].label);
    }
    model.stats = FeatureStats::fit(model.raw);
    model.points = (model.raw.rowwise() - model.stats.mean.transpose()).array().rowwise() /
                   model.stats.scale.transpose().array();
    if (single_class) {
        *single_class = std::all_of(model.labels.begin(), model.labels.end(),
                                    [&](MotionClass c) { return c == model.labels.front(); });
    }
    return model;
}

KnnResult knn_classify(const KnnModel& model, const FeatureVector& features) {
    if (model.empty()) throw std::invalid_argument("knn_classify: empty model");
    const Eigen::VectorXd dist = (model.points.rowwise() - features.normalized.transpose()).rowwise().squaredNorm();

    // Total order on (distance, label, raw features) keeps the neighbour set
    // independent of training-set order.
    auto key = [&](Eigen::Index i) {
        return std::make_tuple(dist[i], model.labels[static_cast<std::size_t>(i)], model.raw(i, 0), model.raw(i, 1),
                               model.raw(i, 2));
    };
    std::vector<Eigen::Index> idx(model.size());
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(model.k), idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](Eigen::Index a, Eigen::Index b) { return key(a) < key(b); });

    KnnResult r;
    for (std::size_t i = 0; i < k; ++i) ++r.votes[model.labels[static_cast<std::size_t>(idx[i])]];
    int best = 0;
    for (const auto& [label, n] : r.votes) best = std::max(best, n);
    // Tie: the tied label owning the nearest neighbour wins.
    for (std::size_t i = 0; i < k; ++i) {
        const auto label = model.labels[static_cast<std::size_t>(idx[i])];
        if (r.votes[label] == best) {
            r.label = label;
            break;
        }
    }
    return r;
}

KnnResult knn_classify(const KnnModel& model, const MotionEvent& event) {
    return knn_classify(model, extract_features(event, model.stats));
}

LeaveOneOutReport leave_one_out(std::span<const LabeledFeatures> samples, int k) {
    LeaveOneOutReport report;
    if (samples.size() < 2) return report;
    std::vector<LabeledFeatures> rest;
    rest.reserve(samples.size() - 1);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        rest.clear();
        for (std::size_t j = 0; j < samples.size(); ++j) {
            if (j != i) rest.push_back(samples[j]);
        }
        const KnnModel model = fit_knn(rest, k);
        const auto predicted = knn_classify(model, extract_features(samples[i].raw, model.stats)).label;
        const auto truth = body_part(samples[i].label);
        const auto guess = body_part(predicted);
        ++report.confusion(static_cast<int>(truth), static_cast<int>(guess));
        if (truth == guess) ++correct;
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    return report;
}

// ---------------------------------------------------------------------------

std::vector<LabeledFeatures> read_training_set(std::istream& in) {
    std::vector<LabeledFeatures> out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto f = split(line, ',');
        if (f.size() == 4 && f[0] == "duration_s") continue;
        if (f.size() != 4) throw ParseError(row, "expected duration_s,intensity_dbm_per_s,coverage,class_label");
        try {
            out.push_back({Features(parse_double(f[0], "duration"), parse_double(f[1], "intensity"),
                                    parse_double(f[2], "coverage")),
                           parse_motion_class(f[3])});
        } catch (const std::invalid_argument& e) {
            throw ParseError(row, e.what());
        }
    }
    return out;
}

void write_training_set(std::ostream& out, std::span<const LabeledFeatures> samples) {
    out << "duration_s,intensity_dbm_per_s,coverage,class_label\n";
    for (const auto& s : samples) {
        out << shortest(s.raw[0]) << ',' << shortest(s.raw[1]) << ',' << shortest(s.raw[2]) << ',' << to_string(s.label)
            << '\n';
    }
}

void save_model(std::ostream& out, const KnnModel& model) {
    out << "knn,v1,k=" << model.k << ",mean=" << join3(model.stats.mean) << ",scale=" << join3(model.stats.scale)
        << '\n';
    std::vector<LabeledFeatures> samples;
    for (std::size_t i = 0; i < model.size(); ++i) {
        samples.push_back({model.raw.row(static_cast<Eigen::Index>(i)).transpose(), model.labels[i]});
    }
    write_training_set(out, samples);
}

KnnModel load_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "empty model file");
    const auto f = split(line, ',');
    if (f.size() != 5 || f[0] != "knn" || f[1] != "v1" || f[2].rfind("k=", 0) != 0 || f[3].rfind("mean=", 0) != 0 ||
        f[4].rfind("scale=", 0) != 0) {
        throw ParseError(1, "bad model header");
    }
    KnnModel model;
    try {
        model.k = std::stoi(f[2].substr(2));
        model.stats.mean = parse3(f[3].substr(5));
        model.stats.scale = parse3(f[4].substr(6));
    } catch (const std::exception& e) {
        throw ParseError(1, e.what());
    }
    model.stats.fitted = true;
    const auto samples = read_training_set(in);
    if (samples.size() < static_cast<std::size_t>(model.k)) throw ParseError(0, "model has fewer samples than k");
    model.raw.resize(static_cast<Eigen::Index>(samples.size()), 3);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        model.raw.row(static_cast<Eigen::Index>(i)) = samples[i].raw.transpose();
        model.labels.push_back(samples[i].label);
    }
    model.points = (model.raw.rowwise() - model.stats.mean.transpose()).array().rowwise() /
                   model.stats.scale.transpose().array();
    return model;
}

}  // namespace csisleep
