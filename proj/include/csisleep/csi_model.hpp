#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace csisleep {

// Raised for malformed trace / ground-truth input. `row()` is the 1-based
// line number in the source (the header is line 1), or 0 when not tied to a row.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t row, const std::string& what);
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

struct CsiSample {
    double timestamp = 0.0;
    int antenna_id = 0;
    Eigen::VectorXd amplitudes;  // dBm, one per subcarrier
};

struct FrameConfig {
    double window_seconds = 2.0;
    int samples_per_window = 660;
    int subcarriers = 30;
    int antennas = 3;
    double sample_rate = 330.0;

    double stride() const { return 1.0 / sample_rate; }

    // Throws std::invalid_argument when the invariants do not hold.
    void validate() const;

    static FrameConfig make(int subcarriers, int antennas, double sample_rate, double window_seconds = 2.0);
};

// M x N amplitude grid of one antenna over one window.
template <typename Scalar>
struct BasicFrame {
    using Grid = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    int antenna_id = 0;
    std::int64_t index = 0;  // k-th frame of this antenna
    double start_time = 0.0;
    Grid pixels;  // pixels(m, n): subcarrier m, n-th sample of the window

    Eigen::Index subcarriers() const { return pixels.rows(); }
    Eigen::Index samples() const { return pixels.cols(); }
};

using Frame = BasicFrame<double>;

// ---------------------------------------------------------------------------
// trace files

struct TraceHeader {
    int subcarriers = 0;
    int antennas = 0;
    double sample_rate = 0.0;

    FrameConfig frame_config(double window_seconds) const {
        return FrameConfig::make(subcarriers, antennas, sample_rate, window_seconds);
    }
};

struct Trace {
    FrameConfig config;
    std::vector<CsiSample> samples;
};

TraceHeader parse_header(const std::string& line);
std::string format_header(const TraceHeader& header);

// Parses one body row. `row` is only used for error messages.
CsiSample parse_row(const std::string& line, const TraceHeader& header, std::size_t row);
std::string format_row(const CsiSample& sample);

// Whole-trace parse. Validates arity, finiteness, antenna range and per-antenna
// timestamp monotonicity; every error names its row.
Trace parse_trace(std::istream& in, double window_seconds = 2.0);
Trace parse_trace_file(const std::string& path, double window_seconds = 2.0);

void write_trace(std::ostream& out, const TraceHeader& header, const std::vector<CsiSample>& samples);

// Incremental reader for streaming sources (file replay or socket lines).
class TraceReader {
public:
    // Feeds one line (without the trailing newline). Returns a sample for body
    // rows, std::nullopt for the header and blank lines.
    std::optional<CsiSample> feed(const std::string& line);

    bool has_header() const { return header_.has_value(); }
    const TraceHeader& header() const;
    std::size_t rows() const { return row_; }

private:
    std::optional<TraceHeader> header_;
    std::vector<double> last_time_;
    std::size_t row_ = 0;
};

// ---------------------------------------------------------------------------
// ground truth: start_s,end_s,class_label

struct TruthRow {
    double start = 0.0;
    double end = 0.0;
    std::string label;

    bool operator==(const TruthRow&) const = default;
};

std::vector<TruthRow> parse_ground_truth(std::istream& in);
std::vector<TruthRow> parse_ground_truth_file(const std::string& path);
// Millisecond precision with at least one decimal: 30 -> "30.0", 1.25 -> "1.25".
std::string format_seconds(double seconds);

void write_ground_truth(std::ostream& out, const std::vector<TruthRow>& rows);

// ---------------------------------------------------------------------------
// framing

struct FramingStats {
    std::size_t gap_samples = 0;      // forward-filled samples
    std::size_t dropped_samples = 0;  // trailing partial window, batch mode
    std::vector<std::string> warnings;
};

// Streaming partition of one antenna's samples into frames of N samples.
// A trailing partial window is withheld until it fills.
class Framer {
public:
    Framer(const FrameConfig& config, int antenna_id);

    // Appends the sample, forward-filling any rate gap from the previous
    // sample. Completed frames queue up until drained with pop_ready().
    void push(const CsiSample& sample);
    std::optional<Frame> pop_ready();

    std::size_t pending() const { return static_cast<std::size_t>(fill_); }
    std::size_t gap_samples() const { return gap_samples_; }
    std::int64_t frames_emitted() const { return next_index_; }

private:
    void append(const Eigen::VectorXd& amplitudes);

    FrameConfig config_;
    int antenna_id_;
    Eigen::MatrixXd current_;
    int fill_ = 0;
    std::int64_t next_index_ = 0;
    std::optional<double> first_time_;
    std::optional<double> last_time_;
    Eigen::VectorXd last_amplitudes_;
    std::size_t gap_samples_ = 0;
    std::deque<Frame> ready_;
};

// Batch framing: frames[a] holds the frames of antenna a in time order.
std::vector<std::vector<Frame>> build_frames(const std::vector<CsiSample>& samples, const FrameConfig& config,
                                             FramingStats* stats = nullptr);

}  // namespace csisleep
