#include "csisleep/csi_model.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string_view>

namespace csisleep {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = line.find(sep, pos);
        if (next == std::string_view::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

double to_double(std::string_view field, std::size_t row, const char* what) {
    field = trim(field);
    double value = 0.0;
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    if (!field.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || field.empty()) {
        throw ParseError(row, std::string("non-numeric ") + what + " '" + std::string(field) + "'");
    }
    if (!std::isfinite(value)) {
        throw ParseError(row, std::string("non-finite ") + what + " '" + std::string(field) + "'");
    }
    return value;
}

long to_int(std::string_view field, std::size_t row, const char* what) {
    field = trim(field);
    long value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
        throw ParseError(row, std::string("non-integer ") + what + " '" + std::string(field) + "'");
    }
    return value;
}

std::string shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace

std::string format_seconds(double seconds) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", seconds);
    std::string s(buf);
    while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
    return s;
}

ParseError::ParseError(std::size_t row, const std::string& what)
    : std::runtime_error(row ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}

void FrameConfig::validate() const {
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) throw std::invalid_argument("sample_rate must be > 0");
    if (subcarriers < 1) throw std::invalid_argument("subcarriers must be >= 1");
    if (antennas < 1) throw std::invalid_argument("antennas must be >= 1");
    if (!(window_seconds > 0.0)) throw std::invalid_argument("window_seconds must be > 0");
    if (samples_per_window < 1 || samples_per_window != std::lround(window_seconds * sample_rate)) {
        throw std::invalid_argument("samples_per_window must equal round(T * sample_rate) and be >= 1");
    }
}

FrameConfig FrameConfig::make(int subcarriers, int antennas, double sample_rate, double window_seconds) {
    FrameConfig c;
    c.subcarriers = subcarriers;
    c.antennas = antennas;
    c.sample_rate = sample_rate;
    c.window_seconds = window_seconds;
    c.samples_per_window = static_cast<int>(std::lround(window_seconds * sample_rate));
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

TraceHeader parse_header(const std::string& line) {
    const auto fields = split(trim(line), ',');
    if (fields.size() != 5 || trim(fields[0]) != "csi") {
        throw ParseError(1, "malformed header, expected 'csi,v1,M=<int>,A=<int>,rate=<float>'");
    }
    if (trim(fields[1]) != "v1") throw ParseError(1, "unsupported trace version '" + std::string(fields[1]) + "'");

    auto value_of = [&](std::string_view field, std::string_view key) {
        field = trim(field);
        if (field.substr(0, key.size()) != key) {
            throw ParseError(1, "malformed header field '" + std::string(field) + "', expected " + std::string(key));
        }
        return field.substr(key.size());
    };
    TraceHeader h;
    h.subcarriers = static_cast<int>(to_int(value_of(fields[2], "M="), 1, "M"));
    h.antennas = static_cast<int>(to_int(value_of(fields[3], "A="), 1, "A"));
    h.sample_rate = to_double(value_of(fields[4], "rate="), 1, "rate");
    if (h.subcarriers < 1 || h.antennas < 1 || !(h.sample_rate > 0.0)) {
        throw ParseError(1, "header requires M >= 1, A >= 1, rate > 0");
    }
    return h;
}

std::string format_header(const TraceHeader& header) {
    return "csi,v1,M=" + std::to_string(header.subcarriers) + ",A=" + std::to_string(header.antennas) +
           ",rate=" + shortest(header.sample_rate);
}

CsiSample parse_row(const std::string& line, const TraceHeader& header, std::size_t row) {
    const auto fields = split(line, ',');
    const auto expected = static_cast<std::size_t>(header.subcarriers) + 2;
    if (fields.size() != expected) {
        throw ParseError(row, "expected " + std::to_string(expected) + " fields, got " + std::to_string(fields.size()));
    }
    CsiSample s;
    s.timestamp = to_double(fields[0], row, "timestamp");
    const long antenna = to_int(fields[1], row, "antenna_id");
    if (antenna < 0 || antenna >= header.antennas) {
        throw ParseError(row, "antenna_id " + std::to_string(antenna) + " outside [0," +
                                  std::to_string(header.antennas) + ")");
    }
    s.antenna_id = static_cast<int>(antenna);
    s.amplitudes.resize(header.subcarriers);
    for (int m = 0; m < header.subcarriers; ++m) {
        s.amplitudes[m] = to_double(fields[m + 2], row, "amplitude");
    }
    return s;
}

std::string format_row(const CsiSample& sample) {
    std::string out;
    out.reserve(16 + 8 * static_cast<std::size_t>(sample.amplitudes.size()));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f,%d", sample.timestamp, sample.antenna_id);
    out += buf;
    for (Eigen::Index m = 0; m < sample.amplitudes.size(); ++m) {
        std::snprintf(buf, sizeof(buf), ",%.2f", sample.amplitudes[m]);
        out += buf;
    }
    return out;
}

std::optional<CsiSample> TraceReader::feed(const std::string& line) {
    ++row_;
    if (!header_) {
        header_ = parse_header(line);
        last_time_.assign(header_->antennas, -INFINITY);
        return std::nullopt;
    }
    if (trim(line).empty()) return std::nullopt;
    CsiSample s = parse_row(line, *header_, row_);
    auto& last = last_time_[s.antenna_id];
    if (s.timestamp < last) {
        throw ParseError(row_, "timestamp regression on antenna " + std::to_string(s.antenna_id));
    }
    last = s.timestamp;
    return s;
}

const TraceHeader& TraceReader::header() const {
    if (!header_) throw std::logic_error("trace header not read yet");
    return *header_;
}

Trace parse_trace(std::istream& in, double window_seconds) {
    TraceReader reader;
    Trace trace;
    std::string line;
    while (std::getline(in, line)) {
        if (auto s = reader.feed(line)) trace.samples.push_back(std::move(*s));
    }
    if (!reader.has_header()) throw ParseError(1, "empty trace, missing header");
    trace.config = reader.header().frame_config(window_seconds);
    return trace;
}

Trace parse_trace_file(const std::string& path, double window_seconds) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace '" + path + "'");
    return parse_trace(in, window_seconds);
}

void write_trace(std::ostream& out, const TraceHeader& header, const std::vector<CsiSample>& samples) {
    out << format_header(header) << '\n';
    for (const auto& s : samples) out << format_row(s) << '\n';
}

// ---------------------------------------------------------------------------

std::vector<TruthRow> parse_ground_truth(std::istream& in) {
    std::vector<TruthRow> rows;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto t = trim(line);
        if (t.empty()) continue;
        const auto fields = split(t, ',');
        if (row == 1 && trim(fields[0]) == "start_s") continue;
        if (fields.size() != 3) throw ParseError(row, "expected start_s,end_s,class_label");
        TruthRow r;
        r.start = to_double(fields[0], row, "start_s");
        r.end = to_double(fields[1], row, "end_s");
        r.label = std::string(trim(fields[2]));
        if (r.end < r.start) throw ParseError(row, "end_s before start_s");
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<TruthRow> parse_ground_truth_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open ground truth '" + path + "'");
    return parse_ground_truth(in);
}

void write_ground_truth(std::ostream& out, const std::vector<TruthRow>& rows) {
    out << "start_s,end_s,class_label\n";
    for (const auto& r : rows) out << format_seconds(r.start) << ',' << format_seconds(r.end) << ',' << r.label << '\n';
}

// ---------------------------------------------------------------------------

Framer::Framer(const FrameConfig& config, int antenna_id)
    : config_(config), antenna_id_(antenna_id), current_(config.subcarriers, config.samples_per_window) {
    config_.validate();
}

void Framer::append(const Eigen::VectorXd& amplitudes) {
    current_.col(fill_) = amplitudes;
    if (++fill_ == config_.samples_per_window) {
        Frame f;
        f.antenna_id = antenna_id_;
        f.index = next_index_;
        f.start_time = *first_time_ + static_cast<double>(next_index_) * config_.samples_per_window / config_.sample_rate;
        f.pixels = current_;
        ready_.push_back(std::move(f));
        ++next_index_;
        fill_ = 0;
    }
}

void Framer::push(const CsiSample& sample) {
    if (sample.amplitudes.size() != config_.subcarriers) {
        throw std::invalid_argument("sample has " + std::to_string(sample.amplitudes.size()) +
                                    " amplitudes, expected " + std::to_string(config_.subcarriers));
    }
    if (!first_time_) {
        first_time_ = sample.timestamp;
    } else {
        // a gap is more than 1.5 strides since the previous sample
        const double elapsed = (sample.timestamp - *last_time_) * config_.sample_rate;
        if (elapsed > 1.5) {
            const auto missing = static_cast<std::size_t>(std::lround(elapsed)) - 1;
            for (std::size_t i = 0; i < missing; ++i) append(last_amplitudes_);
            gap_samples_ += missing;
        }
    }
    last_time_ = sample.timestamp;
    last_amplitudes_ = sample.amplitudes;
    append(sample.amplitudes);
}

std::optional<Frame> Framer::pop_ready() {
    if (ready_.empty()) return std::nullopt;
    Frame f = std::move(ready_.front());
    ready_.pop_front();
    return f;
}

std::vector<std::vector<Frame>> build_frames(const std::vector<CsiSample>& samples, const FrameConfig& config,
                                             FramingStats* stats) {
    config.validate();
    std::vector<Framer> framers;
    framers.reserve(config.antennas);
    for (int a = 0; a < config.antennas; ++a) framers.emplace_back(config, a);

    std::vector<std::vector<Frame>> frames(config.antennas);
    for (const auto& s : samples) {
        if (s.antenna_id < 0 || s.antenna_id >= config.antennas) {
            throw std::invalid_argument("antenna_id out of range in build_frames");
        }
        auto& framer = framers[s.antenna_id];
        framer.push(s);
        while (auto f = framer.pop_ready()) frames[s.antenna_id].push_back(std::move(*f));
    }

    FramingStats local;
    for (int a = 0; a < config.antennas; ++a) {
        local.gap_samples += framers[a].gap_samples();
        if (const auto left = framers[a].pending(); left > 0) {
            local.dropped_samples += left;
            local.warnings.push_back("antenna " + std::to_string(a) + ": dropped " + std::to_string(left) +
                                     " samples of a trailing partial window");
        }
    }
    if (stats) *stats = std::move(local);
    return frames;
}

}  // namespace csisleep
