#include <doctest.h>

#include <sstream>

#include "csisleep/csi_model.hpp"
#include "csisleep/simulator.hpp"

using namespace csisleep;

namespace {

std::size_t error_row(const std::string& text) {
    std::istringstream in(text);
    try {
        parse_trace(in);
    } catch (const ParseError& e) {
        return e.row();
    }
    return 0;
}

CsiSample sample(double t, int antenna, std::initializer_list<double> values) {
    CsiSample s;
    s.timestamp = t;
    s.antenna_id = antenna;
    s.amplitudes.resize(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double v : values) s.amplitudes(i++) = v;
    return s;
}

}  // namespace

TEST_CASE("single row maps fields directly") {
    std::istringstream in("csi,v1,M=3,A=1,rate=10\n0.0,0,-40.0,-41.5,-39.8\n");
    const auto t = parse_trace(in);
    REQUIRE(t.samples.size() == 1);
    CHECK(t.config.subcarriers == 3);
    CHECK(t.config.antennas == 1);
    CHECK(t.config.sample_rate == 10.0);
    CHECK(t.config.samples_per_window == 20);
    CHECK(t.samples[0].amplitudes(0) == -40.0);
    CHECK(t.samples[0].amplitudes(1) == -41.5);
    CHECK(t.samples[0].amplitudes(2) == -39.8);
}

TEST_CASE("empty body gives an empty sequence and a valid config") {
    std::istringstream in("csi,v1,M=30,A=3,rate=330\n");
    const auto t = parse_trace(in);
    CHECK(t.samples.empty());
    CHECK_NOTHROW(t.config.validate());
    CHECK(t.config.samples_per_window == 660);
}

TEST_CASE("parse errors name the row") {
    const std::string h = "csi,v1,M=3,A=2,rate=10\n";
    CHECK(error_row(h + "0.0,0,-40,NaN,-39\n") == 2);
    CHECK(error_row(h + "0.0,0,-40,-41,-39\n0.1,0,-40,inf,-39\n") == 3);
    CHECK(error_row(h + "0.0,0,-40,-41\n") == 2);
    CHECK(error_row(h + "0.0,0,-40,abc,-39\n") == 2);
    CHECK(error_row(h + "0.0,2,-40,-41,-39\n") == 2);
    CHECK(error_row(h + "0.0,-1,-40,-41,-39\n") == 2);
    CHECK(error_row(h + "0.2,0,-40,-41,-39\n0.1,1,-40,-41,-39\n0.1,0,-40,-41,-39\n") == 4);
    CHECK(error_row("csi,v2,M=3,A=1,rate=10\n") == 1);
    CHECK(error_row("csi,v1,M=0,A=1,rate=10\n") == 1);
    CHECK(error_row("csi,v1,A=1,M=3,rate=10\n") == 1);
    CHECK(error_row("timestamp,antenna\n") == 1);
    CHECK(error_row("") == 1);
}

TEST_CASE("another antenna may lag behind without a regression error") {
    std::istringstream in("csi,v1,M=1,A=2,rate=10\n0.2,0,-40\n0.1,1,-40\n");
    CHECK(parse_trace(in).samples.size() == 2);
}

TEST_CASE("canonical traces round-trip byte for byte") {
    Scenario s;
    s.duration = 3.0;
    s.config = FrameConfig::make(5, 2, 20.0);
    s.antenna_gains = {1.0, 0.8};
    s.events.push_back({1.0, 0.5, MotionClass::ArmSwing, 10.0, 0.6});
    std::ostringstream trace, truth;
    generate(s, trace, truth);

    std::istringstream in(trace.str());
    const auto parsed = parse_trace(in);
    std::ostringstream out;
    write_trace(out, {5, 2, 20.0}, parsed.samples);
    CHECK(out.str() == trace.str());

    std::istringstream tin(truth.str());
    const auto rows = parse_ground_truth(tin);
    std::ostringstream tout;
    write_ground_truth(tout, rows);
    CHECK(tout.str() == truth.str());
}

TEST_CASE("seconds format keeps one decimal at least") {
    CHECK(format_seconds(30.0) == "30.0");
    CHECK(format_seconds(1.25) == "1.25");
    CHECK(format_seconds(0.1234) == "0.123");
}

TEST_CASE("one full window per antenna") {
    const auto cfg = FrameConfig::make(2, 2, 330.0);
    std::vector<CsiSample> samples;
    for (int n = 0; n < 660; ++n) {
        for (int a = 0; a < 2; ++a) samples.push_back(sample(n / 330.0, a, {double(n), double(-n)}));
    }
    const auto frames = build_frames(samples, cfg);
    REQUIRE(frames.size() == 2);
    CHECK(frames[0].size() == 1);
    CHECK(frames[1].size() == 1);
    CHECK(frames[0][0].pixels.cols() == 660);
    CHECK(frames[0][0].pixels(0, 659) == 659.0);
    CHECK(frames[1][0].pixels(1, 10) == -10.0);
}

TEST_CASE("batch mode drops a trailing partial window with a warning") {
    const auto cfg = FrameConfig::make(1, 1, 330.0);
    std::vector<CsiSample> samples;
    for (int n = 0; n < 700; ++n) samples.push_back(sample(n / 330.0, 0, {double(n)}));
    FramingStats stats;
    const auto frames = build_frames(samples, cfg, &stats);
    CHECK(frames[0].size() == 1);
    CHECK(stats.dropped_samples == 40);
    CHECK(stats.warnings.size() == 1);
}

TEST_CASE("ten simulated minutes tile into 300 frames per antenna") {
    Scenario s;
    s.duration = 600.0;
    s.config = FrameConfig::make(4, 3, 330.0);
    std::vector<CsiSample> samples;
    TraceGenerator gen(s);
    std::vector<CsiSample> batch;
    while (gen.next(batch)) samples.insert(samples.end(), batch.begin(), batch.end());
    const auto expected = static_cast<std::size_t>(s.total_samples() / s.config.samples_per_window);

    FramingStats stats;
    const auto frames = build_frames(samples, s.config, &stats);
    CHECK(expected == 300);
    for (const auto& per : frames) {
        REQUIRE(per.size() == expected);
        for (std::size_t k = 0; k < per.size(); ++k) CHECK(per[k].start_time == doctest::Approx(2.0 * k));
    }
    CHECK(stats.dropped_samples == 0);
    CHECK(stats.gap_samples == 0);
}

TEST_CASE("every sample lands in exactly one frame, in order") {
    const auto cfg = FrameConfig::make(3, 2, 10.0, 1.0);
    std::vector<CsiSample> samples;
    for (int n = 0; n < 53; ++n) {
        for (int a = 0; a < 2; ++a) samples.push_back(sample(n / 10.0, a, {n + 0.1 * a, n + 0.2, n + 0.3}));
    }
    const auto frames = build_frames(samples, cfg);
    for (int a = 0; a < 2; ++a) {
        REQUIRE(frames[a].size() == 5);
        for (std::size_t k = 0; k < 5; ++k) {
            CHECK(frames[a][k].index == static_cast<std::int64_t>(k));
            for (int n = 0; n < 10; ++n) {
                const auto& src = samples[2 * (10 * k + n) + a];
                CHECK((frames[a][k].pixels.col(n).array() == src.amplitudes.array()).all());
            }
        }
    }
}

TEST_CASE("rate gaps are forward-filled and counted") {
    const auto cfg = FrameConfig::make(1, 1, 10.0, 0.6);
    std::vector<CsiSample> samples{sample(0.0, 0, {1}), sample(0.1, 0, {2}), sample(0.4, 0, {5}), sample(0.5, 0, {6})};
    FramingStats stats;
    const auto frames = build_frames(samples, cfg, &stats);
    REQUIRE(frames[0].size() == 1);
    const Eigen::RowVectorXd expect = (Eigen::RowVectorXd(6) << 1, 2, 2, 2, 5, 6).finished();
    CHECK(frames[0][0].pixels.row(0) == expect);
    CHECK(stats.gap_samples == 2);
}

TEST_CASE("streaming framer matches batch framing") {
    const auto cfg = FrameConfig::make(2, 1, 10.0, 0.5);
    std::vector<CsiSample> samples;
    for (int n = 0; n < 23; ++n) samples.push_back(sample(n / 10.0, 0, {double(n), 2.0 * n}));
    const auto batch = build_frames(samples, cfg);
    Framer framer(cfg, 0);
    std::vector<Frame> streamed;
    for (const auto& s : samples) {
        framer.push(s);
        while (auto f = framer.pop_ready()) streamed.push_back(*f);
    }
    REQUIRE(streamed.size() == batch[0].size());
    for (std::size_t k = 0; k < streamed.size(); ++k) CHECK(streamed[k].pixels == batch[0][k].pixels);
    CHECK(framer.pending() == 3);
}

TEST_CASE("frame config invariants") {
    CHECK_THROWS_AS(FrameConfig::make(0, 1, 10.0), std::invalid_argument);
    CHECK_THROWS_AS(FrameConfig::make(1, 0, 10.0), std::invalid_argument);
    CHECK_THROWS_AS(FrameConfig::make(1, 1, 0.0), std::invalid_argument);
    FrameConfig c;
    c.samples_per_window = 661;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
