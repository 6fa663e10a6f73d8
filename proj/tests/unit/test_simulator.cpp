#include <doctest.h>

#include <sstream>

#include "csisleep/simulator.hpp"

using namespace csisleep;

namespace {

Scenario small(double duration = 10.0) {
    Scenario s;
    s.duration = duration;
    s.config = FrameConfig::make(6, 2, 50.0);
    s.antenna_gains = {1.0, 0.8};
    return s;
}

std::pair<std::string, std::string> render(const Scenario& s) {
    std::ostringstream trace, truth;
    generate(s, trace, truth);
    return {trace.str(), truth.str()};
}

}  // namespace

TEST_CASE("same scenario and seed give identical output") {
    auto s = small();
    s.events.push_back({2.0, 1.0, MotionClass::LegBend, 8.0, 0.7});
    s.glitch_rate = 30.0;
    CHECK(render(s) == render(s));
}

TEST_CASE("the seed changes noise, not the schedule") {
    auto s = small();
    s.events.push_back({2.0, 1.0, MotionClass::LegBend, 8.0, 0.7});
    auto t = s;
    t.seed = 77;
    const auto a = render(s), b = render(t);
    CHECK(a.first != b.first);
    CHECK(a.second == b.second);

    auto quiet = small();
    quiet.noise_sigma = 0.0;
    auto quiet2 = quiet;
    quiet2.seed = 77;
    CHECK(render(quiet) == render(quiet2));
}

TEST_CASE("an empty scenario has a header, rows and no truth") {
    const auto s = small(3.0);
    const auto [trace, truth] = render(s);
    std::istringstream in(trace);
    const auto parsed = parse_trace(in);
    CHECK(parsed.config.subcarriers == 6);
    CHECK(parsed.samples.size() == static_cast<std::size_t>(s.total_samples() * 2));
    CHECK(s.total_samples() == 150);
    std::istringstream tin(truth);
    CHECK(parse_ground_truth(tin).empty());
}

TEST_CASE("a scripted rollover becomes one truth row") {
    auto s = small(60.0);
    s.events.push_back({30.0, 2.0, MotionClass::Rollover, 12.0, 0.9});
    const auto [trace, truth] = render(s);
    CHECK(truth.find("30.0,32.0,Rollover\n") != std::string::npos);
}

TEST_CASE("periodic events give one row per pulse; silent events none") {
    auto s = small(60.0);
    ScriptedEvent p;
    p.start = 10.0;
    p.duration = 20.0;
    p.label = MotionClass::LegBend;
    p.envelope = Envelope::Periodic;
    p.period = 5.0;
    p.pulse = 1.0;
    s.events.push_back(p);
    ScriptedEvent silent;
    silent.start = 40.0;
    silent.duration = 0.5;
    silent.amplitude_scale = 0.0;
    silent.envelope = Envelope::Step;
    silent.step_offset = 5.0;
    s.events.push_back(silent);
    const auto rows = ground_truth(s);
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].start == doctest::Approx(10.0 + 5.0 * i));
        CHECK(rows[i].end == doctest::Approx(11.0 + 5.0 * i));
        CHECK(rows[i].label == "LegBend");
    }
}

TEST_CASE("motion raises variance on the moved subcarriers only inside the event") {
    auto s = small(20.0);
    s.config = FrameConfig::make(10, 1, 100.0);
    s.antenna_gains = {1.0};
    s.events.push_back({8.0, 2.0, MotionClass::ArmSwing, 10.0, 0.5});
    TraceGenerator gen(s);
    std::vector<CsiSample> all, batch;
    while (gen.next(batch)) all.push_back(batch[0]);
    const auto& moved = gen.motion_subcarriers(0);
    REQUIRE(moved.size() == 5);
    auto spread = [&](int m, int from, int to) {
        double mean = 0.0, ss = 0.0;
        for (int n = from; n < to; ++n) mean += all[n].amplitudes(m);
        mean /= (to - from);
        for (int n = from; n < to; ++n) ss += std::pow(all[n].amplitudes(m) - mean, 2);
        return std::sqrt(ss / (to - from));
    };
    for (int m : moved) {
        CHECK(spread(m, 800, 1000) > 3.0);
        CHECK(spread(m, 200, 400) < 1.5);
    }
    for (int m = 0; m < 10; ++m) {
        if (std::find(moved.begin(), moved.end(), m) == moved.end()) CHECK(spread(m, 800, 1000) < 1.5);
    }
}

TEST_CASE("glitches stay clear of scripted motions") {
    auto s = small(120.0);
    for (int i = 0; i < 10; ++i) s.events.push_back({5.0 + 11.0 * i, 1.5, MotionClass::HeadSwing, 8.0, 0.8});
    s.glitch_rate = 60.0;
    TraceGenerator gen(s);
    const auto spans = motion_spans(s);
    const auto clear = static_cast<std::int64_t>(0.5 * s.config.sample_rate);
    REQUIRE_FALSE(gen.interference().glitches.empty());
    for (const auto& g : gen.interference().glitches) {
        for (const auto& sp : spans) CHECK((g.sample < sp.first - clear || g.sample >= sp.last + clear));
    }
}

TEST_CASE("scenario validation") {
    auto s = small();
    s.events.push_back({2.0, 2.0, MotionClass::LegBend});
    s.events.push_back({3.0, 1.0, MotionClass::ArmSwing});
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.events[1].allow_overlap = true;
    CHECK_NOTHROW(s.validate());
    s.events.push_back({9.5, 1.0, MotionClass::ArmSwing});
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);

    auto g = small();
    g.antenna_gains = {1.0};
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
    auto c = small();
    c.events.push_back({1.0, 1.0, MotionClass::LegBend, 5.0, 0.0});
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("every preset builds and validates") {
    for (const auto& name : preset_names()) {
        CAPTURE(name);
        const auto s = preset_scenario(name, 3);
        CHECK_NOTHROW(s.validate());
        CHECK(s.name == name);
        CHECK(s.seed == 3);
        CHECK(ground_truth(s) == ground_truth(preset_scenario(name, 4)));
    }
    CHECK_THROWS_AS(preset_scenario("no-such-night"), std::invalid_argument);
}

TEST_CASE("scenario JSON round trip") {
    auto s = preset_scenario("nlos-neighbor", 9);
    const auto j = to_json(s);
    const auto back = scenario_from_json(j);
    CHECK(to_json(back) == j);
    TraceGenerator a(s), b(back);
    std::vector<CsiSample> x, y;
    for (int n = 0; n < 5000; ++n) {
        REQUIRE(a.next(x));
        REQUIRE(b.next(y));
        for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(x[i].amplitudes == y[i].amplitudes);
    }
}
