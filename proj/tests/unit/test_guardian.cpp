#include <doctest.h>

#include <random>

#include "csisleep/guardian.hpp"
#include "support/mock_contact.hpp"

using namespace csisleep;
using namespace std::chrono_literals;

namespace {

MotionEvent event(double start, double duration, double intensity = 50.0) {
    MotionEvent e;
    e.start = start;
    e.duration = duration;
    e.intensity = intensity;
    e.coverage = 0.8;
    return e;
}

std::vector<std::string> fired(std::span<const MotionEvent> history, const AbnormalityRule& rule) {
    const AbnormalityRule rules[] = {rule};
    std::vector<std::string> out;
    for (const auto& a : detect_abnormality(history, rules)) out.push_back(a.rule);
    return out;
}

Alert sample_alert(int i) {
    Alert a;
    a.ts = 100.0 + i;
    a.rule = "motion_burst";
    a.severity = "warning";
    a.session = "s1";
    a.event = {90.0 + i, 1.5, 42.0};
    return a;
}

}  // namespace

TEST_CASE("log accumulates events, postures and counts") {
    auto log = make_log("night", 0.0);
    update_log(log, event(10.0, 2.0), MotionClass::ArmSwing);
    update_log(log, event(30.0, 1.0), MotionClass::ArmSwing);
    update_log(log, event(31.0, 4.0), MotionClass::Rollover);
    close_log(log, 60.0);
    REQUIRE(log.postures.size() == 3);
    CHECK(log.postures[0].start == 0.0);
    CHECK(log.postures[0].duration == 10.0);
    CHECK(log.postures[1].start == 12.0);
    CHECK(log.postures[1].duration == 18.0);
    CHECK(log.postures[2].start == 35.0);
    CHECK(log.postures[2].duration == 25.0);
    CHECK(log.class_counts[MotionClass::ArmSwing] == 2);
    CHECK(log.class_counts[MotionClass::Rollover] == 1);
    CHECK(log.session_end == 60.0);
    CHECK(log.closed);
    CHECK_THROWS_AS(update_log(log, event(70.0, 1.0), MotionClass::ArmSwing), std::logic_error);
}

TEST_CASE("events before the logged cursor are rejected") {
    auto log = make_log("night", 0.0);
    update_log(log, event(10.0, 2.0), MotionClass::HeadSwing);
    CHECK_THROWS_AS(update_log(log, event(11.0, 1.0), MotionClass::HeadSwing), std::invalid_argument);
}

TEST_CASE("postures and events tile the session") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> gap(0.0, 30.0), len(0.1, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        auto log = make_log("t", 100.0);
        double t = 100.0;
        for (int i = 0; i < 40; ++i) {
            t += gap(rng);
            const auto e = event(t, len(rng));
            update_log(log, e, kAllMotionClasses[static_cast<std::size_t>(i) % 8]);
            t = e.end();
        }
        close_log(log, t + gap(rng));
        double covered = 0.0;
        for (const auto& p : log.postures) covered += p.duration;
        for (const auto& e : log.events) covered += e.event.duration;
        CHECK(covered == doctest::Approx(log.session_end - log.session_start).epsilon(1e-9));
        int counted = 0;
        for (const auto& [c, n] : log.class_counts) counted += n;
        CHECK(counted == 40);
    }
}

TEST_CASE("intensity outlier fires far above the history") {
    std::vector<MotionEvent> h;
    for (int i = 0; i < 10; ++i) h.push_back(event(10.0 * i, 1.0, i % 2 ? 12.0 : 10.0));
    const double sd = std::sqrt(10.0 / 9.0);
    h.push_back(event(100.0, 1.0, 11.0 + 12.0 * sd));
    CHECK(fired(h, IntensityOutlier{}) == std::vector<std::string>{"intensity_outlier"});
    h.back().intensity = 11.0 + 3.0 * sd;
    CHECK(fired(h, IntensityOutlier{}).empty());
    h.erase(h.begin());
    h.back().intensity = 1000.0;
    CHECK(fired(h, IntensityOutlier{}).empty());  // only 9 prior events
}

TEST_CASE("motion burst counts events inside the window") {
    std::vector<MotionEvent> h;
    for (int i = 0; i < 6; ++i) h.push_back(event(1000.0 + 10.0 * i, 1.0));
    CHECK(fired(h, MotionBurst{}) == std::vector<std::string>{"motion_burst"});
    const std::vector<MotionEvent> few(h.begin(), h.begin() + 4);
    CHECK(fired(few, MotionBurst{}).empty());
    std::vector<MotionEvent> spread;
    for (int i = 0; i < 6; ++i) spread.push_back(event(200.0 * i, 1.0));
    CHECK(fired(spread, MotionBurst{}).empty());
}

TEST_CASE("periodic series needs enough repeats over enough time") {
    std::vector<MotionEvent> h;
    for (int i = 0; i <= 18; ++i) h.push_back(event(50.0 + 10.0 * i, 1.0));
    CHECK(fired(h, PeriodicSeries{}) == std::vector<std::string>{"periodic_series"});

    const std::vector<MotionEvent> short_run(h.begin(), h.begin() + 7);
    CHECK(fired(short_run, PeriodicSeries{}).empty());

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> gap(2.0, 40.0);
    std::vector<MotionEvent> irregular;
    double t = 0.0;
    for (int i = 0; i < 19; ++i) irregular.push_back(event(t += gap(rng), 1.0));
    CHECK(fired(irregular, PeriodicSeries{}).empty());
}

TEST_CASE("alerts carry the rule, severity and newest event") {
    std::vector<MotionEvent> h;
    for (int i = 0; i < 5; ++i) h.push_back(event(10.0 * i, 1.5, 30.0 + i));
    const AbnormalityRule rules[] = {MotionBurst{}};
    const auto alerts = detect_abnormality(h, rules);
    REQUIRE(alerts.size() == 1);
    CHECK(alerts[0].severity == "warning");
    CHECK(alerts[0].event.start == 40.0);
    CHECK(alerts[0].event.intensity == 34.0);
    CHECK(rule_severity(PeriodicSeries{}) == "critical");
    CHECK_THROWS_AS(validate_rule(MotionBurst{0, 10.0}), std::invalid_argument);
}

TEST_CASE("rule engine latches and respects the refractory period") {
    RuleSet set;
    set.rules = {MotionBurst{2, 10.0}};
    RuleEngine engine(set, "s");
    CHECK(engine.on_event(event(0.0, 1.0), 1.0).empty());
    const auto first = engine.on_event(event(5.0, 1.0), 6.0);
    REQUIRE(first.size() == 1);
    CHECK(first[0].ts == 6.0);
    CHECK(first[0].session == "s");
    CHECK(engine.on_event(event(8.0, 1.0), 9.0).empty());     // still true: latched
    CHECK(engine.on_event(event(30.0, 1.0), 31.0).empty());   // false: re-armed
    CHECK(engine.on_event(event(35.0, 1.0), 36.0).empty());   // refractory
    CHECK(engine.on_event(event(100.0, 1.0), 101.0).empty());
    CHECK(engine.on_event(event(105.0, 1.0), 106.0).size() == 1);
    CHECK_THROWS_AS(engine.on_event(event(50.0, 1.0), 107.0), std::invalid_argument);
}

TEST_CASE("alert wire format is one JSON line") {
    const auto line = alert_wire(sample_alert(1));
    CHECK(line.find('\n') == std::string::npos);
    const auto j = Json::parse(line);
    CHECK(j.at("rule") == "motion_burst");
    CHECK(j.at("ts") == 101.0);
    CHECK(j.at("event").at("duration") == 1.5);
}

TEST_CASE("dispatch reaches a listening contact") {
    mock::Contact contact;
    const auto report = dispatch_alert(sample_alert(0), {{"nurse", contact.endpoint()}});
    CHECK(report.delivered == 1);
    CHECK(report.failed == 0);
    REQUIRE(contact.wait_for(1, 2000ms));
    CHECK(contact.records()[0].line == alert_wire(sample_alert(0)));
}

TEST_CASE("an unreachable contact fails after bounded retries") {
    mock::Contact contact;
    DispatchOptions opts;
    opts.backoff = 10ms;
    const auto report =
        dispatch_alert(sample_alert(0), {{"nurse", contact.endpoint()}, {"gone", mock::closed_endpoint()}}, opts);
    CHECK(report.delivered == 1);
    CHECK(report.failed == 1);
    REQUIRE(report.contacts.size() == 2);
    CHECK(report.contacts[1].attempts == 3);
    CHECK_FALSE(report.contacts[1].error.empty());
    CHECK_THROWS_AS(dispatch_alert(sample_alert(0), {}), std::invalid_argument);
}

TEST_CASE("async dispatcher keeps order on one connection") {
    mock::Contact contact;
    {
        AsyncDispatcher d({{"nurse", contact.endpoint()}});
        for (int i = 0; i < 10; ++i) d.enqueue(sample_alert(i));
        REQUIRE(d.drain(5000ms));
        CHECK(d.reports().size() == 10);
    }
    REQUIRE(contact.wait_for(10, 2000ms));
    const auto records = contact.records();
    for (int i = 0; i < 10; ++i) {
        CHECK(records[i].connection == 0);
        CHECK(records[i].line == alert_wire(sample_alert(i)));
    }
}

TEST_CASE("config parsing") {
    const auto cfg = parse_guardian_config(Json::parse(R"({
        "contacts": [{"name": "a", "endpoint": "127.0.0.1:9000"}],
        "rules": {"refractory_seconds": 30, "motion_burst": {"count": 3}, "periodic_series": false}
    })"));
    REQUIRE(cfg.contacts.size() == 1);
    CHECK(cfg.contacts[0].endpoint == "127.0.0.1:9000");
    CHECK(cfg.rules.refractory_seconds == 30.0);
    REQUIRE(cfg.rules.rules.size() == 2);
    CHECK(std::get<MotionBurst>(cfg.rules.rules[1]).count == 3);
    CHECK(std::get<MotionBurst>(cfg.rules.rules[1]).window_seconds == 120.0);

    CHECK(parse_guardian_config(Json::object()).rules.rules.size() == 3);
    CHECK_THROWS(parse_guardian_config(Json::parse(R"({"contacts": [{"endpoint": "nohost"}]})")));
    CHECK_THROWS(parse_guardian_config(Json::parse(R"({"rules": {"motion_burst": {"count": 0}}})")));
}

TEST_CASE("sleep log JSON round trip") {
    auto log = make_log("night", 5.0);
    auto e = event(10.0, 2.0, 33.0);
    e.antenna_votes = {3, 4, 5};
    update_log(log, e, MotionClass::LegBend);
    update_log(log, event(20.0, 1.0), MotionClass::FullStretch);
    log.alerts.push_back(sample_alert(2));
    close_log(log, 40.0, false);

    const auto j = to_json(log);
    CHECK(j.at("class_counts").at("LegBend") == 1);
    CHECK(j.at("class_counts").at("HeadSwing") == 0);
    CHECK(j.at("events")[1].at("body_part") == "Multiple2");
    const auto back = sleep_log_from_json(j);
    CHECK(to_json(back) == j);
    CHECK_FALSE(back.complete);
    CHECK(back.events[0].event.antenna_votes == std::vector<std::int64_t>{3, 4, 5});
}
