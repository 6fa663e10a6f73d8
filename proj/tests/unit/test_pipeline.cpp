#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "csisleep/pipeline.hpp"
#include "csisleep/simulator.hpp"

using namespace csisleep;
namespace fs = std::filesystem;

namespace {

MotionClass always_arm(const MotionEvent&) { return MotionClass::ArmSwing; }

Scenario three_motions() {
    Scenario s;
    s.duration = 60.0;
    s.config = FrameConfig::make(30, 3, 330.0);
    s.events.push_back({20.0, 1.5, MotionClass::ArmSwing, 10.0, 0.9});
    s.events.push_back({35.0, 2.0, MotionClass::LegBend, 10.0, 0.9});
    s.events.push_back({50.0, 1.0, MotionClass::HeadSwing, 10.0, 0.9});
    return s;
}

std::vector<CsiSample> samples_of(const Scenario& s) {
    TraceGenerator gen(s);
    std::vector<CsiSample> all, batch;
    while (gen.next(batch)) all.insert(all.end(), batch.begin(), batch.end());
    return all;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("csisleep_pipeline_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int cli(const std::string& args) {
    const std::string cmd = std::string(CSISLEEP_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

}  // namespace

TEST_CASE("parameters round-trip through JSON and validate") {
    PipelineParams p;
    p.gmm.components = 4;
    p.filter.min_density = 0.3;
    p.k = 3;
    p.rules.refractory_seconds = 10.0;
    const auto back = params_from_json(to_json(p));
    CHECK(to_json(back) == to_json(p));

    const auto partial = params_from_json(Json::parse(R"({"gmm": {"learning_rate": 0.02}})"));
    CHECK(partial.gmm.learning_rate == 0.02);
    CHECK(partial.gmm.components == 3);

    PipelineParams bad;
    bad.k = 4;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("scripted motions are detected with matching times") {
    const auto s = three_motions();
    PipelineParams params;
    const auto log = run_pipeline(samples_of(s), s.config, params, always_arm, "t");
    REQUIRE(log.events.size() == 3);
    const auto truth = ground_truth(s);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(log.events[i].event.start == doctest::Approx(truth[i].start).epsilon(0.01));
        CHECK(log.events[i].event.end() == doctest::Approx(truth[i].end).epsilon(0.01));
    }
    CHECK(log.complete);
    CHECK(log.session_end == doctest::Approx(60.0));
}

TEST_CASE("parallel and serial antenna processing agree") {
    const auto s = three_motions();
    const auto samples = samples_of(s);
    PipelineParams serial;
    serial.parallel_antennas = false;
    PipelineParams parallel;
    const auto a = run_pipeline(samples, s.config, serial, always_arm, "t");
    const auto b = run_pipeline(samples, s.config, parallel, always_arm, "t");
    CHECK(to_json(a) == to_json(b));
}

TEST_CASE("finish is idempotent and reports pending samples") {
    const auto s = three_motions();
    const auto samples = samples_of(s);
    MonitorPipeline p(s.config, {}, always_arm, "t");
    for (std::size_t i = 0; i < samples.size() - 30; ++i) p.push(samples[i]);
    CHECK(p.pending_samples() > 0);
    CHECK(p.frames_processed() == 29);
    const auto first = to_json(p.finish(false));
    CHECK(to_json(p.finish(false)) == first);
    CHECK_FALSE(p.log().complete);
}

TEST_CASE("samples that do not fit the config are rejected") {
    MonitorPipeline p(FrameConfig::make(3, 1, 10.0), {}, always_arm, "t");
    CsiSample s;
    s.amplitudes = Eigen::VectorXd::Zero(4);
    CHECK_THROWS_AS(p.push(s), std::invalid_argument);
    s.amplitudes = Eigen::VectorXd::Zero(3);
    s.antenna_id = 1;
    CHECK_THROWS_AS(p.push(s), std::invalid_argument);
}

TEST_CASE("CLI exit codes") {
    const auto dir = scratch("cli");
    const auto d = dir.string();
    CHECK(cli("") == 1);
    CHECK(cli("detect") == 1);
    CHECK(cli("frobnicate") == 1);
    CHECK(cli("simulate --scenario no-such-preset --out " + d + "/x") != 0);

    REQUIRE(cli("simulate --scenario six-motions --seed 3 --out " + d + "/sim") == 0);
    REQUIRE(fs::exists(dir / "sim" / "trace.csv"));
    CHECK(cli("detect --trace " + d + "/sim/trace.csv --out " + d + "/log.json") == 0);
    CHECK(cli("eval --detected " + d + "/log.json --truth " + d + "/sim/truth.csv --out " + d + "/m.json") == 0);
    CHECK(fs::exists(dir / "m.json"));

    write_file(dir / "bad.csv", "csi,v1,M=2,A=1,rate=10\n0.0,0,-40,-41\n0.1,0,-40,NaN\n");
    CHECK(cli("detect --trace " + d + "/bad.csv --out " + d + "/bad.json") == 2);
    CHECK(cli("watch --source " + d + "/bad.csv") == 2);

    std::ostringstream body;
    body << "csi,v1,M=2,A=1,rate=10\n";
    for (int n = 0; n < 25; ++n) body << n / 10.0 << ",0,-40,-41\n";
    write_file(dir / "short.csv", body.str());
    CHECK(cli("watch --source " + d + "/short.csv --log " + d + "/short.json") == 3);
    std::ifstream in(dir / "short.json");
    CHECK(Json::parse(in).at("complete") == false);

    std::ostringstream whole;
    whole << "csi,v1,M=2,A=1,rate=10\n";
    for (int n = 0; n < 40; ++n) whole << n / 10.0 << ",0,-40,-41\n";
    write_file(dir / "whole.csv", whole.str());
    CHECK(cli("watch --source " + d + "/whole.csv") == 0);
    write_file(dir / "cut.csv", whole.str() + "4.0,0,-4");
    CHECK(cli("watch --source " + d + "/cut.csv") == 3);

    fs::remove_all(dir);
}
