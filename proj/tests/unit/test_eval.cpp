#include <doctest.h>

#include <filesystem>
#include <functional>
#include <fstream>
#include <random>
#include <sstream>

#include "csisleep/eval.hpp"

using namespace csisleep;

namespace {

// Kuhn's augmenting-path maximum matching over edges with overlap >= 0.5.
std::size_t maximum_matching(const std::vector<TruthRow>& det, const std::vector<TruthRow>& truth) {
    std::vector<int> owner(det.size(), -1);
    std::function<bool(std::size_t, std::vector<bool>&)> augment = [&](std::size_t t, std::vector<bool>& seen) {
        for (std::size_t d = 0; d < det.size(); ++d) {
            if (seen[d] || overlap_ratio(det[d], truth[t]) < 0.5) continue;
            seen[d] = true;
            if (owner[d] < 0 || augment(static_cast<std::size_t>(owner[d]), seen)) {
                owner[d] = static_cast<int>(t);
                return true;
            }
        }
        return false;
    };
    std::size_t n = 0;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        std::vector<bool> seen(det.size(), false);
        n += augment(t, seen) ? 1 : 0;
    }
    return n;
}

// Well separated truth events; detections are jittered copies with drops and
// a few spurious extras, so no detection can overlap two truths.
std::pair<std::vector<TruthRow>, std::vector<TruthRow>> jittered(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<TruthRow> truth, det;
    double t = 0.0;
    for (int i = 0; i < 40; ++i) {
        t += 10.0 + 20.0 * u(rng);
        const double len = 0.5 + 3.0 * u(rng);
        truth.push_back({t, t + len, "ArmSwing"});
        if (u(rng) < 0.8) {
            const double shift = (u(rng) - 0.5) * len;
            det.push_back({t + shift, t + shift + len * (0.6 + 0.8 * u(rng)), "LegBend"});
        }
        if (u(rng) < 0.2) det.push_back({t + len + 2.0, t + len + 2.5, "HeadSwing"});
        if (u(rng) < 0.1) det.push_back({t + 0.1 * len, t + 0.2 * len, "HeadSwing"});
        t += len;
    }
    std::sort(det.begin(), det.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    return {det, truth};
}

std::vector<TruthRow> reversed(const std::vector<TruthRow>& rows) {
    std::vector<TruthRow> out;
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) out.push_back({-it->end, -it->start, it->label});
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("overlap is measured against the shorter interval") {
    CHECK(overlap_ratio({0, 10, ""}, {2, 4, ""}) == 1.0);
    CHECK(overlap_ratio({0, 2, ""}, {1, 5, ""}) == 0.5);
    CHECK(overlap_ratio({0, 2, ""}, {2, 5, ""}) == 0.0);
}

TEST_CASE("ten truths, nine detections") {
    std::vector<TruthRow> truth, det;
    for (int i = 0; i < 10; ++i) {
        truth.push_back({10.0 * i, 10.0 * i + 2.0, "ArmSwing"});
        if (i < 9) det.push_back({10.0 * i, 10.0 * i + 2.5, i < 6 ? "ArmUpDown" : "HeadSwing"});
    }
    const auto matches = match_events(det, truth);
    const auto r = compute_metrics(matches, det, truth);
    CHECK(r.matched == 9);
    CHECK(r.missed == 1);
    CHECK(r.spurious == 0);
    CHECK(*r.dr == 1.0);
    CHECK(*r.mr == doctest::Approx(0.1));
    CHECK(*r.mae == doctest::Approx(0.5));
    CHECK(*r.rr == doctest::Approx(6.0 / 9.0));
    const int arm = static_cast<int>(BodyPart::Arm), head = static_cast<int>(BodyPart::Head);
    CHECK(r.confusion(arm, arm) == 6);
    CHECK(r.confusion(arm, head) == 3);
    CHECK(r.confusion(arm, 6) == 1);
    CHECK(r.confusion.sum() == 10);
}

TEST_CASE("metrics with empty denominators are undefined") {
    const std::vector<TruthRow> none;
    const std::vector<TruthRow> truth{{0, 1, "LegBend"}};
    const auto r = compute_metrics({}, none, truth);
    CHECK_FALSE(r.dr.has_value());
    CHECK_FALSE(r.rr.has_value());
    CHECK_FALSE(r.mae.has_value());
    CHECK(*r.mr == 1.0);
    const auto j = to_json(r);
    CHECK(j.at("dr").is_null());
    CHECK(format_table(r).find("DR      undefined") != std::string::npos);
    CHECK_FALSE(compute_metrics({}, none, none).mr.has_value());
}

TEST_CASE("greedy matching reaches the maximum matching on jittered events") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const auto [det, truth] = jittered(rng);
        const auto m = match_events(det, truth);
        CHECK(m.size() == maximum_matching(det, truth));
        std::vector<bool> used_d(det.size(), false), used_t(truth.size(), false);
        for (const auto& e : m) {
            CHECK_FALSE(used_d[e.detected]);
            CHECK_FALSE(used_t[e.truth]);
            used_d[e.detected] = used_t[e.truth] = true;
            CHECK(overlap_ratio(det[e.detected], truth[e.truth]) >= 0.5);
        }
    }
}

TEST_CASE("matching count is unchanged by reversing time") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const auto [det, truth] = jittered(rng);
        CHECK(match_events(det, truth).size() == match_events(reversed(det), reversed(truth)).size());
    }
}

TEST_CASE("detections come from the log") {
    auto log = make_log("s", 0.0);
    MotionEvent e;
    e.start = 3.0;
    e.duration = 1.5;
    update_log(log, e, MotionClass::TorsoTwist);
    const auto rows = detections(log);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0] == TruthRow{3.0, 4.5, "TorsoTwist"});
}

TEST_CASE("colormap endpoints and size") {
    const auto& c = colormap();
    CHECK(c[0].r == 0);
    CHECK(c[0].g == 0);
    CHECK(c[0].b == 255);
    CHECK(c[85].g == 255);
    CHECK(c[255].r == 255);
    CHECK(c[255].g == 0);
    CHECK(c[255].b == 0);
}

TEST_CASE("heatmaps are deterministic P6 images") {
    const auto dir = std::filesystem::temp_directory_path() / "csisleep_eval_test";
    std::filesystem::remove_all(dir);
    Frame f;
    f.pixels = Eigen::MatrixXd::Zero(4, 6);
    for (Eigen::Index n = 0; n < 6; ++n) f.pixels.col(n).setConstant(-60.0 + 4.0 * n);
    MaskGrid mask = MaskGrid::Constant(4, 6, false);
    mask.block(0, 0, 4, 3) = true;
    std::vector<std::vector<Frame>> frames{{f, f}, {f}};
    std::vector<std::vector<MaskGrid>> masks{{mask, mask}, {mask}};
    const auto summary = render_heatmap(frames, (dir / "a").string(), &masks);
    render_heatmap(frames, (dir / "b").string(), &masks);
    CHECK(summary.images == 3);
    CHECK(summary.lo == -60.0);
    CHECK(summary.hi == -40.0);
    const auto a = slurp((dir / "a" / "frame_00001_ant0.ppm").string());
    CHECK(a == slurp((dir / "b" / "frame_00001_ant0.ppm").string()));
    const std::string header = "P6\n6 4\n255\n";
    REQUIRE(a.size() == header.size() + 4 * 6 * 3);
    CHECK(a.substr(0, header.size()) == header);
    const auto px = [&](int m, int n, int k) { return static_cast<unsigned char>(a[header.size() + 3 * (6 * m + n) + k]); };
    CHECK(px(0, 0, 0) == 255);  // mask edge drawn white
    CHECK(px(0, 0, 2) == 255);
    CHECK(px(1, 5, 0) == 255);  // hottest column is red
    CHECK(px(1, 5, 1) == 0);
    CHECK(std::filesystem::exists(dir / "a" / "frame_00000_ant1.ppm"));
    std::filesystem::remove_all(dir);
}
