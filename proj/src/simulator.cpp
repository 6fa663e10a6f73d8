#include "csisleep/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <boost/random/normal_distribution.hpp>

namespace csisleep {

using Json = nlohmann::ordered_json;

namespace {

double round_ms(double t) { return std::round(t * 1000.0) / 1000.0; }

std::int64_t to_sample(double t, double rate) { return std::llround(t * rate); }

std::vector<int> draw_subset(int m, double coverage, std::mt19937_64& rng) {
    const int n = std::clamp(static_cast<int>(std::lround(coverage * m)), 1, m);
    std::vector<int> all(m);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(n);
    std::sort(all.begin(), all.end());
    return all;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Pulses of a periodic event as [start, end) in seconds.
std::vector<std::pair<double, double>> pulses(const ScriptedEvent& e) {
    std::vector<std::pair<double, double>> out;
    if (e.envelope != Envelope::Periodic) {
        out.emplace_back(e.start, e.end());
        return out;
    }
    for (int j = 0;; ++j) {
        const double s = round_ms(e.start + j * e.period);
        if (s >= e.end() - 1e-9) break;
        out.emplace_back(s, round_ms(std::min(s + e.pulse, e.end())));
    }
    return out;
}

std::string envelope_name(Envelope e) {
    switch (e) {
        case Envelope::Burst: return "burst";
        case Envelope::Periodic: return "periodic";
        case Envelope::Step: return "step";
    }
    return "burst";
}

Envelope parse_envelope(const std::string& s) {
    if (s == "burst") return Envelope::Burst;
    if (s == "periodic") return Envelope::Periodic;
    if (s == "step") return Envelope::Step;
    throw std::invalid_argument("unknown envelope '" + s + "'");
}

}  // namespace

void Scenario::validate() const {
    config.validate();
    if (!(duration > 0.0)) throw std::invalid_argument("scenario duration must be > 0");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
    if (!(baseline_low <= baseline_high)) throw std::invalid_argument("baseline range is empty");
    if (antenna_gains.size() != static_cast<std::size_t>(config.antennas)) {
        throw std::invalid_argument("antenna_gains needs one entry per antenna");
    }
    if (glitch_rate < 0.0) throw std::invalid_argument("glitch_rate must be >= 0");
    for (const auto& e : events) {
        if (!(e.duration > 0.0) || e.start < 0.0) throw std::invalid_argument("event needs start >= 0 and duration > 0");
        if (e.end() > duration + 1e-9) throw std::invalid_argument("event ends after the scenario");
        if (!(e.coverage > 0.0 && e.coverage <= 1.0)) throw std::invalid_argument("event coverage must be in (0,1]");
        if (e.amplitude_scale < 0.0) throw std::invalid_argument("amplitude_scale must be >= 0");
        if (e.envelope == Envelope::Periodic && !(e.period > 0.0 && e.pulse > 0.0 && e.pulse <= e.period)) {
            throw std::invalid_argument("periodic event needs 0 < pulse <= period");
        }
    }
    auto sorted = events;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i].start < sorted[i - 1].end() && !(sorted[i].allow_overlap || sorted[i - 1].allow_overlap)) {
            throw std::invalid_argument("events at " + format_seconds(sorted[i - 1].start) + " and " +
                                        format_seconds(sorted[i].start) + " overlap");
        }
    }
    if (nlos) {
        if (!(nlos->burst_seconds > 0.0 && nlos->burst_seconds <= nlos->period)) {
            throw std::invalid_argument("nlos burst must fit in its period");
        }
        if (!(nlos->coverage > 0.0 && nlos->coverage <= 1.0)) throw std::invalid_argument("nlos coverage must be in (0,1]");
    }
}

std::int64_t Scenario::total_samples() const { return to_sample(duration, config.sample_rate); }

std::vector<TruthRow> ground_truth(const Scenario& scenario) {
    std::vector<TruthRow> rows;
    for (const auto& e : scenario.events) {
        if (e.amplitude_scale <= 0.0) continue;
        for (const auto& [s, t] : pulses(e)) rows.push_back({s, t, std::string(to_string(e.label))});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    return rows;
}

std::vector<SampleSpan> motion_spans(const Scenario& scenario) {
    std::vector<SampleSpan> out;
    for (const auto& r : ground_truth(scenario)) {
        out.push_back({to_sample(r.start, scenario.config.sample_rate), to_sample(r.end, scenario.config.sample_rate)});
    }
    return out;
}

// ---------------------------------------------------------------------------

TraceGenerator::TraceGenerator(const Scenario& scenario)
    : scenario_(scenario), total_(scenario.total_samples()), noise_(scenario.seed) {
    scenario_.validate();
    const auto& cfg = scenario_.config;
    const double rate = cfg.sample_rate;
    std::mt19937_64 schedule(scenario_.schedule_seed);

    baseline_.resize(cfg.subcarriers, cfg.antennas);
    for (Eigen::Index a = 0; a < baseline_.cols(); ++a) {
        for (Eigen::Index m = 0; m < baseline_.rows(); ++m) {
            baseline_(m, a) = uniform(schedule, scenario_.baseline_low, scenario_.baseline_high);
        }
    }

    for (std::size_t i = 0; i < scenario_.events.size(); ++i) {
        const auto& e = scenario_.events[i];
        subsets_.push_back(draw_subset(cfg.subcarriers, e.coverage, schedule));
        Eigen::VectorXd offset = Eigen::VectorXd::Zero(cfg.subcarriers);
        if (e.envelope == Envelope::Step) {
            for (Eigen::Index m = 0; m < offset.size(); ++m) {
                const double mag = uniform(schedule, 0.5 * e.step_offset, e.step_offset);
                offset(m) = (schedule() & 1) ? mag : -mag;
            }
        }
        step_offsets_.push_back(std::move(offset));
        for (const auto& [s, t] : pulses(e)) spans_.push_back({to_sample(s, rate), to_sample(t, rate), i});
    }
    std::stable_sort(spans_.begin(), spans_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    // Glitches keep half a second clear of scripted motions so each one stays
    // an isolated spike.
    const auto count = static_cast<std::int64_t>(std::llround(scenario_.glitch_rate * scenario_.duration / 60.0));
    const auto clear = to_sample(0.5, rate);
    auto in_motion = [&](std::int64_t n) {
        return std::any_of(spans_.begin(), spans_.end(),
                           [&](const Active& s) { return n >= s.first - clear && n < s.last + clear; });
    };
    for (std::int64_t g = 0, tries = 0; g < count && tries < 100 * (count + 1); ++tries) {
        Glitch glitch;
        glitch.sample = std::uniform_int_distribution<std::int64_t>(1, std::max<std::int64_t>(1, total_ - 1))(schedule);
        if (in_motion(glitch.sample)) continue;
        glitch.antenna = std::uniform_int_distribution<int>(0, cfg.antennas - 1)(schedule);
        const int width = std::uniform_int_distribution<int>(1, std::min(3, cfg.subcarriers))(schedule);
        glitch.subcarriers = draw_subset(cfg.subcarriers, 1.0, schedule);
        glitch.subcarriers.resize(width);
        glitch.offset = (schedule() & 1) ? scenario_.glitch_scale : -scenario_.glitch_scale;
        plan_.glitches.push_back(std::move(glitch));
        ++g;
    }
    std::stable_sort(plan_.glitches.begin(), plan_.glitches.end(),
                     [](const Glitch& a, const Glitch& b) { return a.sample < b.sample; });
    // Two glitches on the same sample would merge into one wider spike.
    plan_.glitches.erase(std::unique(plan_.glitches.begin(), plan_.glitches.end(),
                                     [](const Glitch& a, const Glitch& b) { return a.sample == b.sample; }),
                         plan_.glitches.end());

    if (scenario_.nlos && scenario_.nlos->episodes > 0) {
        const auto& nl = *scenario_.nlos;
        nlos_subset_ = draw_subset(cfg.subcarriers, nl.coverage, schedule);
        plan_.nlos_subcarriers = nlos_subset_;
        // quiet gaps with a margin on both sides
        const double margin = 3.0;
        std::vector<std::pair<double, double>> gaps;
        double cursor = 10.0;
        auto truth = ground_truth(scenario_);
        for (const auto& r : truth) {
            if (r.start - margin - cursor >= nl.episode_seconds) gaps.emplace_back(cursor, r.start - margin);
            cursor = std::max(cursor, r.end + margin);
        }
        if (scenario_.duration - cursor >= nl.episode_seconds) gaps.emplace_back(cursor, scenario_.duration);
        std::shuffle(gaps.begin(), gaps.end(), schedule);
        if (gaps.size() > static_cast<std::size_t>(nl.episodes)) gaps.resize(nl.episodes);
        std::sort(gaps.begin(), gaps.end());
        for (const auto& [lo, hi] : gaps) {
            const double begin = lo + 0.5 * (hi - lo - nl.episode_seconds);
            for (double t = begin; t + nl.period <= begin + nl.episode_seconds + 1e-9; t += nl.period) {
                const double s = t + uniform(schedule, 0.0, nl.period - nl.burst_seconds);
                plan_.nlos_bursts.push_back({to_sample(s, rate), to_sample(s + nl.burst_seconds, rate)});
            }
        }
    }
}

double TraceGenerator::gaussian() {
    // ziggurat sampler; the standard library's polar method dominated long runs
    static thread_local boost::random::normal_distribution<double> normal;
    return normal(noise_);
}

TraceHeader TraceGenerator::header() const {
    return {scenario_.config.subcarriers, scenario_.config.antennas, scenario_.config.sample_rate};
}

bool TraceGenerator::next(std::vector<CsiSample>& out) {
    if (position_ >= total_) return false;
    const auto& cfg = scenario_.config;
    const std::int64_t n = position_;
    const double t = static_cast<double>(n) / cfg.sample_rate;

    while (next_span_ < spans_.size() && spans_[next_span_].first <= n) ++next_span_;
    // Steps take effect once their motion is over.
    for (std::size_t i = 0; i < scenario_.events.size(); ++i) {
        const auto& e = scenario_.events[i];
        if (e.envelope == Envelope::Step && to_sample(e.end(), cfg.sample_rate) == n) baseline_.colwise() += step_offsets_[i];
    }
    while (next_burst_ < plan_.nlos_bursts.size() && plan_.nlos_bursts[next_burst_].last <= n) ++next_burst_;
    const bool nlos = next_burst_ < plan_.nlos_bursts.size() && plan_.nlos_bursts[next_burst_].first <= n;
    while (next_glitch_ < plan_.glitches.size() && plan_.glitches[next_glitch_].sample < n) ++next_glitch_;

    out.resize(cfg.antennas);
    for (int a = 0; a < cfg.antennas; ++a) {
        auto& s = out[a];
        s.timestamp = t;
        s.antenna_id = a;
        s.amplitudes.resize(cfg.subcarriers);
        for (int m = 0; m < cfg.subcarriers; ++m) s.amplitudes(m) = baseline_(m, a) + scenario_.noise_sigma * gaussian();

        // spans_ is sorted by first; only a short tail can still be active
        for (std::size_t k = next_span_; k-- > 0;) {
            const auto& span = spans_[k];
            if (span.last <= n) {
                if (!scenario_.events[span.event].allow_overlap && n - span.last > 10 * cfg.samples_per_window) break;
                continue;
            }
            const auto& e = scenario_.events[span.event];
            const auto rot = (static_cast<std::size_t>(a) + static_cast<std::size_t>(e.label)) % scenario_.antenna_gains.size();
            const double g = scenario_.antenna_gains[rot] * e.amplitude_scale;
            for (int m : subsets_[span.event]) s.amplitudes(m) += g * gaussian();
        }
        if (nlos) {
            const double g = scenario_.antenna_gains[a] * scenario_.nlos->amplitude_scale;
            for (int m : nlos_subset_) s.amplitudes(m) += g * gaussian();
        }
        for (std::size_t k = next_glitch_; k < plan_.glitches.size() && plan_.glitches[k].sample == n; ++k) {
            if (plan_.glitches[k].antenna != a) continue;
            for (int m : plan_.glitches[k].subcarriers) s.amplitudes(m) += plan_.glitches[k].offset;
        }
        s.amplitudes = (s.amplitudes.array() * 100.0).round() / 100.0;
    }
    ++position_;
    return true;
}

void generate(const Scenario& scenario, std::ostream& trace, std::ostream& truth) {
    TraceGenerator gen(scenario);
    trace << format_header(gen.header()) << '\n';
    std::vector<CsiSample> batch;
    while (gen.next(batch)) {
        for (const auto& s : batch) trace << format_row(s) << '\n';
    }
    write_ground_truth(truth, ground_truth(scenario));
}

void generate_to_directory(const Scenario& scenario, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream trace(fs::path(dir) / "trace.csv", std::ios::binary);
    std::ofstream truth(fs::path(dir) / "truth.csv", std::ios::binary);
    std::ofstream meta(fs::path(dir) / "scenario.json", std::ios::binary);
    if (!trace || !truth || !meta) throw std::runtime_error("cannot write to '" + dir + "'");
    generate(scenario, trace, truth);
    meta << to_json(scenario).dump(2) << '\n';
    if (!trace || !truth || !meta) throw std::runtime_error("write failed in '" + dir + "'");
}

// ---------------------------------------------------------------------------
// presets

ClassProfile class_profile(MotionClass c) {
    switch (c) {
        case MotionClass::HeadSwing: return {1.0, 0.15, 11.0, 0.80};
        case MotionClass::ArmUpDown: return {1.4, 0.2, 12.0, 0.85};
        case MotionClass::ArmSwing: return {1.6, 0.2, 13.0, 0.85};
        case MotionClass::LegBend: return {2.4, 0.25, 15.0, 0.90};
        case MotionClass::LegStretch: return {2.8, 0.25, 14.0, 0.90};
        case MotionClass::TorsoTwist: return {3.2, 0.3, 17.0, 1.0};
        case MotionClass::Rollover: return {3.6, 0.3, 18.0, 1.0};
        case MotionClass::FullStretch: return {5.0, 0.4, 22.0, 1.0};
    }
    throw std::invalid_argument("unknown motion class");
}

ScriptedEvent draw_event(MotionClass c, double start, std::mt19937_64& rng) {
    const auto p = class_profile(c);
    ScriptedEvent e;
    e.start = round_ms(start);
    e.duration = round_ms(p.duration_mean + uniform(rng, -p.duration_jitter, p.duration_jitter));
    e.label = c;
    e.amplitude_scale = std::round(p.scale * uniform(rng, 0.92, 1.08) * 100.0) / 100.0;
    e.coverage = p.coverage;
    return e;
}

namespace {

double whole_windows(double t, const FrameConfig& cfg) {
    return std::ceil(t / cfg.window_seconds - 1e-9) * cfg.window_seconds;
}

constexpr std::uint64_t kScheduleSeed = 20190707;

Scenario base(const std::string& name, std::uint64_t seed, std::uint64_t schedule_offset) {
    Scenario s;
    s.name = name;
    s.seed = seed;
    s.schedule_seed = kScheduleSeed + schedule_offset;
    return s;
}

// Events of the given classes in turn, separated by uniform gaps.
double schedule_sequence(Scenario& s, const std::vector<MotionClass>& order, double t, double gap_lo, double gap_hi,
                         std::mt19937_64& rng) {
    for (auto c : order) {
        auto e = draw_event(c, t, rng);
        t = e.end() + uniform(rng, gap_lo, gap_hi);
        s.events.push_back(e);
    }
    return t;
}

std::vector<MotionClass> representatives(int reps) {
    std::vector<MotionClass> order;
    for (int r = 0; r < reps; ++r) {
        for (auto p : kAllBodyParts) order.push_back(representative(p));
    }
    return order;
}

}  // namespace

std::vector<std::string> preset_names() {
    return {"calm-night", "paper-protocol", "glitch-storm", "nlos-neighbor", "seizure",
            "nightmare-sit-up", "posture-shift", "six-motions", "training-set"};
}

Scenario preset_scenario(const std::string& name, std::uint64_t seed) {
    if (name == "calm-night") {
        auto s = base(name, seed, 0);
        s.duration = 8 * 3600.0;
        return s;
    }
    if (name == "paper-protocol") {
        auto s = base(name, seed, 1);
        std::mt19937_64 rng(s.schedule_seed);
        const double t = schedule_sequence(s, representatives(10), 10.0, 8.0, 15.0, rng);
        s.duration = whole_windows(t, s.config);
        return s;
    }
    if (name == "glitch-storm") {
        auto s = base(name, seed, 2);
        std::mt19937_64 rng(s.schedule_seed);
        const double t = schedule_sequence(s, representatives(2), 20.0, 20.0, 70.0, rng);
        s.duration = std::max(600.0, whole_windows(t, s.config));
        s.glitch_rate = 15.0;
        return s;
    }
    if (name == "nlos-neighbor") {
        auto s = base(name, seed, 3);
        std::mt19937_64 rng(s.schedule_seed);
        std::vector<MotionClass> order;
        for (int r = 0; r < 3; ++r) {
            for (auto c : {MotionClass::LegBend, MotionClass::TorsoTwist, MotionClass::Rollover, MotionClass::FullStretch}) {
                order.push_back(c);
            }
        }
        const double t = schedule_sequence(s, order, 15.0, 30.0, 70.0, rng);
        s.duration = whole_windows(t, s.config);
        s.nlos = NlosInterference{};
        s.nlos->episodes = 8;
        return s;
    }
    if (name == "seizure") {
        auto s = base(name, seed, 4);
        std::mt19937_64 rng(s.schedule_seed);
        schedule_sequence(s, {MotionClass::HeadSwing, MotionClass::ArmSwing}, 20.0, 30.0, 40.0, rng);
        ScriptedEvent fit;
        fit.start = 100.0;
        fit.duration = 160.0;
        fit.label = MotionClass::LegBend;
        fit.amplitude_scale = 14.0;
        fit.coverage = 0.9;
        fit.envelope = Envelope::Periodic;
        fit.period = 2.0;
        fit.pulse = 0.8;
        s.events.push_back(fit);
        s.duration = 300.0;
        return s;
    }
    if (name == "nightmare-sit-up") {
        auto s = base(name, seed, 5);
        std::mt19937_64 rng(s.schedule_seed);
        const std::vector<MotionClass> calm{MotionClass::HeadSwing, MotionClass::ArmSwing, MotionClass::ArmUpDown,
                                            MotionClass::LegBend};
        std::vector<MotionClass> order;
        for (int i = 0; i < 20; ++i) order.push_back(calm[std::uniform_int_distribution<std::size_t>(0, calm.size() - 1)(rng)]);
        double t = schedule_sequence(s, order, 20.0, 40.0, 70.0, rng);
        ScriptedEvent sit;
        sit.start = round_ms(t);
        sit.duration = 1.2;
        sit.label = MotionClass::FullStretch;
        sit.amplitude_scale = 40.0;
        sit.coverage = 1.0;
        s.events.push_back(sit);
        s.duration = whole_windows(sit.end() + 60.0, s.config);
        return s;
    }
    if (name == "posture-shift") {
        auto s = base(name, seed, 6);
        std::mt19937_64 rng(s.schedule_seed);
        // A silent settle: the baseline steps with no motion in between, so the
        // mixtures have to re-learn it from the new level alone.
        ScriptedEvent e;
        e.start = 120.0;
        e.duration = 0.5;
        e.label = MotionClass::Rollover;
        e.amplitude_scale = 0.0;
        e.envelope = Envelope::Step;
        e.step_offset = 8.0;
        s.events.push_back(e);
        s.duration = 300.0;
        return s;
    }
    if (name == "six-motions") {
        auto s = base(name, seed, 7);
        std::mt19937_64 rng(s.schedule_seed);
        const double t = schedule_sequence(s, representatives(1), 10.0, 8.0, 12.0, rng);
        s.duration = whole_windows(t, s.config);
        return s;
    }
    if (name == "training-set") {
        auto s = base(name, seed, 8);
        std::mt19937_64 rng(s.schedule_seed);
        auto order = representatives(50);
        std::shuffle(order.begin(), order.end(), rng);
        const double t = schedule_sequence(s, order, 10.0, 6.0, 9.0, rng);
        s.duration = whole_windows(t, s.config);
        return s;
    }
    throw std::invalid_argument("unknown scenario preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// JSON

Json to_json(const Scenario& s) {
    Json j;
    j["name"] = s.name;
    j["duration"] = s.duration;
    j["subcarriers"] = s.config.subcarriers;
    j["antennas"] = s.config.antennas;
    j["sample_rate"] = s.config.sample_rate;
    j["window_seconds"] = s.config.window_seconds;
    j["seed"] = s.seed;
    j["schedule_seed"] = s.schedule_seed;
    j["baseline"] = Json{{"low", s.baseline_low}, {"high", s.baseline_high}, {"noise_sigma", s.noise_sigma}};
    j["antenna_gains"] = s.antenna_gains;
    Json events = Json::array();
    for (const auto& e : s.events) {
        Json ej;
        ej["start"] = e.start;
        ej["duration"] = e.duration;
        ej["class"] = std::string(to_string(e.label));
        ej["amplitude_scale"] = e.amplitude_scale;
        ej["coverage"] = e.coverage;
        ej["envelope"] = envelope_name(e.envelope);
        if (e.envelope == Envelope::Periodic) {
            ej["period"] = e.period;
            ej["pulse"] = e.pulse;
        }
        if (e.envelope == Envelope::Step) ej["step_offset"] = e.step_offset;
        if (e.allow_overlap) ej["allow_overlap"] = true;
        events.push_back(std::move(ej));
    }
    j["events"] = std::move(events);
    j["glitch_rate"] = s.glitch_rate;
    j["glitch_scale"] = s.glitch_scale;
    if (s.nlos) {
        const auto& n = *s.nlos;
        j["nlos"] = Json{{"amplitude_scale", n.amplitude_scale}, {"coverage", n.coverage},
                         {"burst_seconds", n.burst_seconds}, {"period", n.period},
                         {"episode_seconds", n.episode_seconds}, {"episodes", n.episodes}};
    } else {
        j["nlos"] = nullptr;
    }
    return j;
}

Scenario scenario_from_json(const Json& j) {
    Scenario s;
    s.name = j.value("name", s.name);
    s.duration = j.at("duration").get<double>();
    s.config = FrameConfig::make(j.value("subcarriers", 30), j.value("antennas", 3), j.value("sample_rate", 330.0),
                                 j.value("window_seconds", 2.0));
    s.seed = j.value("seed", s.seed);
    s.schedule_seed = j.value("schedule_seed", s.schedule_seed);
    if (j.contains("baseline")) {
        const auto& b = j["baseline"];
        s.baseline_low = b.value("low", s.baseline_low);
        s.baseline_high = b.value("high", s.baseline_high);
        s.noise_sigma = b.value("noise_sigma", s.noise_sigma);
    }
    if (j.contains("antenna_gains")) {
        s.antenna_gains = j["antenna_gains"].get<std::vector<double>>();
    } else {
        s.antenna_gains.assign(s.config.antennas, 1.0);
        const std::vector<double> defaults{1.0, 0.85, 0.7};
        for (int a = 0; a < s.config.antennas; ++a) s.antenna_gains[a] = defaults[a % defaults.size()];
    }
    for (const auto& ej : j.value("events", Json::array())) {
        ScriptedEvent e;
        e.start = ej.at("start").get<double>();
        e.duration = ej.at("duration").get<double>();
        e.label = parse_motion_class(ej.at("class").get<std::string>());
        const auto profile = class_profile(e.label);
        e.amplitude_scale = ej.value("amplitude_scale", profile.scale);
        e.coverage = ej.value("coverage", profile.coverage);
        e.envelope = parse_envelope(ej.value("envelope", std::string("burst")));
        e.period = ej.value("period", 0.0);
        e.pulse = ej.value("pulse", 0.0);
        e.step_offset = ej.value("step_offset", 0.0);
        e.allow_overlap = ej.value("allow_overlap", false);
        s.events.push_back(e);
    }
    s.glitch_rate = j.value("glitch_rate", 0.0);
    s.glitch_scale = j.value("glitch_scale", s.glitch_scale);
    if (j.contains("nlos") && j["nlos"].is_object()) {
        const auto& n = j["nlos"];
        NlosInterference nl;
        nl.amplitude_scale = n.value("amplitude_scale", nl.amplitude_scale);
        nl.coverage = n.value("coverage", nl.coverage);
        nl.burst_seconds = n.value("burst_seconds", nl.burst_seconds);
        nl.period = n.value("period", nl.period);
        nl.episode_seconds = n.value("episode_seconds", nl.episode_seconds);
        nl.episodes = n.value("episodes", nl.episodes);
        s.nlos = nl;
    }
    s.validate();
    return s;
}

Scenario load_scenario(const std::string& name_or_path, std::optional<std::uint64_t> seed) {
    const auto names = preset_names();
    Scenario s;
    if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
        s = preset_scenario(name_or_path, seed.value_or(1));
    } else {
        std::ifstream in(name_or_path);
        if (!in) throw std::invalid_argument("'" + name_or_path + "' is neither a preset nor a readable file");
        s = scenario_from_json(Json::parse(in));
        if (seed) s.seed = *seed;
    }
    s.validate();
    return s;
}

}  // namespace csisleep
