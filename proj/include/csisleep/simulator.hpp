#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "csisleep/csi_model.hpp"
#include "csisleep/motion_events.hpp"

namespace csisleep {

// Synthetic CSI. Amplitude = baseline + motion + interference + N(0, noise_sigma)
// in dBm. Class separability below is a property of this generator only.

enum class Envelope { Burst, Periodic, Step };

struct ScriptedEvent {
    double start = 0.0;
    double duration = 0.0;
    MotionClass label = MotionClass::HeadSwing;
    double amplitude_scale = 10.0;  // dBm, std of the motion term on a unit-gain antenna
    double coverage = 1.0;          // fraction of subcarriers moved
    Envelope envelope = Envelope::Burst;
    double period = 0.0;            // Periodic: pulse spacing
    double pulse = 0.0;             // Periodic: pulse length
    double step_offset = 0.0;       // Step: max |baseline shift| after the event
    bool allow_overlap = false;

    double end() const { return start + duration; }
};

struct NlosInterference {
    double amplitude_scale = 8.0;
    double coverage = 0.85;
    double burst_seconds = 0.12;  // one burst per period inside an episode
    double period = 1.0;
    double episode_seconds = 20.0;
    int episodes = 0;             // placed in the quiet gaps between events
};

struct Scenario {
    std::string name = "custom";
    double duration = 60.0;
    FrameConfig config;
    std::uint64_t seed = 1;           // noise and motion waveforms
    std::uint64_t schedule_seed = 1;  // baseline, subcarrier subsets, glitch and NLOS placement
    double baseline_low = -65.0;
    double baseline_high = -35.0;
    double noise_sigma = 1.0;
    std::vector<double> antenna_gains{1.0, 0.85, 0.7};
    std::vector<ScriptedEvent> events;
    double glitch_rate = 0.0;  // per minute
    double glitch_scale = 15.0;
    std::optional<NlosInterference> nlos;

    // Throws std::invalid_argument (bad numbers, unflagged overlap, events
    // past the end).
    void validate() const;
    std::int64_t total_samples() const;
};

// Interference placed by the generator (not ground truth).
struct Glitch {
    std::int64_t sample = 0;
    int antenna = 0;
    std::vector<int> subcarriers;
    double offset = 0.0;
};

struct SampleSpan {
    std::int64_t first = 0;
    std::int64_t last = 0;  // exclusive
};

struct InterferencePlan {
    std::vector<Glitch> glitches;
    std::vector<SampleSpan> nlos_bursts;
    std::vector<int> nlos_subcarriers;  // moved during every NLOS burst
};

// One ground-truth row per burst/step event and per pulse of a periodic one.
// Zero-amplitude events are silent baseline changes and are left out.
std::vector<TruthRow> ground_truth(const Scenario& scenario);

// Sample-index spans of the scripted motions (same rows as ground_truth).
std::vector<SampleSpan> motion_spans(const Scenario& scenario);

// Sample-by-sample generation; memory stays bounded for long scenarios.
class TraceGenerator {
public:
    explicit TraceGenerator(const Scenario& scenario);

    // Fills one sample per antenna for the next sample index; false at the end.
    bool next(std::vector<CsiSample>& out);

    std::int64_t position() const { return position_; }
    const InterferencePlan& interference() const { return plan_; }
    // Subcarriers moved by scripted event i (index into Scenario::events).
    const std::vector<int>& motion_subcarriers(std::size_t i) const { return subsets_.at(i); }
    TraceHeader header() const;

private:
    struct Active {
        std::int64_t first, last;
        std::size_t event;
    };

    Scenario scenario_;
    InterferencePlan plan_;
    Eigen::MatrixXd baseline_;  // M x A
    std::vector<std::vector<int>> subsets_;
    std::vector<Eigen::VectorXd> step_offsets_;
    std::vector<Active> spans_;  // motion spans in sample indices, sorted
    std::size_t next_span_ = 0;
    std::size_t next_glitch_ = 0;
    std::size_t next_burst_ = 0;
    std::vector<int> nlos_subset_;
    std::int64_t position_ = 0;
    std::int64_t total_;
    std::mt19937_64 noise_;
    double gaussian();
};

void generate(const Scenario& scenario, std::ostream& trace, std::ostream& truth);
// Writes <dir>/trace.csv, <dir>/truth.csv and <dir>/scenario.json.
void generate_to_directory(const Scenario& scenario, const std::string& dir);

// ---------------------------------------------------------------------------
// presets

// Per-class motion profile used by the presets.
struct ClassProfile {
    double duration_mean;
    double duration_jitter;
    double scale;
    double coverage;
};

ClassProfile class_profile(MotionClass c);
// A burst event of class `c` with jittered duration and scale drawn from `rng`.
ScriptedEvent draw_event(MotionClass c, double start, std::mt19937_64& rng);

std::vector<std::string> preset_names();
// Throws std::invalid_argument for unknown names. `seed` only changes noise.
Scenario preset_scenario(const std::string& name, std::uint64_t seed = 1);

nlohmann::ordered_json to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::ordered_json& j);
// Preset name or path to a JSON scenario file.
Scenario load_scenario(const std::string& name_or_path, std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace csisleep
