#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csisleep/background_gmm.hpp"
#include "csisleep/csi_model.hpp"
#include "csisleep/foreground_filter.hpp"
#include "csisleep/guardian.hpp"
#include "csisleep/motion_events.hpp"

namespace csisleep {

// Every tunable of the detection chain.
struct PipelineParams {
    double window_seconds = 2.0;
    GmmParams gmm;
    FilterParams filter;
    SegmentParams segment;
    int k = 5;
    RuleSet rules;
    bool parallel_antennas = true;  // classify each antenna's frame on its own thread

    void validate() const;
};

Json to_json(const PipelineParams& p);
// Missing keys keep the values of `base`.
PipelineParams params_from_json(const Json& j, PipelineParams base = {});
PipelineParams load_params(const std::string& path, PipelineParams base = {});

using Classifier = std::function<MotionClass(const MotionEvent&)>;
Classifier knn_classifier(std::shared_ptr<const KnnModel> model);

struct PipelineObserver {
    // Per-antenna GMM labels of each frame, before merging.
    std::function<void(const Frame&, const MaskGrid&)> on_labels;
    // Merged and filtered columns as they leave the filter stage.
    std::function<void(const FilteredBlock&)> on_filtered;
    std::function<void(const MotionEvent&, MotionClass, double now)> on_event;
    std::function<void(const Alert&)> on_alert;
};

// Online chain: framing -> GMM -> merge -> filters -> segmentation -> k-NN ->
// log and rules. Owns all model state; call from one thread. "now" is trace
// time at the end of the frame being processed.
class MonitorPipeline {
public:
    MonitorPipeline(const FrameConfig& config, const PipelineParams& params, Classifier classify,
                    std::string session_id);

    void set_observer(PipelineObserver observer) { observer_ = std::move(observer); }

    // Throws std::invalid_argument for a sample that does not fit the config.
    void push(const CsiSample& sample);
    // Flushes held-back columns and closes the log. Idempotent.
    const SleepLog& finish(bool complete = true);

    const SleepLog& log() const { return log_; }
    const FrameConfig& config() const { return config_; }
    const BackgroundModel<double>& model() const { return gmm_; }
    void set_model(BackgroundModel<double> model);

    std::int64_t frames_processed() const { return frames_; }
    std::size_t gap_samples() const;
    // Samples buffered in incomplete windows.
    std::size_t pending_samples() const;
    double trace_time() const;

private:
    struct Bundle {
        std::int64_t first_column;
        std::vector<Frame> frames;
        std::vector<MaskGrid> labels;
    };

    void process_ready();
    void process_bundle(std::vector<Frame> frames);
    void consume(const FilteredBlock& block);
    void emit(const MotionEvent& event);

    FrameConfig config_;
    PipelineParams params_;
    Classifier classify_;
    std::vector<Framer> framers_;
    std::vector<std::deque<Frame>> waiting_;
    BackgroundModel<double> gmm_;
    StreamingFilter filter_;
    EventSegmenter segmenter_;
    RuleEngine rules_;
    SleepLog log_;
    PipelineObserver observer_;
    std::deque<Bundle> history_;
    std::optional<double> origin_;
    std::int64_t frames_ = 0;
    bool finished_ = false;
};

// Replays `samples` through a fresh pipeline.
SleepLog run_pipeline(const std::vector<CsiSample>& samples, const FrameConfig& config, const PipelineParams& params,
                      Classifier classify, const std::string& session_id, const PipelineObserver& observer = {});

struct Scenario;
// Streams a simulated scenario through `pipeline` and finishes it.
const SleepLog& run_scenario(const Scenario& scenario, MonitorPipeline& pipeline);

// Labelled features for the k-NN: the `training-set` scenario run through the
// detection chain, each detection labelled by the scripted motion it matches.
std::vector<LabeledFeatures> canonical_training_set(std::uint64_t seed = 1, const PipelineParams& params = {});
// k-NN fitted on canonical_training_set(1), built once per process.
std::shared_ptr<const KnnModel> default_model();

}  // namespace csisleep
