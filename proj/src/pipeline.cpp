#include "csisleep/pipeline.hpp"

#include <condition_variable>
#include <deque>
#include <exception>
#include <fstream>
#include <future>
#include <mutex>
#include <thread>
#include <stdexcept>

#include "csisleep/eval.hpp"
#include "csisleep/simulator.hpp"

namespace csisleep {

void PipelineParams::validate() const {
    if (!(window_seconds > 0.0)) throw std::invalid_argument("window_seconds must be > 0");
    gmm.validate();
    filter.validate();
    segment.validate();
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("k must be odd and positive");
    for (const auto& r : rules.rules) validate_rule(r);
    if (!(rules.refractory_seconds >= 0.0)) throw std::invalid_argument("refractory_seconds must be >= 0");
}

Json to_json(const PipelineParams& p) {
    Json j;
    j["window_seconds"] = p.window_seconds;
    j["gmm"] = Json{{"components", p.gmm.components},
                    {"learning_rate", p.gmm.learning_rate},
                    {"background_weight", p.gmm.background_weight},
                    {"deviation_factor", p.gmm.deviation_factor},
                    {"initial_variance", p.gmm.initial_variance},
                    {"variance_floor", p.gmm.variance_floor}};
    j["filter"] = Json{{"min_duration", p.filter.min_duration},
                       {"min_coverage", p.filter.min_coverage},
                       {"density_window", p.filter.density_window},
                       {"min_density", p.filter.min_density}};
    j["segment"] = Json{{"merge_gap", p.segment.merge_gap}};
    j["k"] = p.k;
    Json rules;
    rules["refractory_seconds"] = p.rules.refractory_seconds;
    rules["intensity_outlier"] = nullptr;
    rules["motion_burst"] = nullptr;
    rules["periodic_series"] = nullptr;
    for (const auto& r : p.rules.rules) {
        std::visit(
            [&](const auto& rule) {
                using T = std::decay_t<decltype(rule)>;
                if constexpr (std::is_same_v<T, IntensityOutlier>) {
                    rules["intensity_outlier"] = Json{{"z_threshold", rule.z_threshold}, {"min_history", rule.min_history}};
                } else if constexpr (std::is_same_v<T, MotionBurst>) {
                    rules["motion_burst"] = Json{{"count", rule.count}, {"window_seconds", rule.window_seconds}};
                } else {
                    rules["periodic_series"] = Json{{"min_repeats", rule.min_repeats},
                                                    {"period_tolerance", rule.period_tolerance},
                                                    {"min_total_seconds", rule.min_total_seconds}};
                }
            },
            r);
    }
    j["rules"] = rules;
    return j;
}

PipelineParams params_from_json(const Json& j, PipelineParams base) {
    auto p = std::move(base);
    p.window_seconds = j.value("window_seconds", p.window_seconds);
    if (j.contains("gmm")) {
        const auto& g = j["gmm"];
        p.gmm.components = g.value("components", p.gmm.components);
        p.gmm.learning_rate = g.value("learning_rate", p.gmm.learning_rate);
        p.gmm.background_weight = g.value("background_weight", p.gmm.background_weight);
        p.gmm.deviation_factor = g.value("deviation_factor", p.gmm.deviation_factor);
        p.gmm.initial_variance = g.value("initial_variance", p.gmm.initial_variance);
        p.gmm.variance_floor = g.value("variance_floor", p.gmm.variance_floor);
    }
    if (j.contains("filter")) {
        const auto& f = j["filter"];
        p.filter.min_duration = f.value("min_duration", p.filter.min_duration);
        p.filter.min_coverage = f.value("min_coverage", p.filter.min_coverage);
        p.filter.density_window = f.value("density_window", p.filter.density_window);
        p.filter.min_density = f.value("min_density", p.filter.min_density);
    }
    if (j.contains("segment")) p.segment.merge_gap = j["segment"].value("merge_gap", p.segment.merge_gap);
    p.k = j.value("k", p.k);
    if (j.contains("rules")) p.rules = parse_guardian_config(Json{{"rules", j["rules"]}}).rules;
    p.validate();
    return p;
}

PipelineParams load_params(const std::string& path, PipelineParams base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open params file '" + path + "'");
    return params_from_json(Json::parse(in), std::move(base));
}

Classifier knn_classifier(std::shared_ptr<const KnnModel> model) {
    if (!model || model->empty()) throw std::invalid_argument("k-NN model is empty");
    return [model](const MotionEvent& e) { return knn_classify(*model, e).label; };
}

// ---------------------------------------------------------------------------

MonitorPipeline::MonitorPipeline(const FrameConfig& config, const PipelineParams& params, Classifier classify,
                                 std::string session_id)
    : config_(config),
      params_(params),
      classify_(std::move(classify)),
      waiting_(config.antennas),
      gmm_(params.gmm, config.antennas, config.subcarriers),
      filter_(params.filter, config.subcarriers, config.stride()),
      segmenter_(config, params.segment),
      rules_(params.rules, session_id),
      log_(make_log(session_id, 0.0)) {
    config_.validate();
    params_.validate();
    if (!classify_) throw std::invalid_argument("pipeline needs a classifier");
    for (int a = 0; a < config_.antennas; ++a) framers_.emplace_back(config_, a);
}

void MonitorPipeline::set_model(BackgroundModel<double> model) {
    if (frames_ > 0) throw std::logic_error("set_model: pipeline already running");
    if (model.antennas() != config_.antennas || model.subcarriers() != config_.subcarriers) {
        throw std::invalid_argument("GMM snapshot does not match the trace geometry");
    }
    gmm_ = std::move(model);
}

std::size_t MonitorPipeline::gap_samples() const {
    std::size_t n = 0;
    for (const auto& f : framers_) n += f.gap_samples();
    return n;
}

std::size_t MonitorPipeline::pending_samples() const {
    std::size_t n = 0;
    for (const auto& f : framers_) n += f.pending();
    for (const auto& w : waiting_) n += w.size() * static_cast<std::size_t>(config_.samples_per_window);
    return n;
}

double MonitorPipeline::trace_time() const {
    return origin_.value_or(0.0) + static_cast<double>(frames_) * config_.window_seconds;
}

void MonitorPipeline::push(const CsiSample& sample) {
    if (finished_) throw std::logic_error("pipeline already finished");
    if (sample.antenna_id < 0 || sample.antenna_id >= config_.antennas) {
        throw std::invalid_argument("antenna_id " + std::to_string(sample.antenna_id) + " out of range");
    }
    if (sample.amplitudes.size() != config_.subcarriers) throw std::invalid_argument("sample has wrong subcarrier count");
    auto& framer = framers_[sample.antenna_id];
    framer.push(sample);
    while (auto f = framer.pop_ready()) waiting_[sample.antenna_id].push_back(std::move(*f));
    process_ready();
}

void MonitorPipeline::process_ready() {
    while (true) {
        for (const auto& w : waiting_) {
            if (w.empty()) return;
        }
        std::vector<Frame> bundle;
        for (auto& w : waiting_) {
            bundle.push_back(std::move(w.front()));
            w.pop_front();
        }
        process_bundle(std::move(bundle));
    }
}

void MonitorPipeline::process_bundle(std::vector<Frame> frames) {
    if (!origin_) {
        origin_ = frames.front().start_time;
        segmenter_ = EventSegmenter(config_, params_.segment, *origin_);
        log_.session_start = log_.session_end = *origin_;
    }
    Bundle b;
    b.first_column = frames_ * config_.samples_per_window;
    MaskGrid merged = MaskGrid::Zero(config_.subcarriers, config_.samples_per_window);
    // Mixtures of different antennas share no state.
    b.labels.resize(config_.antennas);
    static const bool cores = std::thread::hardware_concurrency() > 1;
    const bool parallel = params_.parallel_antennas && cores;
    std::vector<std::future<void>> jobs;
    for (int a = 1; a < config_.antennas && parallel; ++a) {
        jobs.push_back(std::async(std::launch::async, [&, a] { b.labels[a] = gmm_.classify_frame(a, frames[a].pixels); }));
    }
    for (int a = 0; a < config_.antennas; ++a) {
        if (a == 0 || !parallel) b.labels[a] = gmm_.classify_frame(a, frames[a].pixels);
    }
    for (auto& j : jobs) j.get();
    for (int a = 0; a < config_.antennas; ++a) {
        if (observer_.on_labels) observer_.on_labels(frames[a], b.labels[a]);
        merged = merged || b.labels[a];
    }
    b.frames = std::move(frames);
    history_.push_back(std::move(b));
    ++frames_;

    for (const auto& block : filter_.push(merged)) consume(block);
    while (!history_.empty() && history_.front().first_column + config_.samples_per_window <= filter_.columns_out()) {
        history_.pop_front();
    }
}

void MonitorPipeline::consume(const FilteredBlock& block) {
    if (observer_.on_filtered) observer_.on_filtered(block);
    const auto n = static_cast<std::int64_t>(config_.samples_per_window);
    Eigen::MatrixXd amps(config_.subcarriers, config_.antennas);
    MaskGrid votes(config_.subcarriers, config_.antennas);
    for (Eigen::Index j = 0; j < block.filtered.cols(); ++j) {
        const std::int64_t column = block.start_column + j;
        const auto& bundle = history_.at(static_cast<std::size_t>(column / n - history_.front().first_column / n));
        const auto local = static_cast<Eigen::Index>(column % n);
        for (int a = 0; a < config_.antennas; ++a) {
            amps.col(a) = bundle.frames[a].pixels.col(local);
            votes.col(a) = bundle.labels[a].col(local);
        }
        if (auto e = segmenter_.push_column(column, block.filtered.col(j), amps, votes)) emit(*e);
    }
}

void MonitorPipeline::emit(const MotionEvent& event) {
    const auto label = classify_(event);
    const double now = trace_time();
    update_log(log_, event, label);
    if (observer_.on_event) observer_.on_event(event, label, now);
    for (auto& alert : rules_.on_event(event, now)) {
        if (observer_.on_alert) observer_.on_alert(alert);
        log_.alerts.push_back(std::move(alert));
    }
}

const SleepLog& MonitorPipeline::finish(bool complete) {
    if (finished_) return log_;
    for (const auto& block : filter_.finish()) consume(block);
    if (auto e = segmenter_.flush()) emit(*e);
    history_.clear();
    close_log(log_, trace_time(), complete);
    finished_ = true;
    return log_;
}

SleepLog run_pipeline(const std::vector<CsiSample>& samples, const FrameConfig& config, const PipelineParams& params,
                      Classifier classify, const std::string& session_id, const PipelineObserver& observer) {
    MonitorPipeline p(config, params, std::move(classify), session_id);
    p.set_observer(observer);
    for (const auto& s : samples) p.push(s);
    return p.finish(true);
}

const SleepLog& run_scenario(const Scenario& scenario, MonitorPipeline& pipeline) {
    // Generation and detection overlap: a producer thread hands over one
    // frame of samples at a time through a small bounded queue.
    constexpr std::size_t kDepth = 4;
    std::mutex mutex;
    std::condition_variable cv;
    std::deque<std::vector<CsiSample>> queue;
    bool done = false, stop = false;
    std::exception_ptr failure;

    std::thread producer([&] {
        try {
            TraceGenerator gen(scenario);
            const auto chunk = static_cast<std::size_t>(scenario.config.samples_per_window) * scenario.config.antennas;
            std::vector<CsiSample> batch;
            bool more = true;
            while (more) {
                std::vector<CsiSample> block;
                block.reserve(chunk);
                while (block.size() < chunk && (more = gen.next(batch))) block.insert(block.end(), batch.begin(), batch.end());
                std::unique_lock lock(mutex);
                cv.wait(lock, [&] { return queue.size() < kDepth || stop; });
                if (stop) break;
                if (!block.empty()) queue.push_back(std::move(block));
                cv.notify_all();
            }
        } catch (...) {
            failure = std::current_exception();
        }
        std::lock_guard lock(mutex);
        done = true;
        cv.notify_all();
    });

    try {
        while (true) {
            std::vector<CsiSample> block;
            {
                std::unique_lock lock(mutex);
                cv.wait(lock, [&] { return !queue.empty() || done; });
                if (queue.empty()) break;
                block = std::move(queue.front());
                queue.pop_front();
                cv.notify_all();
            }
            for (const auto& s : block) pipeline.push(s);
        }
    } catch (...) {
        {
            std::lock_guard lock(mutex);
            stop = true;
        }
        cv.notify_all();
        producer.join();
        throw;
    }
    producer.join();
    if (failure) std::rethrow_exception(failure);
    return pipeline.finish(true);
}

// ---------------------------------------------------------------------------

std::vector<LabeledFeatures> canonical_training_set(std::uint64_t seed, const PipelineParams& params) {
    const auto scenario = preset_scenario("training-set", seed);
    auto cfg = scenario.config;
    cfg = FrameConfig::make(cfg.subcarriers, cfg.antennas, cfg.sample_rate, params.window_seconds);
    MonitorPipeline p(cfg, params, [](const MotionEvent&) { return MotionClass::HeadSwing; }, "training");
    const auto& log = run_scenario(scenario, p);
    const auto truth = ground_truth(scenario);
    const auto found = detections(log);
    std::vector<LabeledFeatures> out;
    for (const auto& m : match_events(found, truth)) {
        out.push_back({raw_features(log.events[m.detected].event), parse_motion_class(truth[m.truth].label)});
    }
    return out;
}

std::shared_ptr<const KnnModel> default_model() {
    static std::once_flag once;
    static std::shared_ptr<const KnnModel> model;
    std::call_once(once, [] {
        const auto samples = canonical_training_set(1);
        model = std::make_shared<const KnnModel>(fit_knn(samples, PipelineParams{}.k));
    });
    return model;
}

}  // namespace csisleep
