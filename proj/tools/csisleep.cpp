// csisleep: simulate / detect / watch / serve / eval / render.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 partial session.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "csisleep/background_gmm.hpp"
#include "csisleep/csi_model.hpp"
#include "csisleep/eval.hpp"
#include "csisleep/guardian.hpp"
#include "csisleep/motion_events.hpp"
#include "csisleep/net.hpp"
#include "csisleep/pipeline.hpp"
#include "csisleep/simulator.hpp"

using namespace csisleep;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kDataError = 2;
constexpr int kPartial = 3;

// Raised for bad option values that CLI11 cannot check on its own.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Overrides {
    std::string params_file;
    std::optional<int> K, k, min_history, burst_count, repeats;
    std::optional<double> alpha, theta, tau, p, d, window, merge_gap, z, burst_window, tolerance, total, refractory;

    void attach(CLI::App* app) {
        app->add_option("--params", params_file, "JSON file with pipeline parameters")->check(CLI::ExistingFile);
        app->add_option("--window", window, "frame window T in seconds");
        app->add_option("--K", K, "mixture components per subcarrier");
        app->add_option("--alpha", alpha, "GMM learning rate");
        app->add_option("--theta", theta, "background weight threshold");
        app->add_option("--tau", tau, "minimum motion duration (s)");
        app->add_option("--p", p, "minimum subcarrier coverage");
        app->add_option("--d", d, "minimum motion density");
        app->add_option("--merge-gap", merge_gap, "event merge gap (s)");
        app->add_option("--k", k, "k-NN neighbours (odd)");
        app->add_option("--z", z, "intensity outlier z threshold");
        app->add_option("--min-history", min_history, "events needed before the outlier rule applies");
        app->add_option("--burst-count", burst_count, "motion burst event count");
        app->add_option("--burst-window", burst_window, "motion burst window (s)");
        app->add_option("--periodic-repeats", repeats, "periodic series gap count");
        app->add_option("--periodic-tolerance", tolerance, "periodic series relative tolerance");
        app->add_option("--periodic-total", total, "periodic series minimum span (s)");
        app->add_option("--refractory", refractory, "per-rule refractory period (s)");
    }

    PipelineParams resolve(const std::optional<RuleSet>& rules = std::nullopt) const {
        PipelineParams p0;
        if (rules) p0.rules = *rules;
        if (!params_file.empty()) p0 = load_params(params_file, p0);
        if (window) p0.window_seconds = *window;
        if (K) p0.gmm.components = *K;
        if (alpha) p0.gmm.learning_rate = *alpha;
        if (theta) p0.gmm.background_weight = *theta;
        if (tau) p0.filter.min_duration = *tau;
        if (p) p0.filter.min_coverage = *p;
        if (d) p0.filter.min_density = *d;
        if (merge_gap) p0.segment.merge_gap = *merge_gap;
        if (k) p0.k = *k;
        if (refractory) p0.rules.refractory_seconds = *refractory;
        for (auto& r : p0.rules.rules) {
            if (auto* io = std::get_if<IntensityOutlier>(&r)) {
                if (z) io->z_threshold = *z;
                if (min_history) io->min_history = *min_history;
            } else if (auto* mb = std::get_if<MotionBurst>(&r)) {
                if (burst_count) mb->count = *burst_count;
                if (burst_window) mb->window_seconds = *burst_window;
            } else if (auto* ps = std::get_if<PeriodicSeries>(&r)) {
                if (repeats) ps->min_repeats = *repeats;
                if (tolerance) ps->period_tolerance = *tolerance;
                if (total) ps->min_total_seconds = *total;
            }
        }
        try {
            p0.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        return p0;
    }
};

std::shared_ptr<const KnnModel> load_classifier_model(const std::string& path, int k) {
    if (path.empty()) {
        auto model = default_model();
        if (model->k == k) return model;
        std::vector<LabeledFeatures> samples;
        for (std::size_t i = 0; i < model->size(); ++i) samples.push_back({model->raw.row(i).transpose(), model->labels[i]});
        return std::make_shared<const KnnModel>(fit_knn(samples, k));
    }
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open model '" + path + "'");
    std::string first;
    std::getline(in, first);
    in.seekg(0);
    if (first.rfind("knn,", 0) == 0) return std::make_shared<const KnnModel>(load_model(in));
    bool single = false;
    auto model = std::make_shared<const KnnModel>(fit_knn(read_training_set(in), k, &single));
    if (single) std::cerr << "warning: training set has a single class\n";
    return model;
}

void write_json_file(const std::string& path, const Json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

void write_features(const std::string& path, const SleepLog& log) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    std::vector<LabeledFeatures> rows;
    for (const auto& e : log.events) rows.push_back({raw_features(e.event), e.label});
    write_training_set(out, rows);
}

// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& scenario_name, std::optional<std::uint64_t> seed, const std::string& out, bool list) {
    if (list) {
        for (const auto& n : preset_names()) std::cout << n << '\n';
        return kOk;
    }
    if (scenario_name.empty() || out.empty()) throw UsageError("simulate needs --scenario and --out");
    Scenario s;
    try {
        s = load_scenario(scenario_name, seed);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("scenario file: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(0, e.what());
    }
    generate_to_directory(s, out);
    std::cerr << "wrote " << s.total_samples() << " samples x " << s.config.antennas << " antennas, "
              << ground_truth(s).size() << " motions to " << out << '\n';
    return kOk;
}

struct DetectArgs {
    std::string trace, out, alerts, features, model, session = "session", save_model;
};

int cmd_detect(const DetectArgs& a, const Overrides& o) {
    const auto params = o.resolve();
    const auto model = load_classifier_model(a.model, params.k);
    if (!a.save_model.empty()) {
        std::ofstream m(a.save_model, std::ios::binary);
        save_model(m, *model);
    }
    const auto trace = parse_trace_file(a.trace, params.window_seconds);

    std::vector<Alert> alerts;
    PipelineObserver obs;
    obs.on_alert = [&](const Alert& al) { alerts.push_back(al); };
    MonitorPipeline p(trace.config, params, knn_classifier(model), a.session);
    p.set_observer(obs);
    for (const auto& s : trace.samples) p.push(s);
    if (p.pending_samples() > 0) {
        std::cerr << "warning: dropped " << p.pending_samples() << " samples of a trailing partial window\n";
    }
    if (p.gap_samples() > 0) std::cerr << "warning: forward-filled " << p.gap_samples() << " missing samples\n";
    const auto& log = p.finish(true);

    write_json_file(a.out, to_json(log));
    if (!a.alerts.empty()) {
        std::ofstream out(a.alerts, std::ios::binary);
        for (const auto& al : alerts) out << alert_wire(al) << '\n';
    }
    if (!a.features.empty()) write_features(a.features, log);
    std::cerr << log.events.size() << " motions, " << log.alerts.size() << " alerts\n";
    return kOk;
}

struct OnlineArgs {
    std::string source, listen, contacts, log, model, session = "live", gmm_in, gmm_out;
    bool realtime = false;
};

// Shared online loop: lines from `next_line` through the pipeline, alerts to
// stdout and the contacts. Returns the exit code.
template <typename NextLine>
int run_online(const OnlineArgs& a, const Overrides& o, NextLine&& next_line, const std::function<bool()>& ended_mid_line) {
    std::optional<GuardianConfig> guardian;
    if (!a.contacts.empty()) {
        try {
            guardian = load_guardian_config(a.contacts);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(0, std::string("contacts config: ") + e.what());
        }
    }
    const auto params = o.resolve(guardian ? std::optional<RuleSet>(guardian->rules) : std::nullopt);
    const auto model = load_classifier_model(a.model, params.k);
    std::unique_ptr<AsyncDispatcher> dispatcher;
    if (guardian && !guardian->contacts.empty()) dispatcher = std::make_unique<AsyncDispatcher>(guardian->contacts);

    TraceReader reader;
    std::unique_ptr<MonitorPipeline> pipeline;
    const auto wall_start = std::chrono::steady_clock::now();
    std::optional<double> first_ts;
    bool data_error = false;
    std::string line;
    while (next_line(line)) {
        std::optional<CsiSample> sample;
        try {
            sample = reader.feed(line);
        } catch (const ParseError& e) {
            std::cerr << "error: " << e.what() << '\n';
            data_error = true;
            break;
        }
        if (!pipeline && reader.has_header()) {
            const auto cfg = reader.header().frame_config(params.window_seconds);
            pipeline = std::make_unique<MonitorPipeline>(cfg, params, knn_classifier(model), a.session);
            if (!a.gmm_in.empty()) {
                std::ifstream in(a.gmm_in);
                if (!in) throw ParseError(0, "cannot open GMM snapshot '" + a.gmm_in + "'");
                pipeline->set_model(BackgroundModel<double>::load(in));
            }
            PipelineObserver obs;
            obs.on_alert = [&](const Alert& al) {
                std::cout << alert_wire(al) << '\n' << std::flush;
                if (dispatcher) dispatcher->enqueue(al);
            };
            pipeline->set_observer(obs);
        }
        if (!sample) continue;
        if (a.realtime) {
            if (!first_ts) first_ts = sample->timestamp;
            const auto due = wall_start + std::chrono::duration<double>(sample->timestamp - *first_ts);
            std::this_thread::sleep_until(due);
        }
        pipeline->push(*sample);
    }

    if (!pipeline) {
        std::cerr << "error: stream ended before a header\n";
        return data_error ? kDataError : kPartial;
    }
    const bool partial = data_error || ended_mid_line() || pipeline->pending_samples() > 0;
    const auto& log = pipeline->finish(!partial);
    if (!a.log.empty()) write_json_file(a.log, to_json(log));
    if (!a.gmm_out.empty()) {
        std::ofstream out(a.gmm_out, std::ios::binary);
        pipeline->model().save(out);
    }
    if (dispatcher) {
        dispatcher->drain(std::chrono::seconds(10));
        int delivered = 0, failed = 0;
        for (const auto& r : dispatcher->reports()) {
            delivered += r.delivered;
            failed += r.failed;
        }
        std::cerr << "dispatch: " << delivered << " delivered, " << failed << " failed\n";
    }
    std::cerr << log.events.size() << " motions, " << log.alerts.size() << " alerts"
              << (partial ? ", session partial" : "") << '\n';
    if (data_error) return kDataError;
    return partial ? kPartial : kOk;
}

int cmd_watch(const OnlineArgs& a, const Overrides& o) {
    if (std::filesystem::exists(a.source)) {
        std::ifstream in(a.source, std::ios::binary);
        if (!in) throw ParseError(0, "cannot open '" + a.source + "'");
        bool cut = false;
        auto next = [&](std::string& line) {
            if (!std::getline(in, line)) return false;
            if (in.eof()) {
                // last line without newline: the recording stopped mid-row
                cut = !line.empty();
                return false;
            }
            return true;
        };
        return run_online(a, o, next, [&] { return cut; });
    }
    net::Endpoint ep;
    try {
        ep = net::parse_endpoint(a.source);
    } catch (const std::invalid_argument&) {
        throw UsageError("--source '" + a.source + "' is neither a file nor host:port");
    }
    auto sock = net::connect_to(ep, std::chrono::seconds(5));
    if (!sock) throw std::runtime_error("cannot connect to " + ep.str());
    net::LineReader lines(*sock);
    auto next = [&](std::string& line) {
        auto l = lines.next();
        if (!l) return false;
        line = std::move(*l);
        return true;
    };
    return run_online(a, o, next, [&] { return lines.partial(); });
}

int cmd_serve(const OnlineArgs& a, const Overrides& o) {
    net::Endpoint ep;
    try {
        ep = net::parse_endpoint(a.listen);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    net::Listener listener(ep);
    std::cerr << "listening on " << ep.host << ':' << listener.port() << '\n';
    auto client = listener.accept();
    if (!client) throw std::runtime_error("accept failed");
    net::LineReader lines(*client);
    auto next = [&](std::string& line) {
        auto l = lines.next();
        if (!l) return false;
        line = std::move(*l);
        return true;
    };
    return run_online(a, o, next, [&] { return lines.partial(); });
}

std::vector<TruthRow> load_detected(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open '" + path + "'");
    const int c = in.peek();
    if (c == '{') {
        try {
            return detections(sleep_log_from_json(Json::parse(in)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(0, path + ": " + e.what());
        }
    }
    return parse_ground_truth(in);
}

int cmd_eval(const std::string& detected_path, const std::string& truth_path, const std::string& out, bool json) {
    auto detected = load_detected(detected_path);
    auto truth = parse_ground_truth_file(truth_path);
    auto by_start = [](const TruthRow& x, const TruthRow& y) { return x.start < y.start; };
    std::stable_sort(detected.begin(), detected.end(), by_start);
    std::stable_sort(truth.begin(), truth.end(), by_start);
    MetricsReport report;
    try {
        report = compute_metrics(match_events(detected, truth), detected, truth);
    } catch (const std::invalid_argument& e) {
        throw ParseError(0, e.what());
    }
    if (!out.empty()) write_json_file(out, to_json(report));
    if (json) {
        std::cout << to_json(report).dump(2) << '\n';
    } else {
        std::cout << format_table(report);
    }
    return kOk;
}

int cmd_render(const std::string& trace_path, const std::string& out, bool outline, const Overrides& o) {
    const auto params = o.resolve();
    FramingStats stats;
    const auto trace = parse_trace_file(trace_path, params.window_seconds);
    const auto frames = build_frames(trace.samples, trace.config, &stats);
    for (const auto& w : stats.warnings) std::cerr << "warning: " << w << '\n';
    std::vector<std::vector<MaskGrid>> masks;
    if (outline) {
        BackgroundModel<double> gmm(params.gmm, trace.config.antennas, trace.config.subcarriers);
        masks.resize(frames.size());
        for (std::size_t a = 0; a < frames.size(); ++a) {
            for (const auto& f : frames[a]) masks[a].push_back(gmm.classify_frame(static_cast<int>(a), f.pixels));
        }
    }
    const auto summary = render_heatmap(frames, out, outline ? &masks : nullptr);
    std::cerr << "wrote " << summary.images << " images, range [" << summary.lo << ", " << summary.hi << "] dBm\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sleep-motion monitoring over WiFi CSI amplitude streams"};
    app.require_subcommand(1);

    std::string scenario, sim_out;
    std::optional<std::uint64_t> seed;
    bool list = false;
    auto* sim = app.add_subcommand("simulate", "generate a synthetic trace with ground truth");
    sim->add_option("--scenario", scenario, "preset name or scenario JSON file");
    sim->add_option("--seed", seed, "noise seed");
    sim->add_option("--out", sim_out, "output directory");
    sim->add_flag("--list", list, "list presets");

    DetectArgs det;
    Overrides det_o;
    auto* detect = app.add_subcommand("detect", "batch detection over a trace file");
    detect->add_option("--trace", det.trace, "trace CSV")->required()->check(CLI::ExistingFile);
    detect->add_option("--out", det.out, "sleep log JSON")->required();
    detect->add_option("--alerts", det.alerts, "alert records, one JSON per line");
    detect->add_option("--features", det.features, "per-event feature CSV");
    detect->add_option("--model", det.model, "k-NN model or labelled training CSV");
    detect->add_option("--save-model", det.save_model, "write the k-NN model in use");
    detect->add_option("--session", det.session, "session id");
    det_o.attach(detect);

    OnlineArgs watch_a;
    Overrides watch_o;
    auto* watch = app.add_subcommand("watch", "online monitoring of a file replay or a TCP stream");
    watch->add_option("--source", watch_a.source, "trace file or host:port")->required();
    watch->add_option("--contacts", watch_a.contacts, "contacts/rules JSON")->check(CLI::ExistingFile);
    watch->add_option("--log", watch_a.log, "sleep log JSON written at session end");
    watch->add_option("--model", watch_a.model, "k-NN model or labelled training CSV");
    watch->add_option("--session", watch_a.session, "session id");
    watch->add_option("--gmm-in", watch_a.gmm_in, "GMM snapshot to resume from");
    watch->add_option("--gmm-out", watch_a.gmm_out, "GMM snapshot written at session end");
    watch->add_flag("--realtime", watch_a.realtime, "pace replay at the trace sample rate");
    watch_o.attach(watch);

    OnlineArgs serve_a;
    Overrides serve_o;
    auto* serve = app.add_subcommand("serve", "accept one live CSI CSV stream and monitor it");
    serve->add_option("--listen", serve_a.listen, "host:port (port 0 picks one)")->required();
    serve->add_option("--contacts", serve_a.contacts, "contacts/rules JSON")->check(CLI::ExistingFile);
    serve->add_option("--log", serve_a.log, "sleep log JSON written at session end");
    serve->add_option("--model", serve_a.model, "k-NN model or labelled training CSV");
    serve->add_option("--session", serve_a.session, "session id");
    serve->add_option("--gmm-in", serve_a.gmm_in, "GMM snapshot to resume from");
    serve->add_option("--gmm-out", serve_a.gmm_out, "GMM snapshot written at session end");
    serve_o.attach(serve);

    std::string detected, truth, eval_out;
    bool eval_json = false;
    auto* ev = app.add_subcommand("eval", "score detections against ground truth");
    ev->add_option("--detected", detected, "sleep log JSON or start_s,end_s,class_label CSV")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--truth", truth, "ground-truth CSV")->required()->check(CLI::ExistingFile);
    ev->add_option("--out", eval_out, "metrics report JSON");
    ev->add_flag("--json", eval_json, "print JSON instead of the table");

    std::string render_trace, render_out;
    bool outline = false;
    Overrides render_o;
    auto* render = app.add_subcommand("render", "heatmap images, one per frame and antenna");
    render->add_option("--trace", render_trace, "trace CSV")->required()->check(CLI::ExistingFile);
    render->add_option("--out", render_out, "output directory")->required();
    render->add_flag("--outline", outline, "outline GMM foreground");
    render_o.attach(render);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*sim) return cmd_simulate(scenario, seed, sim_out, list);
        if (*detect) return cmd_detect(det, det_o);
        if (*watch) return cmd_watch(watch_a, watch_o);
        if (*serve) return cmd_serve(serve_a, serve_o);
        if (*ev) return cmd_eval(detected, truth, eval_out, eval_json);
        if (*render) return cmd_render(render_trace, render_out, outline, render_o);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kUsage;
}
