#include "csisleep/guardian.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace csisleep {

// ---------------------------------------------------------------------------
// sleep log

double SleepLog::cursor() const {
    return events.empty() ? session_start : std::max(session_start, events.back().event.end());
}

SleepLog make_log(std::string session_id, double session_start) {
    SleepLog log;
    log.session_id = std::move(session_id);
    log.session_start = session_start;
    log.session_end = session_start;
    return log;
}

SleepLog& update_log(SleepLog& log, const MotionEvent& event, MotionClass label) {
    if (log.closed) throw std::logic_error("update_log: log already closed");
    const double cursor = log.cursor();
    // events come off a column grid; allow for rounding of start + duration
    if (event.start < cursor - 1e-9) {
        throw std::invalid_argument("update_log: event at " + std::to_string(event.start) +
                                    " precedes last logged time " + std::to_string(cursor));
    }
    if (event.start > cursor) log.postures.push_back({cursor, event.start - cursor});
    log.events.push_back({event, label});
    ++log.class_counts[label];
    log.session_end = std::max(log.session_end, event.end());
    return log;
}

SleepLog& close_log(SleepLog& log, double end, bool complete) {
    const double cursor = log.cursor();
    if (end > cursor) log.postures.push_back({cursor, end - cursor});
    log.session_end = std::max(end, cursor);
    log.complete = complete;
    log.closed = true;
    return log;
}

// ---------------------------------------------------------------------------
// rules

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool holds(const IntensityOutlier& r, std::span<const MotionEvent> h) {
    if (h.size() < static_cast<std::size_t>(r.min_history) + 1) return false;
    const auto prior = h.first(h.size() - 1);
    const double n = static_cast<double>(prior.size());
    double mean = 0.0;
    for (const auto& e : prior) mean += e.intensity;
    mean /= n;
    double ss = 0.0;
    for (const auto& e : prior) ss += (e.intensity - mean) * (e.intensity - mean);
    const double sd = prior.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    const double x = h.back().intensity;
    const double z = sd > 0.0 ? (x - mean) / sd : (x > mean ? std::numeric_limits<double>::infinity() : 0.0);
    return z > r.z_threshold;
}

bool holds(const MotionBurst& r, std::span<const MotionEvent> h) {
    if (h.empty()) return false;
    const double from = h.back().start - r.window_seconds;
    const auto n = std::count_if(h.begin(), h.end(), [&](const MotionEvent& e) { return e.start >= from; });
    return n >= r.count;
}

bool holds(const PeriodicSeries& r, std::span<const MotionEvent> h) {
    if (h.size() < 2) return false;
    const std::size_t newest = h.size() - 1;
    double sum = h[newest].start - h[newest - 1].start;
    int gaps = 1;
    std::size_t first = newest - 1;
    while (first > 0) {
        const double gap = h[first].start - h[first - 1].start;
        const double ref = sum / gaps;
        if (!(ref > 0.0) || std::abs(gap - ref) > r.period_tolerance * ref) break;
        sum += gap;
        ++gaps;
        --first;
    }
    const double span = h[newest].end() - h[first].start;
    return gaps >= r.min_repeats && span >= r.min_total_seconds;
}

}  // namespace

std::string rule_id(const AbnormalityRule& rule) {
    return std::visit(overloaded{[](const IntensityOutlier&) { return std::string("intensity_outlier"); },
                                 [](const MotionBurst&) { return std::string("motion_burst"); },
                                 [](const PeriodicSeries&) { return std::string("periodic_series"); }},
                      rule);
}

std::string rule_severity(const AbnormalityRule& rule) {
    return std::holds_alternative<MotionBurst>(rule) ? "warning" : "critical";
}

void validate_rule(const AbnormalityRule& rule) {
    std::visit(overloaded{[](const IntensityOutlier& r) {
                              if (!(r.z_threshold > 0.0) || r.min_history < 2) {
                                  throw std::invalid_argument("intensity_outlier: z_threshold > 0, min_history >= 2");
                              }
                          },
                          [](const MotionBurst& r) {
                              if (r.count < 1 || !(r.window_seconds > 0.0)) {
                                  throw std::invalid_argument("motion_burst: count >= 1, window_seconds > 0");
                              }
                          },
                          [](const PeriodicSeries& r) {
                              if (r.min_repeats < 1 || !(r.period_tolerance > 0.0) || !(r.min_total_seconds > 0.0)) {
                                  throw std::invalid_argument("periodic_series: thresholds must be positive");
                              }
                          }},
               rule);
}

std::vector<Alert> detect_abnormality(std::span<const MotionEvent> history, std::span<const AbnormalityRule> rules) {
    std::vector<Alert> out;
    if (history.empty()) return out;
    for (const auto& rule : rules) {
        const bool fire = std::visit([&](const auto& r) { return holds(r, history); }, rule);
        if (!fire) continue;
        Alert a;
        a.rule = rule_id(rule);
        a.severity = rule_severity(rule);
        const auto& e = history.back();
        a.event = {e.start, e.duration, e.intensity};
        out.push_back(std::move(a));
    }
    return out;
}

RuleEngine::RuleEngine(RuleSet rules, std::string session_id)
    : rules_(std::move(rules)),
      session_(std::move(session_id)),
      last_fired_(rules_.rules.size()),
      armed_(rules_.rules.size(), true) {
    for (const auto& r : rules_.rules) validate_rule(r);
    if (!(rules_.refractory_seconds >= 0.0)) throw std::invalid_argument("refractory period must be >= 0");
}

std::vector<Alert> RuleEngine::on_event(const MotionEvent& event, double now) {
    if (!history_.empty() && event.start < history_.back().start) {
        throw std::invalid_argument("RuleEngine: events must be time ordered");
    }
    history_.push_back(event);
    std::vector<Alert> out;
    for (std::size_t i = 0; i < rules_.rules.size(); ++i) {
        const AbnormalityRule one[] = {rules_.rules[i]};
        auto fired = detect_abnormality(history_, one);
        if (fired.empty()) {
            armed_[i] = true;
            continue;
        }
        if (!armed_[i]) continue;
        if (last_fired_[i] && now - *last_fired_[i] < rules_.refractory_seconds) continue;
        armed_[i] = false;
        last_fired_[i] = now;
        Alert a = std::move(fired.front());
        a.ts = now;
        a.session = session_;
        out.push_back(std::move(a));
    }
    return out;
}

// ---------------------------------------------------------------------------
// wire / json

std::string alert_wire(const Alert& alert) { return to_json(alert).dump(); }

Json to_json(const MotionEvent& e) {
    Json j;
    j["start"] = e.start;
    j["duration"] = e.duration;
    j["intensity"] = e.intensity;
    j["coverage"] = e.coverage;
    j["antenna_votes"] = e.antenna_votes;
    return j;
}

Json to_json(const Alert& a) {
    Json j;
    j["ts"] = a.ts;
    j["rule"] = a.rule;
    j["severity"] = a.severity;
    j["session"] = a.session;
    j["event"] = Json{{"start", a.event.start}, {"duration", a.event.duration}, {"intensity", a.event.intensity}};
    return j;
}

Json to_json(const SleepLog& log) {
    Json j;
    j["session"] = log.session_id;
    j["session_start"] = log.session_start;
    j["session_end"] = log.session_end;
    j["complete"] = log.complete;
    Json events = Json::array();
    for (const auto& le : log.events) {
        Json e = to_json(le.event);
        e["class"] = std::string(to_string(le.label));
        e["body_part"] = std::string(to_string(body_part(le.label)));
        events.push_back(std::move(e));
    }
    j["events"] = std::move(events);
    Json postures = Json::array();
    for (const auto& p : log.postures) postures.push_back(Json{{"start", p.start}, {"duration", p.duration}});
    j["postures"] = std::move(postures);
    Json counts = Json::object();
    for (const auto c : kAllMotionClasses) {
        const auto it = log.class_counts.find(c);
        counts[std::string(to_string(c))] = it == log.class_counts.end() ? 0 : it->second;
    }
    j["class_counts"] = std::move(counts);
    Json alerts = Json::array();
    for (const auto& a : log.alerts) alerts.push_back(to_json(a));
    j["alerts"] = std::move(alerts);
    j["alerts_issued"] = log.alerts.size();
    return j;
}

SleepLog sleep_log_from_json(const Json& j) {
    SleepLog log;
    log.session_id = j.at("session").get<std::string>();
    log.session_start = j.at("session_start").get<double>();
    log.session_end = j.at("session_end").get<double>();
    log.complete = j.value("complete", true);
    log.closed = true;
    for (const auto& e : j.at("events")) {
        MotionEvent ev;
        ev.start = e.at("start").get<double>();
        ev.duration = e.at("duration").get<double>();
        ev.intensity = e.at("intensity").get<double>();
        ev.coverage = e.at("coverage").get<double>();
        if (e.contains("antenna_votes")) ev.antenna_votes = e["antenna_votes"].get<std::vector<std::int64_t>>();
        const auto label = parse_motion_class(e.at("class").get<std::string>());
        log.events.push_back({ev, label});
        ++log.class_counts[label];
    }
    for (const auto& p : j.at("postures")) log.postures.push_back({p.at("start").get<double>(), p.at("duration").get<double>()});
    for (const auto& a : j.value("alerts", Json::array())) {
        Alert al;
        al.ts = a.at("ts").get<double>();
        al.rule = a.at("rule").get<std::string>();
        al.severity = a.at("severity").get<std::string>();
        al.session = a.at("session").get<std::string>();
        al.event = {a.at("event").at("start").get<double>(), a.at("event").at("duration").get<double>(),
                    a.at("event").at("intensity").get<double>()};
        log.alerts.push_back(std::move(al));
    }
    return log;
}

GuardianConfig parse_guardian_config(const Json& j) {
    GuardianConfig cfg;
    for (const auto& c : j.value("contacts", Json::array())) {
        Contact contact{c.value("name", std::string()), c.at("endpoint").get<std::string>()};
        net::parse_endpoint(contact.endpoint);
        cfg.contacts.push_back(std::move(contact));
    }
    if (j.contains("rules")) {
        const auto& r = j["rules"];
        cfg.rules.rules.clear();
        cfg.rules.refractory_seconds = r.value("refractory_seconds", 60.0);
        auto enabled = [&](const char* key) { return !r.contains(key) || !(r[key].is_null() || r[key] == false); };
        auto section = [&](const char* key) { return r.contains(key) && r[key].is_object() ? r[key] : Json::object(); };
        if (enabled("intensity_outlier")) {
            const auto s = section("intensity_outlier");
            IntensityOutlier rule;
            rule.z_threshold = s.value("z_threshold", rule.z_threshold);
            rule.min_history = s.value("min_history", rule.min_history);
            cfg.rules.rules.push_back(rule);
        }
        if (enabled("motion_burst")) {
            const auto s = section("motion_burst");
            MotionBurst rule;
            rule.count = s.value("count", rule.count);
            rule.window_seconds = s.value("window_seconds", rule.window_seconds);
            cfg.rules.rules.push_back(rule);
        }
        if (enabled("periodic_series")) {
            const auto s = section("periodic_series");
            PeriodicSeries rule;
            rule.min_repeats = s.value("min_repeats", rule.min_repeats);
            rule.period_tolerance = s.value("period_tolerance", rule.period_tolerance);
            rule.min_total_seconds = s.value("min_total_seconds", rule.min_total_seconds);
            cfg.rules.rules.push_back(rule);
        }
    }
    for (const auto& rule : cfg.rules.rules) validate_rule(rule);
    return cfg;
}

GuardianConfig load_guardian_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open contacts config '" + path + "'");
    return parse_guardian_config(Json::parse(in));
}

// ---------------------------------------------------------------------------
// dispatch

DeliveryReport dispatch_alert(const Alert& alert, const ContactList& contacts, const DispatchOptions& options) {
    if (contacts.empty()) throw std::invalid_argument("dispatch_alert: no contacts configured");
    const std::string line = alert_wire(alert) + "\n";
    DeliveryReport report;
    for (const auto& c : contacts) {
        ContactResult r{c.name, false, 0, {}};
        std::optional<net::Endpoint> ep;
        try {
            ep = net::parse_endpoint(c.endpoint);
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        while (ep && !r.delivered && r.attempts < options.attempts) {
            if (r.attempts++ > 0) std::this_thread::sleep_for(options.backoff);
            auto sock = net::connect_to(*ep, options.connect_timeout);
            if (!sock) {
                r.error = "connect failed";
                continue;
            }
            if (net::send_all(*sock, line)) {
                r.delivered = true;
                r.error.clear();
            } else {
                r.error = "send failed";
            }
        }
        (r.delivered ? report.delivered : report.failed) += 1;
        report.contacts.push_back(std::move(r));
    }
    return report;
}

AsyncDispatcher::AsyncDispatcher(ContactList contacts, DispatchOptions options)
    : contacts_(std::move(contacts)), options_(options), connections_(contacts_.size()) {
    for (const auto& c : contacts_) {
        try {
            endpoints_.push_back(net::parse_endpoint(c.endpoint));
        } catch (const std::exception&) {
            endpoints_.push_back(std::nullopt);
        }
    }
    worker_ = std::thread([this] { run(); });
}

AsyncDispatcher::~AsyncDispatcher() {
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
    }
    wake_.notify_all();
    worker_.join();
}

void AsyncDispatcher::enqueue(Alert alert) {
    {
        std::lock_guard lock(mutex_);
        queue_.push_back(std::move(alert));
    }
    wake_.notify_one();
}

bool AsyncDispatcher::drain(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    return idle_.wait_for(lock, timeout, [this] { return queue_.empty() && !busy_; });
}

std::vector<DeliveryReport> AsyncDispatcher::reports() const {
    std::lock_guard lock(mutex_);
    return reports_;
}

ContactResult AsyncDispatcher::deliver(std::size_t i, const std::string& line) {
    ContactResult r{contacts_[i].name, false, 0, {}};
    if (!endpoints_[i]) {
        r.error = "bad endpoint";
        return r;
    }
    while (!r.delivered && r.attempts < options_.attempts) {
        if (r.attempts++ > 0) std::this_thread::sleep_for(options_.backoff);
        auto& conn = connections_[i];
        if (!conn) conn = net::connect_to(*endpoints_[i], options_.connect_timeout);
        if (!conn) {
            r.error = "connect failed";
            continue;
        }
        if (net::send_all(*conn, line)) {
            r.delivered = true;
            r.error.clear();
        } else {
            conn.reset();
            r.error = "send failed";
        }
    }
    return r;
}

void AsyncDispatcher::run() {
    std::unique_lock lock(mutex_);
    while (true) {
        wake_.wait(lock, [this] { return stop_ || !queue_.empty(); });
        if (queue_.empty()) {
            if (stop_) return;
            continue;
        }
        Alert alert = std::move(queue_.front());
        queue_.pop_front();
        busy_ = true;
        lock.unlock();

        const std::string line = alert_wire(alert) + "\n";
        DeliveryReport report;
        for (std::size_t i = 0; i < contacts_.size(); ++i) {
            auto r = deliver(i, line);
            (r.delivered ? report.delivered : report.failed) += 1;
            report.contacts.push_back(std::move(r));
        }

        lock.lock();
        reports_.push_back(std::move(report));
        busy_ = false;
        if (queue_.empty()) idle_.notify_all();
    }
}

}  // namespace csisleep
