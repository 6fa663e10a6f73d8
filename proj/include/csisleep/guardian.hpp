#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "csisleep/motion_events.hpp"
#include "csisleep/net.hpp"

namespace csisleep {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// sleep log

struct LoggedEvent {
    MotionEvent event;
    MotionClass label;
};

struct PostureSpan {
    double start = 0.0;
    double duration = 0.0;
};

struct Alert;

struct SleepLog {
    std::string session_id;
    double session_start = 0.0;
    double session_end = 0.0;
    std::vector<LoggedEvent> events;
    std::vector<PostureSpan> postures;  // still spans between motions
    std::map<MotionClass, int> class_counts;
    std::vector<Alert> alerts;
    bool complete = true;
    bool closed = false;

    // Time up to which the timeline is accounted for.
    double cursor() const;
};

SleepLog make_log(std::string session_id, double session_start);

// Closes the posture span preceding `event`, appends the event and bumps the
// class counter. Throws std::invalid_argument if the event starts before the
// last logged time.
SleepLog& update_log(SleepLog& log, const MotionEvent& event, MotionClass label);

// Adds the trailing posture span up to `end` and marks the log closed.
SleepLog& close_log(SleepLog& log, double end, bool complete = true);

// ---------------------------------------------------------------------------
// abnormality rules

struct IntensityOutlier {
    double z_threshold = 4.0;
    int min_history = 10;
};

struct MotionBurst {
    int count = 5;
    double window_seconds = 120.0;
};

struct PeriodicSeries {
    int min_repeats = 10;           // inter-event gaps
    double period_tolerance = 0.2;  // relative
    double min_total_seconds = 120.0;
};

using AbnormalityRule = std::variant<IntensityOutlier, MotionBurst, PeriodicSeries>;

std::string rule_id(const AbnormalityRule& rule);
std::string rule_severity(const AbnormalityRule& rule);
void validate_rule(const AbnormalityRule& rule);

struct RuleSet {
    std::vector<AbnormalityRule> rules{IntensityOutlier{}, MotionBurst{}, PeriodicSeries{}};
    double refractory_seconds = 60.0;
};

struct EventSummary {
    double start = 0.0;
    double duration = 0.0;
    double intensity = 0.0;
};

struct Alert {
    double ts = 0.0;  // trace time at which the alert was raised
    std::string rule;
    std::string severity;
    std::string session;
    EventSummary event;
};

// One wire record, no trailing newline.
std::string alert_wire(const Alert& alert);

// Rules whose condition holds for the newest event of `history` (time
// ordered). Stateless; ts/session are left for the caller.
std::vector<Alert> detect_abnormality(std::span<const MotionEvent> history, std::span<const AbnormalityRule> rules);

// Stateful wrapper: refractory period plus latching, so a condition that
// stays true over consecutive events fires once until it has been false again.
class RuleEngine {
public:
    RuleEngine(RuleSet rules, std::string session_id);

    // Appends `event` to the history and returns the alerts raised at `now`.
    std::vector<Alert> on_event(const MotionEvent& event, double now);

    const std::vector<MotionEvent>& history() const { return history_; }
    const RuleSet& rules() const { return rules_; }

private:
    RuleSet rules_;
    std::string session_;
    std::vector<MotionEvent> history_;
    std::vector<std::optional<double>> last_fired_;
    std::vector<bool> armed_;
};

// ---------------------------------------------------------------------------
// dispatch

struct Contact {
    std::string name;
    std::string endpoint;  // host:port
};

using ContactList = std::vector<Contact>;

struct DispatchOptions {
    int attempts = 3;
    std::chrono::milliseconds backoff{100};
    std::chrono::milliseconds connect_timeout{500};
};

struct ContactResult {
    std::string name;
    bool delivered = false;
    int attempts = 0;
    std::string error;
};

struct DeliveryReport {
    int delivered = 0;
    int failed = 0;
    std::vector<ContactResult> contacts;
};

// One record per contact, fresh connection per call, bounded retries.
// Never throws for delivery failures.
DeliveryReport dispatch_alert(const Alert& alert, const ContactList& contacts, const DispatchOptions& options = {});

// Background dispatcher: alerts are queued from the pipeline thread and
// delivered on a worker, reusing one connection per contact so records stay
// ordered per connection.
class AsyncDispatcher {
public:
    AsyncDispatcher(ContactList contacts, DispatchOptions options = {});
    ~AsyncDispatcher();
    AsyncDispatcher(const AsyncDispatcher&) = delete;
    AsyncDispatcher& operator=(const AsyncDispatcher&) = delete;

    void enqueue(Alert alert);
    // Blocks until the queue is drained or `timeout` elapses.
    bool drain(std::chrono::milliseconds timeout);
    std::vector<DeliveryReport> reports() const;

private:
    void run();
    ContactResult deliver(std::size_t contact, const std::string& line);

    ContactList contacts_;
    std::vector<std::optional<net::Endpoint>> endpoints_;
    DispatchOptions options_;
    std::vector<std::optional<net::Socket>> connections_;

    mutable std::mutex mutex_;
    std::condition_variable wake_;
    std::condition_variable idle_;
    std::deque<Alert> queue_;
    std::vector<DeliveryReport> reports_;
    bool busy_ = false;
    bool stop_ = false;
    std::thread worker_;
};

// ---------------------------------------------------------------------------
// JSON

Json to_json(const MotionEvent& e);
Json to_json(const Alert& a);
Json to_json(const SleepLog& log);
SleepLog sleep_log_from_json(const Json& j);

// { "contacts": [{"name":..., "endpoint":"host:port"}], "rules": {...} }
struct GuardianConfig {
    ContactList contacts;
    RuleSet rules;
};

GuardianConfig parse_guardian_config(const Json& j);
GuardianConfig load_guardian_config(const std::string& path);

}  // namespace csisleep
