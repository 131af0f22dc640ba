#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace failex {

/// Integer minutes since the Unix epoch.
using Minutes = std::int64_t;

inline constexpr Minutes kMinutesPerDay = 1440;

/// A KPI value strictly above `threshold` is an anomalous event.
struct ThresholdRule {
    std::string kpi_name;
    double threshold = 0.0;
    std::string unit;
};

/// The fifteen expert rules for storage KPIs. Every rule is an upper bound.
std::vector<ThresholdRule> default_rules();

/// Throws ValidationError on an empty set, a duplicate name or a non-finite threshold.
void validate_rules(std::span<const ThresholdRule> rules);

/// Parses `kpi_name,threshold,unit` CSV.
std::vector<ThresholdRule> parse_rules(std::istream& in, const std::string& source);

/// Reads a rules file; a path that does not exist yields default_rules().
std::vector<ThresholdRule> load_rules(const std::filesystem::path& path);

void write_rules(std::ostream& out, std::span<const ThresholdRule> rules);

struct Sample {
    Minutes timestamp = 0;
    double value = 0.0;
};

struct KpiSeries {
    std::string device_id;
    std::string kpi_name;
    std::vector<Sample> samples;  // strictly increasing timestamps
};

struct AnomalousEvent {
    std::string device_id;
    std::string event_type;  // name of the rule that fired
    Minutes timestamp = 0;
    double value = 0.0;

    bool operator==(const AnomalousEvent&) const = default;
};

/// Total order used for every event list: device, time, type, value.
bool event_less(const AnomalousEvent& a, const AnomalousEvent& b);

struct ExtractionResult {
    std::vector<AnomalousEvent> events;
    std::size_t unmatched_series = 0;  // series whose KPI has no rule
};

/// One event per sample strictly above its rule's threshold, sorted by event_less.
ExtractionResult extract_events(std::span<const KpiSeries> series,
                                std::span<const ThresholdRule> rules);

struct Incident {
    std::string device_id;
    Minutes timestamp = 0;
    std::string severity;
    std::string text;
};

/// Observation interval [start, end] and the prediction horizon length T.
struct ObservationWindow {
    Minutes start = 0;
    Minutes end = 14 * kMinutesPerDay;
    Minutes horizon = 3 * kMinutesPerDay;

    void validate() const;
};

struct LabelingOptions {
    std::string failure_phrase = "the device or drive is likely to fail soon";
    std::string severity = "error";
};

struct DeviceRecord {
    std::string device_id;
    Minutes observation_start = 0;
    Minutes observation_end = 0;  // t
    Minutes horizon_end = 0;      // t + T
    std::vector<AnomalousEvent> events;
    int label = 0;

    Minutes horizon() const { return horizon_end - observation_end; }
};

struct LabelDiagnostics {
    std::size_t qualifying = 0;                // matching incidents inside (t, t+T]
    std::size_t outside_horizon = 0;           // matching incidents ignored for their time
    std::size_t non_qualifying = 0;            // wrong severity or phrase
    std::size_t unknown_device = 0;            // incident for a device with no record
    std::size_t events_outside_observation = 0;
};

struct LabelingResult {
    std::vector<DeviceRecord> records;  // sorted by device_id
    LabelDiagnostics diagnostics;
};

/// Builds one record per device in `device_ids` (plus any device seen in
/// `events`). label = 1 iff a qualifying incident lies in (t, t+T].
LabelingResult label_devices(std::span<const std::string> device_ids,
                             std::span<const AnomalousEvent> events,
                             std::span<const Incident> incidents,
                             const ObservationWindow& window,
                             const LabelingOptions& options = {});

/// Lowercase substring test used for failure phrases.
bool phrase_matches(const std::string& text, const std::string& phrase);

// CSV artifacts. Headers are fixed; see README.
std::vector<KpiSeries> read_series(const std::filesystem::path& path);
std::vector<KpiSeries> parse_series(std::istream& in, const std::string& source);
void write_series(std::ostream& out, std::span<const KpiSeries> series);

std::vector<AnomalousEvent> read_events(const std::filesystem::path& path);
void write_events(std::ostream& out, std::span<const AnomalousEvent> events);

std::vector<Incident> read_incidents(const std::filesystem::path& path);
void write_incidents(std::ostream& out, std::span<const Incident> incidents);

/// `device_id,observation_start_min,observation_end_min,horizon_end_min,label`
std::vector<DeviceRecord> read_labels(const std::filesystem::path& path);
void write_labels(std::ostream& out, std::span<const DeviceRecord> records);

}  // namespace failex
