#include "failex/telemetry.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <tuple>
#include <unordered_map>

#include "failex/csv.hpp"
#include "failex/error.hpp"

namespace failex {
namespace {

const std::vector<std::string> kRulesHeader = {"kpi_name", "threshold", "unit"};
const std::vector<std::string> kSeriesHeader = {"device_id", "kpi_name", "timestamp_min", "value"};
const std::vector<std::string> kEventsHeader = {"device_id", "event_type", "timestamp_min", "value"};
const std::vector<std::string> kIncidentsHeader = {"device_id", "timestamp_min", "severity", "text"};
const std::vector<std::string> kLabelsHeader = {"device_id", "observation_start_min",
                                                "observation_end_min", "horizon_end_min", "label"};

std::string trim(const std::string& s) {
    auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

std::vector<ThresholdRule> default_rules() {
    return {
        {"Disk utilization", 50.0, "%"},
        {"Invalid transmission word rate", 0.7, "cnt/s"},
        {"Peak backend write resp. time", 10.0, "s"},
        {"Port receive bandwidth", 75.0, "%"},
        {"Port send bandwidth", 75.0, "%"},
        {"Port send delay I/O", 20.0, "%"},
        {"Port to local node send queue time", 0.5, "ms/op"},
        {"Port to local node send resp. time", 0.75, "ms/op"},
        {"Read response time", 30.0, "ms/op"},
        {"Read transfer size", 64.0, "KB/op"},
        {"System CPU core utilization", 70.0, "%"},
        {"Write-cache delay", 3.0, "%"},
        {"Write response time", 30.0, "ms/op"},
        {"Write transfer size", 256.0, "KB/op"},
        {"Zero buffer credit", 20.0, "%"},
    };
}

void validate_rules(std::span<const ThresholdRule> rules) {
    if (rules.empty()) throw ValidationError("rule set is empty");
    std::set<std::string> seen;
    for (const auto& rule : rules) {
        if (rule.kpi_name.empty()) throw ValidationError("rule with empty kpi_name");
        if (!std::isfinite(rule.threshold))
            throw ValidationError("rule '" + rule.kpi_name + "' has a non-finite threshold");
        if (!seen.insert(rule.kpi_name).second)
            throw ValidationError("duplicate rule for kpi '" + rule.kpi_name + "'");
    }
}

std::vector<ThresholdRule> parse_rules(std::istream& in, const std::string& source) {
    if (in.peek() == std::char_traits<char>::eof())
        throw ValidationError(source + ": rules file is empty");
    std::vector<ThresholdRule> rules;
    for (auto& row : csv::read(in, source, kRulesHeader)) {
        for (auto& field : row.fields) field = trim(field);
        rules.push_back({row.fields[0], csv::parse_double(row, 1, source), row.fields[2]});
    }
    validate_rules(rules);
    return rules;
}

std::vector<ThresholdRule> load_rules(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return default_rules();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return parse_rules(in, path.string());
}

void write_rules(std::ostream& out, std::span<const ThresholdRule> rules) {
    csv::write_row(out, kRulesHeader);
    for (const auto& rule : rules)
        csv::write_row(out, {rule.kpi_name, csv::format_double(rule.threshold), rule.unit});
}

bool event_less(const AnomalousEvent& a, const AnomalousEvent& b) {
    return std::tie(a.device_id, a.timestamp, a.event_type, a.value) <
           std::tie(b.device_id, b.timestamp, b.event_type, b.value);
}

ExtractionResult extract_events(std::span<const KpiSeries> series,
                                std::span<const ThresholdRule> rules) {
    std::unordered_map<std::string, double> thresholds;
    for (const auto& rule : rules) thresholds.emplace(rule.kpi_name, rule.threshold);

    ExtractionResult result;
    for (const auto& s : series) {
        auto it = thresholds.find(s.kpi_name);
        if (it == thresholds.end()) {
            ++result.unmatched_series;
            continue;
        }
        for (const auto& sample : s.samples) {
            if (sample.value > it->second)
                result.events.push_back({s.device_id, s.kpi_name, sample.timestamp, sample.value});
        }
    }
    std::sort(result.events.begin(), result.events.end(), event_less);
    return result;
}

void ObservationWindow::validate() const {
    if (end <= start) throw ValidationError("observation end must be after its start");
    if (horizon <= 0) throw ValidationError("prediction horizon must be positive");
}

bool phrase_matches(const std::string& text, const std::string& phrase) {
    return lowercase(text).find(lowercase(phrase)) != std::string::npos;
}

LabelingResult label_devices(std::span<const std::string> device_ids,
                             std::span<const AnomalousEvent> events,
                             std::span<const Incident> incidents,
                             const ObservationWindow& window,
                             const LabelingOptions& options) {
    window.validate();
    LabelingResult result;
    std::map<std::string, DeviceRecord> by_device;
    auto record_for = [&](const std::string& id) -> DeviceRecord& {
        auto [it, inserted] = by_device.try_emplace(id);
        if (inserted) {
            it->second.device_id = id;
            it->second.observation_start = window.start;
            it->second.observation_end = window.end;
            it->second.horizon_end = window.end + window.horizon;
        }
        return it->second;
    };
    for (const auto& id : device_ids) record_for(id);
    for (const auto& event : events) {
        auto& record = record_for(event.device_id);
        if (event.timestamp < window.start || event.timestamp > window.end) {
            ++result.diagnostics.events_outside_observation;
            continue;
        }
        record.events.push_back(event);
    }

    const std::string severity = lowercase(options.severity);
    for (const auto& incident : incidents) {
        if (lowercase(incident.severity) != severity ||
            !phrase_matches(incident.text, options.failure_phrase)) {
            ++result.diagnostics.non_qualifying;
            continue;
        }
        auto it = by_device.find(incident.device_id);
        if (it == by_device.end()) {
            ++result.diagnostics.unknown_device;
            continue;
        }
        auto& record = it->second;
        if (incident.timestamp <= record.observation_end || incident.timestamp > record.horizon_end) {
            ++result.diagnostics.outside_horizon;
            continue;
        }
        ++result.diagnostics.qualifying;
        record.label = 1;
    }

    result.records.reserve(by_device.size());
    for (auto& [id, record] : by_device) {
        std::sort(record.events.begin(), record.events.end(), event_less);
        result.records.push_back(std::move(record));
    }
    return result;
}

std::vector<KpiSeries> parse_series(std::istream& in, const std::string& source) {
    std::vector<KpiSeries> series;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    for (const auto& row : csv::read(in, source, kSeriesHeader)) {
        auto key = std::make_pair(row.fields[0], row.fields[1]);
        auto [it, inserted] = index.try_emplace(key, series.size());
        if (inserted) series.push_back({row.fields[0], row.fields[1], {}});
        auto& s = series[it->second];
        Sample sample{csv::parse_int(row, 2, source), csv::parse_double(row, 3, source)};
        if (!s.samples.empty() && sample.timestamp <= s.samples.back().timestamp)
            throw FormatError(source, row.line,
                              "timestamps must be strictly increasing per device and kpi");
        s.samples.push_back(sample);
    }
    return series;
}

std::vector<KpiSeries> read_series(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return parse_series(in, path.string());
}

void write_series(std::ostream& out, std::span<const KpiSeries> series) {
    csv::write_row(out, kSeriesHeader);
    for (const auto& s : series)
        for (const auto& sample : s.samples)
            csv::write_row(out, {s.device_id, s.kpi_name, std::to_string(sample.timestamp),
                                 csv::format_double(sample.value)});
}

std::vector<AnomalousEvent> read_events(const std::filesystem::path& path) {
    const auto source = path.string();
    std::vector<AnomalousEvent> events;
    for (const auto& row : csv::read_file(source, kEventsHeader))
        events.push_back({row.fields[0], row.fields[1], csv::parse_int(row, 2, source),
                          csv::parse_double(row, 3, source)});
    std::sort(events.begin(), events.end(), event_less);
    return events;
}

void write_events(std::ostream& out, std::span<const AnomalousEvent> events) {
    csv::write_row(out, kEventsHeader);
    for (const auto& e : events)
        csv::write_row(out, {e.device_id, e.event_type, std::to_string(e.timestamp),
                             csv::format_double(e.value)});
}

std::vector<Incident> read_incidents(const std::filesystem::path& path) {
    const auto source = path.string();
    std::vector<Incident> incidents;
    for (const auto& row : csv::read_file(source, kIncidentsHeader))
        incidents.push_back({row.fields[0], csv::parse_int(row, 1, source), row.fields[2],
                             row.fields[3]});
    return incidents;
}

void write_incidents(std::ostream& out, std::span<const Incident> incidents) {
    csv::write_row(out, kIncidentsHeader);
    for (const auto& i : incidents)
        csv::write_row(out, {i.device_id, std::to_string(i.timestamp), i.severity, i.text});
}

std::vector<DeviceRecord> read_labels(const std::filesystem::path& path) {
    const auto source = path.string();
    std::vector<DeviceRecord> records;
    for (const auto& row : csv::read_file(source, kLabelsHeader)) {
        DeviceRecord r;
        r.device_id = row.fields[0];
        r.observation_start = csv::parse_int(row, 1, source);
        r.observation_end = csv::parse_int(row, 2, source);
        r.horizon_end = csv::parse_int(row, 3, source);
        const auto label = csv::parse_int(row, 4, source);
        if (label != 0 && label != 1) throw FormatError(source, row.line, "label must be 0 or 1");
        if (!(r.observation_start < r.observation_end && r.observation_end < r.horizon_end))
            throw FormatError(source, row.line, "require start < end < horizon_end");
        r.label = static_cast<int>(label);
        records.push_back(std::move(r));
    }
    return records;
}

void write_labels(std::ostream& out, std::span<const DeviceRecord> records) {
    csv::write_row(out, kLabelsHeader);
    for (const auto& r : records)
        csv::write_row(out, {r.device_id, std::to_string(r.observation_start),
                             std::to_string(r.observation_end), std::to_string(r.horizon_end),
                             std::to_string(r.label)});
}

}  // namespace failex
