#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "failex/telemetry.hpp"

namespace failex {

struct KpiBaseline {
    std::string kpi_name;
    double mean = 0.0;
    double stddev = 0.0;
};

/// Where the failure signature burst is planted, relative to t.
struct SignaturePlacement {
    std::vector<std::string> event_types = {"Write response time", "Peak backend write resp. time"};
    // Positives: the burst ends within this many minutes before t.
    Minutes positive_max_lead = 3 * kMinutesPerDay;
    // Negatives carrying a decoy: the burst ends this far before t.
    Minutes decoy_min_lead = 7 * kMinutesPerDay;
    Minutes decoy_max_lead = 13 * kMinutesPerDay;
    double decoy_fraction = 0.5;  // share of negatives that carry a decoy burst
    std::pair<int, int> events_per_type = {2, 5};
};

struct SyntheticConfig {
    std::size_t device_count = 600;
    double positive_fraction = 1.0 / 9.0;  // 1:8 minority to majority
    ObservationWindow window{25463520, 25463520 + 14 * kMinutesPerDay, 3 * kMinutesPerDay};
    Minutes sampling_minutes = 5;
    Minutes background_sampling_minutes = 360;  // below-threshold filler between bursts
    std::vector<KpiBaseline> kpi_baselines;     // empty: derived from the rules
    double spike_burst_rate = 5.0;              // mean background bursts per device
    int max_bursts = 12;
    std::pair<Minutes, Minutes> burst_length_range = {15, 240};
    std::pair<int, int> kpis_per_burst = {1, 3};
    double spike_probability = 0.5;  // per sample and KPI inside a burst
    SignaturePlacement signature;
    std::uint64_t rng_seed = 7;

    void validate() const;
};

/// Ground truth for one device.
struct PlantedSignature {
    std::string device_id;
    bool positive = false;
    bool has_burst = false;
    Minutes burst_start = 0;
    Minutes burst_end = 0;
};

struct SyntheticCorpus {
    ObservationWindow window;
    std::vector<ThresholdRule> rules;
    std::vector<KpiSeries> series;
    std::vector<Incident> incidents;
    std::vector<DeviceRecord> records;  // extracted events and labels
    std::vector<PlantedSignature> signatures;
    LabelDiagnostics diagnostics;
};

/// Deterministic for a given config. Positive devices carry the signature
/// burst shortly before t; some negatives carry it far from t.
SyntheticCorpus generate_synthetic(const SyntheticConfig& config,
                                   const std::vector<ThresholdRule>& rules = default_rules());

/// Relative frequency of each default KPI rule among observed events.
double default_event_share(const std::string& kpi_name);

}  // namespace failex
