#include "failex/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "failex/error.hpp"
#include "failex/rng.hpp"

namespace failex {
namespace {

// Event counts per rule in the reference storage fleet.
const std::map<std::string, double> kEventCounts = {
    {"Disk utilization", 4448},
    {"Invalid transmission word rate", 4331},
    {"Peak backend write resp. time", 238},
    {"Port receive bandwidth", 4314},
    {"Port send bandwidth", 332},
    {"Port send delay I/O", 55170},
    {"Port to local node send queue time", 720},
    {"Port to local node send resp. time", 20666},
    {"Read response time", 49010},
    {"Read transfer size", 79100},
    {"System CPU core utilization", 706},
    {"Write-cache delay", 112},
    {"Write response time", 52424},
    {"Write transfer size", 44473},
    {"Zero buffer credit", 37},
};

int poisson(Rng& rng, double mean) {
    const double limit = std::exp(-mean);
    double p = rng.uniform();
    int k = 0;
    while (p > limit) {
        ++k;
        p *= rng.uniform();
    }
    return k;
}

struct Burst {
    Minutes start;
    Minutes end;
    std::vector<std::size_t> kpis;
};

class DeviceBuilder {
public:
    DeviceBuilder(const SyntheticConfig& config, const std::vector<ThresholdRule>& rules,
                  const std::vector<KpiBaseline>& baselines, std::uint64_t seed)
        : config_(config), rules_(rules), baselines_(baselines), rng_(seed),
          spikes_(rules.size()), busy_(rules.size()) {
        for (std::size_t i = 0; i < rules.size(); ++i) {
            bool signature = std::find(config.signature.event_types.begin(),
                                       config.signature.event_types.end(),
                                       rules[i].kpi_name) != config.signature.event_types.end();
            if (signature) {
                signature_kpis_.push_back(i);
                background_weights_.push_back(0.0);
            } else {
                background_weights_.push_back(default_event_share(rules[i].kpi_name));
            }
        }
    }

    void add_background_bursts() {
        const int count = std::clamp(poisson(rng_, config_.spike_burst_rate), 1, config_.max_bursts);
        const auto& w = config_.window;
        for (int b = 0; b < count; ++b) {
            const Minutes length = grid_length();
            const Minutes start = align(rng_.uniform_int(w.start, w.end - length));
            std::vector<std::size_t> kpis;
            const auto wanted = rng_.uniform_int(config_.kpis_per_burst.first, config_.kpis_per_burst.second);
            auto weights = background_weights_;
            for (std::int64_t i = 0; i < wanted; ++i) {
                if (std::all_of(weights.begin(), weights.end(), [](double x) { return x <= 0.0; })) break;
                const auto k = rng_.weighted_index(weights);
                weights[k] = 0.0;
                kpis.push_back(k);
            }
            std::sort(kpis.begin(), kpis.end());
            add_random_spikes({start, start + length, kpis});
        }
    }

    /// Plants the signature burst ending `lead` minutes before t.
    PlantedSignature add_signature(Minutes min_lead, Minutes max_lead) {
        const auto& w = config_.window;
        const Minutes end = align(w.end - rng_.uniform_int(min_lead, max_lead));
        const Minutes length = grid_length();
        const Minutes start = end - length;
        const auto slots = static_cast<std::int64_t>(length / config_.sampling_minutes) + 1;
        for (std::size_t kpi : signature_kpis_) {
            mark_busy(kpi, start, end);
            auto count = rng_.uniform_int(config_.signature.events_per_type.first,
                                          config_.signature.events_per_type.second);
            count = std::min(count, slots);
            std::vector<std::int64_t> picks(static_cast<std::size_t>(slots));
            for (std::int64_t i = 0; i < slots; ++i) picks[static_cast<std::size_t>(i)] = i;
            rng_.shuffle(picks);
            for (std::int64_t i = 0; i < count; ++i)
                spike(kpi, start + picks[static_cast<std::size_t>(i)] * config_.sampling_minutes);
        }
        PlantedSignature truth;
        truth.has_burst = true;
        truth.burst_start = start;
        truth.burst_end = end;
        return truth;
    }

    void emit_series(const std::string& device_id, std::vector<KpiSeries>& out) {
        const auto& w = config_.window;
        for (std::size_t kpi = 0; kpi < rules_.size(); ++kpi) {
            std::set<Minutes> stamps;
            for (Minutes ts = w.start; ts <= w.end; ts += config_.background_sampling_minutes)
                stamps.insert(ts);
            for (const auto& [from, to] : busy_[kpi])
                for (Minutes ts = from; ts <= to; ts += config_.sampling_minutes) stamps.insert(ts);
            for (const auto& [ts, value] : spikes_[kpi]) stamps.insert(ts);

            KpiSeries series{device_id, rules_[kpi].kpi_name, {}};
            series.samples.reserve(stamps.size());
            for (Minutes ts : stamps) {
                auto it = spikes_[kpi].find(ts);
                series.samples.push_back({ts, it != spikes_[kpi].end() ? it->second : quiet_value(kpi)});
            }
            out.push_back(std::move(series));
        }
    }

    Rng& rng() { return rng_; }

private:
    Minutes align(Minutes ts) const {
        const Minutes offset = ts - config_.window.start;
        return config_.window.start + offset - offset % config_.sampling_minutes;
    }

    Minutes grid_length() {
        const auto [lo, hi] = config_.burst_length_range;
        const Minutes raw = rng_.uniform_int(lo, hi);
        return raw - raw % config_.sampling_minutes;
    }

    void mark_busy(std::size_t kpi, Minutes from, Minutes to) { busy_[kpi].emplace_back(from, to); }

    void add_random_spikes(const Burst& burst) {
        for (std::size_t kpi : burst.kpis) {
            mark_busy(kpi, burst.start, burst.end);
            bool any = false;
            for (Minutes ts = burst.start; ts <= burst.end; ts += config_.sampling_minutes) {
                if (rng_.bernoulli(config_.spike_probability)) {
                    spike(kpi, ts);
                    any = true;
                }
            }
            if (!any) {
                const auto slots = (burst.end - burst.start) / config_.sampling_minutes;
                spike(kpi, burst.start + rng_.uniform_int(0, slots) * config_.sampling_minutes);
            }
        }
    }

    void spike(std::size_t kpi, Minutes ts) {
        const double th = rules_[kpi].threshold;
        const double scale = std::max(std::abs(th), 1e-3);
        spikes_[kpi][ts] = th + scale * rng_.uniform(0.05, 1.0);
    }

    double quiet_value(std::size_t kpi) {
        const double th = rules_[kpi].threshold;
        const double ceiling = th - 0.05 * std::max(std::abs(th), 1e-3);
        const auto& base = baselines_[kpi];
        return std::min(rng_.normal(base.mean, base.stddev), ceiling);
    }

    const SyntheticConfig& config_;
    const std::vector<ThresholdRule>& rules_;
    const std::vector<KpiBaseline>& baselines_;
    Rng rng_;
    std::vector<std::map<Minutes, double>> spikes_;
    std::vector<std::vector<std::pair<Minutes, Minutes>>> busy_;
    std::vector<std::size_t> signature_kpis_;
    std::vector<double> background_weights_;
};

std::string device_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "dev-%04zu", index + 1);
    return buf;
}

}  // namespace

double default_event_share(const std::string& kpi_name) {
    double total = 0.0;
    for (const auto& [name, count] : kEventCounts) total += count;
    auto it = kEventCounts.find(kpi_name);
    // Unknown KPIs get the share of the rarest known rule.
    return (it != kEventCounts.end() ? it->second : 37.0) / total;
}

void SyntheticConfig::validate() const {
    if (device_count == 0) throw ValidationError("device_count must be positive");
    if (!(positive_fraction > 0.0 && positive_fraction < 1.0))
        throw ValidationError("positive_fraction must lie in (0, 1)");
    window.validate();
    if (sampling_minutes <= 0 || background_sampling_minutes <= 0)
        throw ValidationError("sampling intervals must be positive");
    const auto [lo, hi] = burst_length_range;
    if (lo < 0 || lo > hi) throw ValidationError("burst_length_range is empty");
    const Minutes observed = window.end - window.start;
    if (hi > observed) throw ValidationError("bursts longer than the observation window");
    if (hi + signature.positive_max_lead > observed || hi + signature.decoy_max_lead > observed)
        throw ValidationError("signature placement does not fit in the observation window");
    if (signature.decoy_min_lead < 0 || signature.decoy_min_lead > signature.decoy_max_lead ||
        signature.positive_max_lead < 0)
        throw ValidationError("signature lead ranges are empty");
    if (kpis_per_burst.first < 1 || kpis_per_burst.first > kpis_per_burst.second)
        throw ValidationError("kpis_per_burst is empty");
    if (signature.events_per_type.first < 1 ||
        signature.events_per_type.first > signature.events_per_type.second)
        throw ValidationError("signature events_per_type is empty");
    if (signature.event_types.empty()) throw ValidationError("signature has no event types");
    if (!(spike_probability > 0.0 && spike_probability <= 1.0))
        throw ValidationError("spike_probability must lie in (0, 1]");
    if (!(spike_burst_rate >= 0.0) || max_bursts < 1)
        throw ValidationError("burst rate must be non-negative and max_bursts positive");
    if (!(signature.decoy_fraction >= 0.0 && signature.decoy_fraction <= 1.0))
        throw ValidationError("decoy_fraction must lie in [0, 1]");
}

SyntheticCorpus generate_synthetic(const SyntheticConfig& config,
                                   const std::vector<ThresholdRule>& rules) {
    config.validate();
    validate_rules(rules);
    for (const auto& type : config.signature.event_types) {
        if (std::none_of(rules.begin(), rules.end(),
                         [&](const ThresholdRule& r) { return r.kpi_name == type; }))
            throw ValidationError("signature event type '" + type + "' has no rule");
    }

    std::vector<KpiBaseline> baselines;
    for (const auto& rule : rules) {
        auto it = std::find_if(config.kpi_baselines.begin(), config.kpi_baselines.end(),
                               [&](const KpiBaseline& b) { return b.kpi_name == rule.kpi_name; });
        if (it != config.kpi_baselines.end()) {
            if (!(it->stddev >= 0.0)) throw ValidationError("baseline stddev must be >= 0");
            baselines.push_back(*it);
        } else {
            const double scale = std::abs(rule.threshold);
            baselines.push_back({rule.kpi_name, 0.4 * scale, 0.1 * scale});
        }
    }

    SyntheticCorpus corpus;
    corpus.window = config.window;
    corpus.rules = rules;

    const auto positives = static_cast<std::size_t>(
        std::llround(config.positive_fraction * static_cast<double>(config.device_count)));
    std::vector<std::size_t> order(config.device_count);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng top(derive_seed(config.rng_seed, 0x5e1ec7));
    top.shuffle(order);
    std::vector<bool> is_positive(config.device_count, false);
    for (std::size_t i = 0; i < positives && i < order.size(); ++i) is_positive[order[i]] = true;

    const auto& w = config.window;
    const std::string phrase = "the device or drive is likely to fail soon";
    std::vector<std::string> ids;
    for (std::size_t d = 0; d < config.device_count; ++d) {
        const auto id = device_name(d);
        ids.push_back(id);
        DeviceBuilder builder(config, rules, baselines, derive_seed(config.rng_seed, d + 1));
        builder.add_background_bursts();

        PlantedSignature truth;
        Rng& rng = builder.rng();
        if (is_positive[d]) {
            truth = builder.add_signature(0, config.signature.positive_max_lead);
        } else if (rng.bernoulli(config.signature.decoy_fraction)) {
            truth = builder.add_signature(config.signature.decoy_min_lead,
                                          config.signature.decoy_max_lead);
        }
        truth.device_id = id;
        truth.positive = is_positive[d];
        corpus.signatures.push_back(truth);
        builder.emit_series(id, corpus.series);

        const Minutes margin = 30;
        auto inside = [&] { return w.end + rng.uniform_int(margin, w.horizon - margin); };
        std::vector<Incident> incidents;
        if (is_positive[d])
            incidents.push_back({id, inside(), "error", "Drive 0 reports: " + phrase});
        if (rng.bernoulli(0.6))
            incidents.push_back({id, inside(), "informational", "Pool is running out of space"});
        if (rng.bernoulli(0.15))
            incidents.push_back({id, inside(), "warning", "Predictive alert: " + phrase});
        if (rng.bernoulli(0.1))
            incidents.push_back({id, inside(), "error", "Battery is at end of life"});
        if (rng.bernoulli(0.05))
            incidents.push_back({id, w.end + w.horizon + rng.uniform_int(60, kMinutesPerDay), "error",
                                 "Drive 1 reports: " + phrase});
        std::sort(incidents.begin(), incidents.end(),
                  [](const Incident& a, const Incident& b) { return a.timestamp < b.timestamp; });
        corpus.incidents.insert(corpus.incidents.end(), incidents.begin(), incidents.end());
    }

    auto extracted = extract_events(corpus.series, rules);
    auto labeled = label_devices(ids, extracted.events, corpus.incidents, w);
    corpus.records = std::move(labeled.records);
    corpus.diagnostics = labeled.diagnostics;
    return corpus;
}

}  // namespace failex
