#include "failex/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "failex/csv.hpp"
#include "failex/error.hpp"
#include "failex/model_io.hpp"
#include "failex/rng.hpp"

namespace failex {
namespace {

using nlohmann::json;

enum SeedTag : std::uint64_t { kSynthSeed = 11, kSplitSeed = 12, kInitSeed = 13, kTrainSeed = 14, kCheckSeed = 15 };

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_json(const std::filesystem::path& path, const json& doc) {
    auto out = open_output(path);
    out << doc.dump(1) << '\n';
    finish(out, path);
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    try {
        json doc;
        in >> doc;
        return doc;
    } catch (const json::exception& e) {
        throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

void require_input(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("missing input '" + path.string() + "'");
}

void log_inputs(std::ostream& log, const PipelineConfig& config, const std::string& command,
                const std::vector<std::filesystem::path>& inputs) {
    log << "[" << command << "] seed=" << config.seed << '\n';
    for (const auto& path : inputs)
        if (std::filesystem::exists(path))
            log << "[" << command << "] input " << path.string() << " fnv1a64=" << file_digest(path) << '\n';
}

// Rejects keys outside `allowed` so typos in config files surface.
void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ValidationError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw ValidationError("unknown config key '" + section + "." + key + "'");
    }
}

template <typename T>
void read_key(const json& obj, const char* key, T& target) {
    if (obj.contains(key)) target = obj.at(key).get<T>();
}

Vocabulary vocabulary_for(const PipelineConfig& config) {
    return Vocabulary::from_rules(load_rules(config.resolve(config.paths.rules)));
}

std::vector<std::size_t> indices_for(const std::vector<DeviceSequence>& sequences,
                                     const std::vector<std::string>& ids) {
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < sequences.size(); ++i) position.emplace(sequences[i].device_id, i);
    std::vector<std::size_t> out;
    for (const auto& id : ids) {
        auto it = position.find(id);
        if (it == position.end()) throw ValidationError("split references unknown device '" + id + "'");
        out.push_back(it->second);
    }
    return out;
}

std::vector<std::string> ids_for(const std::vector<DeviceSequence>& sequences,
                                 const std::vector<std::size_t>& indices) {
    std::vector<std::string> out;
    for (auto i : indices) out.push_back(sequences[i].device_id);
    return out;
}

std::vector<std::size_t> split_part(const PipelineConfig& config, const std::vector<DeviceSequence>& sequences,
                                    const char* part) {
    const auto path = config.resolve(config.paths.split);
    require_input(path);
    const auto doc = read_json(path);
    return indices_for(sequences, doc.at(part).get<std::vector<std::string>>());
}

std::string report_extension(ReportFormat format) {
    switch (format) {
        case ReportFormat::csv: return ".csv";
        case ReportFormat::table: return ".txt";
        case ReportFormat::json: return ".json";
    }
    return ".csv";
}

}  // namespace

ObservationWindow Protocol::window() const {
    return {observation_start, observation_start + observation_days * kMinutesPerDay,
            horizon_days * kMinutesPerDay};
}

PipelineConfig::PipelineConfig() {
    train.epochs = 150;
    train.positive_class_weight = 8.0;
    synchronize();
}

void PipelineConfig::synchronize() {
    synth.window = protocol.window();
    synth.sampling_minutes = protocol.sampling_minutes;
    synth.rng_seed = derive_seed(seed, kSynthSeed);
    windowing.sampling_minutes = protocol.sampling_minutes;
    train.sequence_length = model.sequence_length;
    train.rng_seed = derive_seed(seed, kTrainSeed);
}

std::filesystem::path PipelineConfig::resolve(const std::string& name) const {
    std::filesystem::path p(name);
    return p.is_absolute() ? p : paths.dir / p;
}

void PipelineConfig::validate() const {
    if (protocol.observation_days < 1 || protocol.horizon_days < 1 || protocol.sampling_minutes < 1)
        throw ValidationError("protocol durations must be positive");
    if (windowing.k_max < 1) throw ValidationError("k_max must be positive");
    if (model.embedding_dim < 1 || model.attention_dim < 1 || model.hidden_size < 1 || model.sequence_length < 1)
        throw ValidationError("model dimensions must be positive");
    train.validate();
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train_fraction must lie in (0, 1)");
    if (!(validation_share >= 0.0 && validation_share < 1.0))
        throw ValidationError("validation_share must lie in [0, 1)");
}

PipelineConfig PipelineConfig::from_json(const json& doc) {
    PipelineConfig c;
    try {
        check_keys(doc, "", {"seed", "paths", "protocol", "labeling", "windowing", "model", "train", "synth", "report_format"});
        read_key(doc, "seed", c.seed);
        if (doc.contains("report_format")) c.report_format = parse_report_format(doc.at("report_format").get<std::string>());
        if (doc.contains("paths")) {
            const auto& p = doc.at("paths");
            check_keys(p, "paths", {"dir", "rules", "series", "incidents", "signatures", "events", "labels", "windows",
                                    "cluster_diagnostics", "split", "model", "train_log", "metrics", "predictions",
                                    "reports", "gradcheck"});
            if (p.contains("dir")) c.paths.dir = p.at("dir").get<std::string>();
            read_key(p, "rules", c.paths.rules);
            read_key(p, "series", c.paths.series);
            read_key(p, "incidents", c.paths.incidents);
            read_key(p, "signatures", c.paths.signatures);
            read_key(p, "events", c.paths.events);
            read_key(p, "labels", c.paths.labels);
            read_key(p, "windows", c.paths.windows);
            read_key(p, "cluster_diagnostics", c.paths.cluster_diagnostics);
            read_key(p, "split", c.paths.split);
            read_key(p, "model", c.paths.model);
            read_key(p, "train_log", c.paths.train_log);
            read_key(p, "metrics", c.paths.metrics);
            read_key(p, "predictions", c.paths.predictions);
            read_key(p, "reports", c.paths.reports);
            read_key(p, "gradcheck", c.paths.gradcheck);
        }
        if (doc.contains("protocol")) {
            const auto& p = doc.at("protocol");
            check_keys(p, "protocol", {"observation_start_min", "observation_days", "horizon_days", "sampling_minutes"});
            read_key(p, "observation_start_min", c.protocol.observation_start);
            read_key(p, "observation_days", c.protocol.observation_days);
            read_key(p, "horizon_days", c.protocol.horizon_days);
            read_key(p, "sampling_minutes", c.protocol.sampling_minutes);
        }
        if (doc.contains("labeling")) {
            const auto& l = doc.at("labeling");
            check_keys(l, "labeling", {"failure_phrase", "severity"});
            read_key(l, "failure_phrase", c.labeling.failure_phrase);
            read_key(l, "severity", c.labeling.severity);
        }
        if (doc.contains("windowing")) {
            const auto& w = doc.at("windowing");
            check_keys(w, "windowing", {"k_max"});
            read_key(w, "k_max", c.windowing.k_max);
        }
        if (doc.contains("model")) {
            const auto& m = doc.at("model");
            check_keys(m, "model", {"encoder", "embedding_dim", "attention_dim", "hidden_size", "sequence_length"});
            if (m.contains("encoder")) c.model.encoder = parse_encoder_kind(m.at("encoder").get<std::string>());
            read_key(m, "embedding_dim", c.model.embedding_dim);
            read_key(m, "attention_dim", c.model.attention_dim);
            read_key(m, "hidden_size", c.model.hidden_size);
            read_key(m, "sequence_length", c.model.sequence_length);
        }
        if (doc.contains("train")) {
            const auto& t = doc.at("train");
            check_keys(t, "train", {"batch_size", "learning_rate", "epochs", "positive_class_weight", "optimizer",
                                    "clip_norm", "train_fraction", "validation_share", "gradcheck_devices"});
            read_key(t, "batch_size", c.train.batch_size);
            read_key(t, "learning_rate", c.train.learning_rate);
            read_key(t, "epochs", c.train.epochs);
            read_key(t, "positive_class_weight", c.train.positive_class_weight);
            if (t.contains("optimizer")) c.train.optimizer = parse_optimizer(t.at("optimizer").get<std::string>());
            read_key(t, "clip_norm", c.train.clip_norm);
            read_key(t, "train_fraction", c.train_fraction);
            read_key(t, "validation_share", c.validation_share);
            read_key(t, "gradcheck_devices", c.gradcheck_devices);
        }
        if (doc.contains("synth")) {
            const auto& s = doc.at("synth");
            check_keys(s, "synth", {"device_count", "positive_fraction", "spike_burst_rate", "max_bursts",
                                    "burst_length_min", "burst_length_max", "kpis_per_burst_min", "kpis_per_burst_max",
                                    "spike_probability", "background_sampling_minutes", "decoy_fraction",
                                    "signature_event_types", "kpi_baselines"});
            read_key(s, "device_count", c.synth.device_count);
            read_key(s, "positive_fraction", c.synth.positive_fraction);
            read_key(s, "spike_burst_rate", c.synth.spike_burst_rate);
            read_key(s, "max_bursts", c.synth.max_bursts);
            read_key(s, "burst_length_min", c.synth.burst_length_range.first);
            read_key(s, "burst_length_max", c.synth.burst_length_range.second);
            read_key(s, "kpis_per_burst_min", c.synth.kpis_per_burst.first);
            read_key(s, "kpis_per_burst_max", c.synth.kpis_per_burst.second);
            read_key(s, "spike_probability", c.synth.spike_probability);
            read_key(s, "background_sampling_minutes", c.synth.background_sampling_minutes);
            read_key(s, "decoy_fraction", c.synth.signature.decoy_fraction);
            read_key(s, "signature_event_types", c.synth.signature.event_types);
            if (s.contains("kpi_baselines")) {
                c.synth.kpi_baselines.clear();
                for (const auto& b : s.at("kpi_baselines"))
                    c.synth.kpi_baselines.push_back(
                        {b.at("kpi_name").get<std::string>(), b.at("mean").get<double>(), b.at("stddev").get<double>()});
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed config: ") + e.what());
    }
    c.synchronize();
    c.validate();
    return c;
}

json PipelineConfig::to_json() const {
    json baselines = json::array();
    for (const auto& b : synth.kpi_baselines)
        baselines.push_back({{"kpi_name", b.kpi_name}, {"mean", b.mean}, {"stddev", b.stddev}});
    return {
        {"seed", seed},
        {"report_format", report_format == ReportFormat::csv     ? "csv"
                          : report_format == ReportFormat::table ? "table"
                                                                 : "json"},
        {"paths",
         {{"dir", paths.dir.string()}, {"rules", paths.rules}, {"series", paths.series},
          {"incidents", paths.incidents}, {"signatures", paths.signatures}, {"events", paths.events},
          {"labels", paths.labels}, {"windows", paths.windows}, {"cluster_diagnostics", paths.cluster_diagnostics},
          {"split", paths.split}, {"model", paths.model}, {"train_log", paths.train_log},
          {"metrics", paths.metrics}, {"predictions", paths.predictions}, {"reports", paths.reports},
          {"gradcheck", paths.gradcheck}}},
        {"protocol",
         {{"observation_start_min", protocol.observation_start}, {"observation_days", protocol.observation_days},
          {"horizon_days", protocol.horizon_days}, {"sampling_minutes", protocol.sampling_minutes}}},
        {"labeling", {{"failure_phrase", labeling.failure_phrase}, {"severity", labeling.severity}}},
        {"windowing", {{"k_max", windowing.k_max}}},
        {"model",
         {{"encoder", failex::to_string(model.encoder)}, {"embedding_dim", model.embedding_dim},
          {"attention_dim", model.attention_dim}, {"hidden_size", model.hidden_size},
          {"sequence_length", model.sequence_length}}},
        {"train",
         {{"batch_size", train.batch_size}, {"learning_rate", train.learning_rate}, {"epochs", train.epochs},
          {"positive_class_weight", train.positive_class_weight}, {"optimizer", failex::to_string(train.optimizer)},
          {"clip_norm", train.clip_norm}, {"train_fraction", train_fraction}, {"validation_share", validation_share},
          {"gradcheck_devices", gradcheck_devices}}},
        {"synth",
         {{"device_count", synth.device_count}, {"positive_fraction", synth.positive_fraction},
          {"spike_burst_rate", synth.spike_burst_rate}, {"max_bursts", synth.max_bursts},
          {"burst_length_min", synth.burst_length_range.first}, {"burst_length_max", synth.burst_length_range.second},
          {"kpis_per_burst_min", synth.kpis_per_burst.first}, {"kpis_per_burst_max", synth.kpis_per_burst.second},
          {"spike_probability", synth.spike_probability},
          {"background_sampling_minutes", synth.background_sampling_minutes},
          {"decoy_fraction", synth.signature.decoy_fraction},
          {"signature_event_types", synth.signature.event_types}, {"kpi_baselines", baselines}}},
    };
}

PipelineConfig load_config(const std::optional<std::filesystem::path>& path) {
    if (!path) return PipelineConfig{};
    return PipelineConfig::from_json(read_json(*path));
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
    return hex;
}

void cmd_synth(const PipelineConfig& config, std::ostream& log) {
    log_inputs(log, config, "synth", {});
    const auto corpus = generate_synthetic(config.synth);

    const auto rules_path = config.resolve(config.paths.rules);
    auto rules_out = open_output(rules_path);
    write_rules(rules_out, corpus.rules);
    finish(rules_out, rules_path);

    const auto series_path = config.resolve(config.paths.series);
    auto series_out = open_output(series_path);
    write_series(series_out, corpus.series);
    finish(series_out, series_path);

    const auto incidents_path = config.resolve(config.paths.incidents);
    auto incidents_out = open_output(incidents_path);
    write_incidents(incidents_out, corpus.incidents);
    finish(incidents_out, incidents_path);

    const auto truth_path = config.resolve(config.paths.signatures);
    auto truth_out = open_output(truth_path);
    csv::write_row(truth_out, {"device_id", "positive", "has_burst", "burst_start_min", "burst_end_min"});
    std::size_t positives = 0;
    for (const auto& s : corpus.signatures) {
        positives += s.positive;
        csv::write_row(truth_out, {s.device_id, s.positive ? "1" : "0", s.has_burst ? "1" : "0",
                                   std::to_string(s.burst_start), std::to_string(s.burst_end)});
    }
    finish(truth_out, truth_path);

    log << "[synth] devices=" << corpus.signatures.size() << " positives=" << positives
        << " series=" << corpus.series.size() << " incidents=" << corpus.incidents.size() << '\n';
    log << "[synth] output " << series_path.string() << " fnv1a64=" << file_digest(series_path) << '\n';
}

void cmd_extract(const PipelineConfig& config, std::ostream& log) {
    const auto rules_path = config.resolve(config.paths.rules);
    const auto series_path = config.resolve(config.paths.series);
    const auto incidents_path = config.resolve(config.paths.incidents);
    log_inputs(log, config, "extract", {rules_path, series_path, incidents_path});
    require_input(series_path);

    const auto rules = load_rules(rules_path);
    const auto series = read_series(series_path);
    const auto extracted = extract_events(series, rules);
    if (extracted.unmatched_series)
        log << "[extract] warning: " << extracted.unmatched_series << " series have no matching rule\n";

    std::vector<Incident> incidents;
    if (std::filesystem::exists(incidents_path)) incidents = read_incidents(incidents_path);
    std::set<std::string> device_set;
    for (const auto& s : series) device_set.insert(s.device_id);
    const std::vector<std::string> devices(device_set.begin(), device_set.end());
    const auto labeled = label_devices(devices, extracted.events, incidents, config.protocol.window(), config.labeling);

    const auto events_path = config.resolve(config.paths.events);
    auto events_out = open_output(events_path);
    write_events(events_out, extracted.events);
    finish(events_out, events_path);

    const auto labels_path = config.resolve(config.paths.labels);
    auto labels_out = open_output(labels_path);
    write_labels(labels_out, labeled.records);
    finish(labels_out, labels_path);

    const auto& d = labeled.diagnostics;
    std::size_t positives = 0;
    for (const auto& r : labeled.records) positives += static_cast<std::size_t>(r.label);
    log << "[extract] events=" << extracted.events.size() << " devices=" << labeled.records.size()
        << " positives=" << positives << '\n';
    log << "[extract] incidents qualifying=" << d.qualifying << " outside_horizon=" << d.outside_horizon
        << " non_qualifying=" << d.non_qualifying << " unknown_device=" << d.unknown_device
        << " events_outside_observation=" << d.events_outside_observation << '\n';
}

void cmd_cluster(const PipelineConfig& config, std::ostream& log) {
    const auto events_path = config.resolve(config.paths.events);
    log_inputs(log, config, "cluster", {events_path});
    require_input(events_path);
    const auto events = read_events(events_path);

    std::vector<WindowSummary> summaries;
    json diagnostics = json::object();
    std::size_t begin = 0;
    std::size_t devices = 0;
    while (begin < events.size()) {
        std::size_t end = begin;
        while (end < events.size() && events[end].device_id == events[begin].device_id) ++end;
        const std::span<const AnomalousEvent> device_events(events.data() + begin, end - begin);
        KSelection selection;
        const auto windows = build_windows(device_events, config.windowing, &selection);
        for (const auto& w : windows)
            summaries.push_back({events[begin].device_id, w.window_id, w.start, w.duration, w.event_count()});
        if (config.cluster_diagnostics) {
            json curve = json::array();
            for (double b : selection.bic_by_k) curve.push_back(std::isfinite(b) ? json(b) : json(nullptr));
            diagnostics[events[begin].device_id] = {{"k", selection.best.k}, {"bic_by_k", curve}};
        }
        ++devices;
        begin = end;
    }

    const auto windows_path = config.resolve(config.paths.windows);
    auto out = open_output(windows_path);
    write_windows(out, summaries);
    finish(out, windows_path);
    if (config.cluster_diagnostics) write_json(config.resolve(config.paths.cluster_diagnostics), diagnostics);
    log << "[cluster] devices=" << devices << " windows=" << summaries.size() << '\n';
}

std::vector<DeviceSequence> load_sequences(const PipelineConfig& config, const Vocabulary& vocabulary,
                                           std::ostream& log) {
    const auto labels_path = config.resolve(config.paths.labels);
    const auto events_path = config.resolve(config.paths.events);
    const auto windows_path = config.resolve(config.paths.windows);
    for (const auto& p : {labels_path, events_path, windows_path}) require_input(p);
    log_inputs(log, config, "load", {labels_path, events_path, windows_path});

    auto records = read_labels(labels_path);
    const auto events = read_events(events_path);
    const auto summaries = read_windows(windows_path);

    std::map<std::string, std::vector<AnomalousEvent>> events_by_device;
    for (const auto& e : events) events_by_device[e.device_id].push_back(e);
    std::map<std::string, std::vector<WindowSummary>> windows_by_device;
    for (const auto& w : summaries) windows_by_device[w.device_id].push_back(w);

    std::sort(records.begin(), records.end(),
              [](const DeviceRecord& a, const DeviceRecord& b) { return a.device_id < b.device_id; });
    std::vector<DeviceSequence> sequences;
    sequences.reserve(records.size());
    for (auto& record : records) {
        record.events = std::move(events_by_device[record.device_id]);
        const auto windows = attach_events(windows_by_device[record.device_id], record.events);
        sequences.push_back(make_sequence(record, windows, vocabulary, config.model.sequence_length));
    }
    return sequences;
}

void cmd_train(const PipelineConfig& config, std::ostream& log) {
    const auto vocabulary = vocabulary_for(config);
    const auto sequences = load_sequences(config, vocabulary, log);
    log << "[train] seed=" << config.seed << " encoder=" << failex::to_string(config.model.encoder)
        << " epochs=" << config.train.epochs << " positive_weight=" << config.train.positive_class_weight << '\n';

    const auto split = split_dataset(sequences, derive_seed(config.seed, kSplitSeed), config.train_fraction,
                                     config.validation_share);
    write_json(config.resolve(config.paths.split),
               {{"train", ids_for(sequences, split.train)},
                {"validation", ids_for(sequences, split.validation)},
                {"test", ids_for(sequences, split.test)}});

    const auto training = select(sequences, split.train);
    const auto validation = select(sequences, split.validation);
    const auto initial = Model::initialize(vocabulary, config.model, derive_seed(config.seed, kInitSeed));

    const auto log_path = config.resolve(config.paths.train_log);
    auto train_log = open_output(log_path);
    csv::write_row(train_log, {"epoch", "train_loss"});
    const int every = std::max(1, config.train.epochs / 10);
    auto result = train(initial, training, config.train, [&](int epoch, double mean) {
        csv::write_row(train_log, {std::to_string(epoch + 1), csv::format_double(mean)});
        if ((epoch + 1) % every == 0 || epoch + 1 == config.train.epochs)
            log << "[train] epoch " << epoch + 1 << " loss " << mean << '\n';
    });
    finish(train_log, log_path);
    if (!validation.empty())
        log << "[train] validation loss "
            << batch_loss(result.model, validation, config.train.positive_class_weight) << '\n';
    save_model(result.model, config.resolve(config.paths.model));
    log << "[train] wrote " << config.resolve(config.paths.model).string() << '\n';
}

void cmd_eval(const PipelineConfig& config, std::ostream& log) {
    const auto model_path = config.resolve(config.paths.model);
    require_input(model_path);
    log_inputs(log, config, "eval", {model_path, config.resolve(config.paths.split)});
    const auto model = load_model(model_path);
    const auto sequences = load_sequences(config, model.vocabulary, log);
    const auto test = select(sequences, split_part(config, sequences, "test"));
    const auto metrics = evaluate(model, test);
    write_json(config.resolve(config.paths.metrics), metrics_to_json(metrics));
    log << "[eval] test devices=" << test.size() << " precision_minority=" << metrics.precision_minority
        << " f1_minority=" << metrics.f1_minority << " balanced_accuracy=" << metrics.balanced_accuracy << '\n';
}

void cmd_predict(const PipelineConfig& config, std::ostream& log) {
    const auto model_path = config.resolve(config.paths.model);
    require_input(model_path);
    log_inputs(log, config, "predict", {model_path});
    const auto model = load_model(model_path);
    const auto sequences = load_sequences(config, model.vocabulary, log);
    const auto path = config.resolve(config.paths.predictions);
    auto out = open_output(path);
    csv::write_row(out, {"device_id", "probability", "label"});
    for (const auto& p : predict_all(model, sequences))
        csv::write_row(out, {p.device_id, csv::format_double(p.probability), std::to_string(p.label)});
    finish(out, path);
    log << "[predict] devices=" << sequences.size() << '\n';
}

void cmd_explain(const PipelineConfig& config, std::ostream& log) {
    const auto model_path = config.resolve(config.paths.model);
    require_input(model_path);
    log_inputs(log, config, "explain", {model_path});
    const auto model = load_model(model_path);
    const auto sequences = load_sequences(config, model.vocabulary, log);
    std::vector<ExplanationReport> reports;
    double sparse = 0.0;
    std::size_t rows = 0;
    for (const auto& device : sequences) {
        if (config.explain_device && device.device_id != *config.explain_device) continue;
        reports.push_back(explain_device(model, device));
        sparse += sparsity(reports.back()) * static_cast<double>(reports.back().rows.size());
        rows += reports.back().rows.size();
    }
    if (config.explain_device && reports.empty())
        throw ValidationError("unknown device '" + *config.explain_device + "'");
    const auto path = config.resolve(config.paths.reports + report_extension(config.report_format));
    auto out = open_output(path);
    out << render_reports(reports, config.report_format);
    finish(out, path);
    log << "[explain] reports=" << reports.size() << " rows=" << rows
        << " share_below_0.01=" << (rows ? sparse / static_cast<double>(rows) : 0.0) << '\n';
}

void cmd_gradcheck(const PipelineConfig& config, std::ostream& log) {
    const auto model_path = config.resolve(config.paths.model);
    const bool trained = std::filesystem::exists(model_path);
    const auto vocabulary = trained ? Vocabulary() : vocabulary_for(config);
    const auto model = trained ? load_model(model_path)
                               : Model::initialize(vocabulary, config.model, derive_seed(config.seed, kInitSeed));
    const auto sequences = load_sequences(config, model.vocabulary, log);
    std::vector<DeviceSequence> batch;
    for (int label : {1, 0})
        for (const auto& s : sequences)
            if (s.label == label && batch.size() < config.gradcheck_devices / (label == 1 ? 2 : 1)) batch.push_back(s);
    GradientCheckOptions options;
    options.positive_weight = config.train.positive_class_weight;
    options.seed = derive_seed(config.seed, kCheckSeed);
    const auto report = gradient_check(model, batch, options);
    json groups = json::object();
    for (const auto& [name, error] : report.per_group) groups[name] = error;
    const bool passed = report.max_relative_error < 1e-4;
    write_json(config.resolve(config.paths.gradcheck),
               {{"model", trained ? "trained" : "initial"},
                {"devices", batch.size()},
                {"coordinates", report.coordinates},
                {"max_relative_error", report.max_relative_error},
                {"worst_group", report.worst_group},
                {"per_group", groups},
                {"passed", passed}});
    log << "[gradcheck] coordinates=" << report.coordinates << " max_relative_error=" << report.max_relative_error
        << " worst_group=" << report.worst_group << '\n';
    if (!passed) throw ValidationError("gradient check failed");
}

void cmd_all(const PipelineConfig& config, std::ostream& log) {
    cmd_synth(config, log);
    cmd_extract(config, log);
    cmd_cluster(config, log);
    cmd_train(config, log);
    cmd_eval(config, log);
    cmd_predict(config, log);
    cmd_explain(config, log);
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"synth", "extract", "cluster", "train", "eval",
                                                   "predict", "explain", "gradcheck", "all"};
    return names;
}

int run_command(const std::string& name, const PipelineConfig& config, std::ostream& log) {
    using Command = void (*)(const PipelineConfig&, std::ostream&);
    static const std::map<std::string, Command> commands = {
        {"synth", cmd_synth},     {"extract", cmd_extract}, {"cluster", cmd_cluster},
        {"train", cmd_train},     {"eval", cmd_eval},       {"predict", cmd_predict},
        {"explain", cmd_explain}, {"gradcheck", cmd_gradcheck}, {"all", cmd_all},
    };
    try {
        auto it = commands.find(name);
        if (it == commands.end()) throw ValidationError("unknown command '" + name + "'");
        config.validate();
        it->second(config, log);
        return 0;
    } catch (const IoError& e) {
        log << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        log << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace failex
