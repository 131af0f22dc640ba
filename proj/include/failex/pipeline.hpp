#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "failex/dataset.hpp"
#include "failex/explain.hpp"
#include "failex/network.hpp"
#include "failex/synthetic.hpp"
#include "failex/windowing.hpp"

namespace failex {

/// Artifact locations; relative paths resolve against `dir`.
struct PipelinePaths {
    std::filesystem::path dir = "artifacts";
    std::string rules = "rules.csv";
    std::string series = "series.csv";
    std::string incidents = "incidents.csv";
    std::string signatures = "signatures.csv";
    std::string events = "events.csv";
    std::string labels = "labels.csv";
    std::string windows = "windows.csv";
    std::string cluster_diagnostics = "cluster_diagnostics.json";
    std::string split = "split.json";
    std::string model = "model.json";
    std::string train_log = "train_log.csv";
    std::string metrics = "metrics.json";
    std::string predictions = "predictions.csv";
    std::string reports = "reports";  // extension follows the format
    std::string gradcheck = "gradcheck.json";
};

struct Protocol {
    Minutes observation_start = 25463520;  // 2018-06-01T00:00Z
    int observation_days = 14;
    int horizon_days = 3;
    Minutes sampling_minutes = 5;

    ObservationWindow window() const;
};

struct PipelineConfig {
    std::uint64_t seed = 7;
    PipelinePaths paths;
    Protocol protocol;
    LabelingOptions labeling;
    WindowingOptions windowing;
    ModelConfig model;
    TrainConfig train;
    double train_fraction = 0.8;
    double validation_share = 0.5;
    SyntheticConfig synth;
    ReportFormat report_format = ReportFormat::csv;
    bool cluster_diagnostics = false;
    std::optional<std::string> explain_device;
    std::size_t gradcheck_devices = 8;

    PipelineConfig();

    /// Missing keys keep their defaults; unknown keys are rejected.
    static PipelineConfig from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;

    std::filesystem::path resolve(const std::string& name) const;
    void validate() const;

    /// Recomputes seeds and protocol-dependent fields after edits.
    void synchronize();
};

PipelineConfig load_config(const std::optional<std::filesystem::path>& path);

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

void cmd_synth(const PipelineConfig& config, std::ostream& log);
void cmd_extract(const PipelineConfig& config, std::ostream& log);
void cmd_cluster(const PipelineConfig& config, std::ostream& log);
void cmd_train(const PipelineConfig& config, std::ostream& log);
void cmd_eval(const PipelineConfig& config, std::ostream& log);
void cmd_predict(const PipelineConfig& config, std::ostream& log);
void cmd_explain(const PipelineConfig& config, std::ostream& log);
void cmd_gradcheck(const PipelineConfig& config, std::ostream& log);
void cmd_all(const PipelineConfig& config, std::ostream& log);

const std::vector<std::string>& command_names();

/// Runs a command by name. 0 on success, 1 on validation errors, 2 on I/O errors.
int run_command(const std::string& name, const PipelineConfig& config, std::ostream& log);

/// Device sequences rebuilt from the labels, events and windows artifacts.
std::vector<DeviceSequence> load_sequences(const PipelineConfig& config, const Vocabulary& vocabulary,
                                           std::ostream& log);

}  // namespace failex
