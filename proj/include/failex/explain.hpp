#pragma once

#include <span>
#include <string>
#include <vector>

#include "failex/network.hpp"

namespace failex {

struct ExplanationRow {
    int window_id = 0;
    Minutes start = 0;
    Minutes duration = 0;
    std::size_t event_count = 0;
    std::string event_type;
    int frequency = 0;
    double contribution = 0.0;     // salience normalized to [0, 1] over the device
    double raw_coefficient = 0.0;  // coefficient of the type's embedding in w_r
};

struct ExplanationReport {
    std::string device_id;
    double probability = 0.0;
    Minutes observation_start = 0;
    std::vector<ExplanationRow> rows;  // sorted by (window start, event_type)
};

/// One row per (window, unique event type). Salience is
/// |c_x| * ||v_x|| divided by the device maximum of the same quantity.
ExplanationReport explain_device(const Model& model, const DeviceSequence& device);

/// Rebuilds each window encoding as sum_x c_x v_x from the report rows.
std::vector<Vector> reconstruct_encodings(const Model& model, const ExplanationReport& report);

/// Runs the LSTM on reconstructed encodings.
double replay_probability(const Model& model, const ExplanationReport& report);

/// Fraction of rows whose contribution is below 0.01. Zero for an empty report.
double sparsity(const ExplanationReport& report);

enum class ReportFormat { csv, table, json };

ReportFormat parse_report_format(const std::string& text);  // throws ValidationError

/// Deterministic rendering; contributions below 0.01 print as "<0.01".
std::string render_report(const ExplanationReport& report, ReportFormat format);
std::string render_reports(std::span<const ExplanationReport> reports, ReportFormat format);

/// "<0.01" or the value with three decimals.
std::string format_contribution(double contribution);

}  // namespace failex
