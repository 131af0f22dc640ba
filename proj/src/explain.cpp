#include "failex/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "failex/csv.hpp"
#include "failex/error.hpp"

namespace failex {
namespace {

const std::vector<std::string> kCsvHeader = {"device_id", "window_id", "start_min", "duration_min",
                                             "event_count", "event_type", "frequency", "contribution",
                                             "raw_coefficient"};
const std::vector<std::string> kTableHeader = {"Window", "Start timestamp", "Duration", "# Events",
                                               "Event", "Frequency", "Contribution"};

std::string day_clock(Minutes start, Minutes origin) {
    const Minutes offset = start - origin;
    const Minutes day = offset >= 0 ? offset / kMinutesPerDay : -((-offset + kMinutesPerDay - 1) / kMinutesPerDay);
    const Minutes minute_of_day = offset - day * kMinutesPerDay;
    char buf[48];
    std::snprintf(buf, sizeof buf, "Day %lld %lld:%02lld", static_cast<long long>(day + 1),
                  static_cast<long long>(minute_of_day / 60), static_cast<long long>(minute_of_day % 60));
    return buf;
}

void append_table(std::ostringstream& out, std::span<const ExplanationReport> reports) {
    std::vector<std::vector<std::string>> cells;
    cells.push_back(kTableHeader);
    for (const auto& report : reports) {
        for (const auto& row : report.rows) {
            cells.push_back({std::to_string(row.window_id), day_clock(row.start, report.observation_start),
                             std::to_string(row.duration) + " min", std::to_string(row.event_count),
                             row.event_type, std::to_string(row.frequency),
                             format_contribution(row.contribution)});
        }
    }
    std::vector<std::size_t> width(kTableHeader.size(), 0);
    for (const auto& line : cells)
        for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
    for (const auto& line : cells) {
        std::string text;
        for (std::size_t c = 0; c < line.size(); ++c) {
            text += line[c];
            if (c + 1 < line.size()) text += std::string(width[c] - line[c].size() + 2, ' ');
        }
        out << text << '\n';
    }
}

}  // namespace

ExplanationReport explain_device(const Model& model, const DeviceSequence& device) {
    ExplanationReport report;
    report.device_id = device.device_id;
    report.observation_start = device.observation_start;
    report.probability = predict(model, device);

    const auto encodings = encode_device(model, device);
    const auto& embeddings = model.params.representation.embeddings;
    std::vector<double> salience;
    for (std::size_t w = 0; w < device.windows.size(); ++w) {
        const auto& slot = device.windows[w];
        for (const auto& term : encodings[w].terms) {
            ExplanationRow row;
            row.window_id = slot.window_id;
            row.start = slot.start;
            row.duration = slot.duration;
            row.event_count = slot.event_count;
            row.event_type = model.vocabulary.name(static_cast<std::size_t>(term.type));
            row.frequency = term.frequency;
            row.raw_coefficient = term.coefficient;
            report.rows.push_back(std::move(row));
            salience.push_back(std::abs(term.coefficient) * embeddings.row(term.type).norm());
        }
    }
    const double top = salience.empty() ? 0.0 : *std::max_element(salience.begin(), salience.end());
    for (std::size_t i = 0; i < report.rows.size(); ++i)
        report.rows[i].contribution = top > 0.0 ? salience[i] / top : 0.0;

    std::stable_sort(report.rows.begin(), report.rows.end(), [](const ExplanationRow& a, const ExplanationRow& b) {
        return std::tie(a.start, a.event_type) < std::tie(b.start, b.event_type);
    });
    return report;
}

std::vector<Vector> reconstruct_encodings(const Model& model, const ExplanationReport& report) {
    const auto& embeddings = model.params.representation.embeddings;
    std::vector<Vector> out;
    int current = -1;
    Minutes current_start = 0;
    for (const auto& row : report.rows) {
        if (out.empty() || row.window_id != current || row.start != current_start) {
            out.push_back(Vector::Zero(embeddings.dimension()));
            current = row.window_id;
            current_start = row.start;
        }
        out.back() += row.raw_coefficient * embeddings.row(model.vocabulary.index_of(row.event_type));
    }
    return out;
}

double replay_probability(const Model& model, const ExplanationReport& report) {
    const auto encodings = reconstruct_encodings(model, report);
    const auto padded = pad_sequence(encodings, model.sequence_length, model.params.lstm.input_size());
    return forward(padded, model.params.lstm).probability;
}

double sparsity(const ExplanationReport& report) {
    if (report.rows.empty()) return 0.0;
    const auto small = std::count_if(report.rows.begin(), report.rows.end(),
                                     [](const ExplanationRow& r) { return r.contribution < 0.01; });
    return static_cast<double>(small) / static_cast<double>(report.rows.size());
}

ReportFormat parse_report_format(const std::string& text) {
    if (text == "csv") return ReportFormat::csv;
    if (text == "table") return ReportFormat::table;
    if (text == "json") return ReportFormat::json;
    throw ValidationError("unknown report format '" + text + "' (expected csv, table or json)");
}

std::string format_contribution(double contribution) {
    if (contribution < 0.01) return "<0.01";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", contribution);
    return buf;
}

std::string render_reports(std::span<const ExplanationReport> reports, ReportFormat format) {
    std::ostringstream out;
    switch (format) {
        case ReportFormat::csv:
            csv::write_row(out, kCsvHeader);
            for (const auto& report : reports)
                for (const auto& row : report.rows)
                    csv::write_row(out, {report.device_id, std::to_string(row.window_id), std::to_string(row.start),
                                         std::to_string(row.duration), std::to_string(row.event_count),
                                         row.event_type, std::to_string(row.frequency),
                                         format_contribution(row.contribution),
                                         csv::format_double(row.raw_coefficient)});
            break;
        case ReportFormat::table:
            append_table(out, reports);
            break;
        case ReportFormat::json: {
            nlohmann::json doc = nlohmann::json::array();
            for (const auto& report : reports) {
                nlohmann::json rows = nlohmann::json::array();
                for (const auto& row : report.rows)
                    rows.push_back({{"window_id", row.window_id},
                                    {"start_min", row.start},
                                    {"duration_min", row.duration},
                                    {"event_count", row.event_count},
                                    {"event_type", row.event_type},
                                    {"frequency", row.frequency},
                                    {"contribution", row.contribution},
                                    {"raw_coefficient", row.raw_coefficient}});
                doc.push_back({{"device_id", report.device_id},
                               {"probability", report.probability},
                               {"sparsity", sparsity(report)},
                               {"rows", std::move(rows)}});
            }
            out << doc.dump(1) << '\n';
            break;
        }
    }
    return out.str();
}

std::string render_report(const ExplanationReport& report, ReportFormat format) {
    return render_reports(std::span<const ExplanationReport>(&report, 1), format);
}

}  // namespace failex
