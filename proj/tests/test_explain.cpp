#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "failex/csv.hpp"
#include "failex/error.hpp"
#include "failex/explain.hpp"

using namespace failex;

namespace {

constexpr Minutes kStart = 25463520;
constexpr Minutes kEnd = kStart + 14 * kMinutesPerDay;
constexpr Minutes kHorizon = 3 * kMinutesPerDay;

Model small_model(std::uint64_t seed, EncoderKind encoder = EncoderKind::attentive) {
    ModelConfig config;
    config.encoder = encoder;
    config.embedding_dim = 6;
    config.attention_dim = 4;
    config.hidden_size = 5;
    return Model::initialize(Vocabulary({"Read response time", "Write response time", "Zero buffer credit"}), config,
                             seed);
}

WindowSlot slot(int id, Minutes start, Minutes duration, std::vector<TypeCount> counts) {
    WindowSlot s;
    s.window_id = id;
    s.start = start;
    s.duration = duration;
    s.bag.tau = start + duration;
    s.bag.counts = std::move(counts);
    for (const auto& c : s.bag.counts) s.event_count += static_cast<std::size_t>(c.frequency);
    return s;
}

DeviceSequence device(std::vector<WindowSlot> windows) {
    DeviceSequence d;
    d.device_id = "dev-0001";
    d.label = 1;
    d.observation_start = kStart;
    d.observation_end = kEnd;
    d.horizon = kHorizon;
    d.windows = std::move(windows);
    return d;
}

DeviceSequence random_device(std::mt19937_64& gen) {
    std::vector<WindowSlot> windows;
    const int count = 1 + static_cast<int>(gen() % 8);
    for (int w = 0; w < count; ++w) {
        std::vector<TypeCount> counts;
        for (int t = 0; t < 3; ++t)
            if (gen() % 2) counts.push_back({t, 1 + static_cast<int>(gen() % 9)});
        if (counts.empty()) counts.push_back({1, 1});
        windows.push_back(slot(w + 1, kStart + w * 2000 + static_cast<Minutes>(gen() % 1000), 60, counts));
    }
    return device(windows);
}

}  // namespace

TEST_CASE("single window single type gets the whole salience") {
    const auto model = small_model(1);
    const auto report = explain_device(model, device({slot(1, kStart + 100, 30, {{1, 4}})}));
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].event_type == "Write response time");
    CHECK(report.rows[0].frequency == 4);
    CHECK(report.rows[0].contribution == 1.0);
    CHECK(report.rows[0].raw_coefficient > 0.0);
    CHECK(report.probability == predict(model, device({slot(1, kStart + 100, 30, {{1, 4}})})));
}

TEST_CASE("device without windows has an empty report") {
    const auto model = small_model(2);
    const auto report = explain_device(model, device({}));
    CHECK(report.rows.empty());
    CHECK(report.probability == doctest::Approx(sigmoid(model.params.lstm.head_bias)).epsilon(1e-15));
    CHECK(sparsity(report) == 0.0);
    CHECK(render_report(report, ReportFormat::csv) ==
          "device_id,window_id,start_min,duration_min,event_count,event_type,frequency,contribution,raw_coefficient\n");
    const auto table = render_report(report, ReportFormat::table);
    CHECK(std::count(table.begin(), table.end(), '\n') == 1);
}

TEST_CASE("rows are one per window and type, sorted by start then type") {
    const auto model = small_model(3);
    const auto d = device({slot(2, kStart + 5000, 10, {{2, 1}, {0, 3}}), slot(1, kStart + 100, 30, {{1, 2}})});
    const auto report = explain_device(model, d);
    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].window_id == 1);
    CHECK(report.rows[1].event_type == "Read response time");
    CHECK(report.rows[2].event_type == "Zero buffer credit");
    CHECK(report.rows[1].frequency + report.rows[2].frequency == static_cast<int>(report.rows[1].event_count));
    double top = 0.0;
    for (const auto& row : report.rows) {
        CHECK(row.contribution >= 0.0);
        CHECK(row.contribution <= 1.0);
        top = std::max(top, row.contribution);
    }
    CHECK(top == 1.0);
}

TEST_CASE("contribution formatting") {
    CHECK(format_contribution(0.0) == "<0.01");
    CHECK(format_contribution(0.00999) == "<0.01");
    CHECK(format_contribution(0.01) == "0.010");
    CHECK(format_contribution(0.8) == "0.800");
    CHECK(format_contribution(1.0) == "1.000");
}

TEST_CASE("table has seven columns in report order") {
    const auto model = small_model(4);
    const auto report =
        explain_device(model, device({slot(1, kStart + 1440 + 75, 30, {{1, 2}}), slot(2, kStart + 9000, 5, {{0, 1}})}));
    const auto text = render_report(report, ReportFormat::table);
    std::istringstream lines(text);
    std::string header, first;
    std::getline(lines, header);
    std::getline(lines, first);
    CHECK(header.find("Window") == 0);
    std::size_t last = 0;
    for (const char* column : {"Window", "Start timestamp", "Duration", "# Events", "Event", "Frequency", "Contribution"}) {
        const auto at = header.find(column, last);
        REQUIRE(at != std::string::npos);
        last = at;
    }
    CHECK(first.find("Day 2 1:15") != std::string::npos);
    CHECK(first.find("30 min") != std::string::npos);
}

TEST_CASE("csv and json renderings parse back") {
    const auto model = small_model(5);
    std::mt19937_64 gen(6);
    const auto report = explain_device(model, random_device(gen));
    std::istringstream in(render_report(report, ReportFormat::csv));
    const auto rows = csv::read(in, "reports.csv",
                                {"device_id", "window_id", "start_min", "duration_min", "event_count", "event_type",
                                 "frequency", "contribution", "raw_coefficient"});
    REQUIRE(rows.size() == report.rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        CHECK(csv::parse_double(rows[i], 8, "reports.csv") == report.rows[i].raw_coefficient);

    const auto doc = nlohmann::json::parse(render_report(report, ReportFormat::json));
    REQUIRE(doc.size() == 1);
    CHECK(doc[0]["device_id"] == "dev-0001");
    CHECK(doc[0]["rows"].size() == report.rows.size());
}

TEST_CASE("rendering is byte-identical across calls") {
    const auto model = small_model(7);
    std::mt19937_64 gen(8);
    const auto report = explain_device(model, random_device(gen));
    for (auto format : {ReportFormat::csv, ReportFormat::table, ReportFormat::json})
        CHECK(render_report(report, format) == render_report(report, format));
    CHECK(render_report(explain_device(model, random_device(gen)), ReportFormat::csv) !=
          render_report(report, ReportFormat::csv));
}

TEST_CASE("unknown report format") {
    CHECK_THROWS_AS(parse_report_format("xml"), ValidationError);
    CHECK(parse_report_format("table") == ReportFormat::table);
}

TEST_CASE("report coefficients reproduce encodings and the prediction") {
    std::mt19937_64 gen(9);
    for (int trial = 0; trial < 50; ++trial) {
        for (auto encoder : {EncoderKind::attentive, EncoderKind::plain}) {
            const auto model = small_model(100 + trial, encoder);
            const auto d = random_device(gen);
            const auto report = explain_device(model, d);
            const auto rebuilt = reconstruct_encodings(model, report);
            const auto direct = encode_device(model, d);
            REQUIRE(rebuilt.size() == direct.size());
            for (std::size_t w = 0; w < direct.size(); ++w)
                CHECK((rebuilt[w] - direct[w].w).cwiseAbs().maxCoeff() < 1e-10);
            CHECK(std::abs(replay_probability(model, report) - report.probability) < 1e-9);
        }
    }
}

TEST_CASE("moving a window earlier shrinks its coefficients") {
    auto model = small_model(10);
    model.params.representation.decay.sigma_raw.setConstant(softplus_inverse(0.8));
    const auto recent = device({slot(1, kEnd - 600, 60, {{0, 2}, {1, 3}})});
    auto older = recent;
    older.windows[0].start -= 10 * kMinutesPerDay;
    older.windows[0].bag.tau -= 10 * kMinutesPerDay;
    const auto a = explain_device(model, recent);
    const auto b = explain_device(model, older);
    for (std::size_t i = 0; i < a.rows.size(); ++i)
        CHECK(std::abs(b.rows[i].raw_coefficient) < std::abs(a.rows[i].raw_coefficient));
}

TEST_CASE("sparsity counts rows below one hundredth") {
    ExplanationReport report;
    for (double c : {1.0, 0.5, 0.009, 0.0}) report.rows.push_back({1, 0, 0, 1, "A", 1, c, c});
    CHECK(sparsity(report) == 0.5);
}
