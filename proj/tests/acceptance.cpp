// Acceptance suite: one PASS/FAIL line per criterion. With a results path the lines
// are also written there and the per-criterion ctest entries decide; otherwise the
// exit status is the number of failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "failex/explain.hpp"
#include "failex/model_io.hpp"
#include "failex/pipeline.hpp"
#include "failex/rng.hpp"

using namespace failex;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, value);
    return buf;
}

double segment_ssq(const std::vector<double>& x, std::size_t begin, std::size_t end) {
    double mean = 0.0;
    for (std::size_t i = begin; i < end; ++i) mean += x[i];
    mean /= static_cast<double>(end - begin);
    double ssq = 0.0;
    for (std::size_t i = begin; i < end; ++i) ssq += (x[i] - mean) * (x[i] - mean);
    return ssq;
}

double exhaustive_ssq(const std::vector<double>& x, int k) {
    const std::size_t n = x.size();
    double best = std::numeric_limits<double>::infinity();
    // Bit i set: a cut between i and i + 1.
    for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
        if (std::popcount(mask) != k - 1) continue;
        double total = 0.0;
        std::size_t begin = 0;
        for (std::size_t i = 0; i + 1 < n; ++i)
            if (mask & (1u << i)) {
                total += segment_ssq(x, begin, i + 1);
                begin = i + 1;
            }
        total += segment_ssq(x, begin, n);
        best = std::min(best, total);
    }
    return best;
}

Outcome clustering_oracle() {
    const auto start = Clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (int instance = 0; instance < 500; ++instance) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(1, 12));
        const int k = static_cast<int>(rng.uniform_int(1, std::min<std::int64_t>(4, static_cast<std::int64_t>(n))));
        std::vector<double> x(n);
        for (auto& v : x) v = rng.bernoulli(0.3) ? static_cast<double>(rng.uniform_int(0, 5)) : rng.uniform(-1e3, 1e3);
        std::sort(x.begin(), x.end());
        worst = std::max(worst, std::abs(ckmeans_fixed_k(x, k).within_ssq - exhaustive_ssq(x, k)));
    }
    const double elapsed = seconds_since(start);
    return {worst < 1e-9 && elapsed < 10.0,
            "500 instances, max |dssq| " + fmt("%.3g", worst) + ", " + fmt("%.2f", elapsed) + " s"};
}

Outcome bic_recovery() {
    const auto start = Clock::now();
    int hits = 0;
    for (int instance = 0; instance < 100; ++instance) {
        Rng rng(derive_seed(202, static_cast<std::uint64_t>(instance)));
        std::vector<double> x;
        double center = rng.uniform(0.0, kMinutesPerDay);
        for (int group = 0; group < 3; ++group) {
            const auto size = rng.uniform_int(5, 40);
            const double spread = rng.uniform(5.0, 45.0);
            for (std::int64_t i = 0; i < size; ++i) x.push_back(5.0 * std::round((center + spread * rng.normal(0.0, 1.0)) / 5.0));
            center += rng.uniform(2.0, 5.0) * kMinutesPerDay;
        }
        std::sort(x.begin(), x.end());
        hits += select_k_bic(x, 25).k == 3;
    }
    const double elapsed = seconds_since(start);
    return {hits >= 95 && elapsed < 10.0,
            std::to_string(hits) + "/100 runs select k = 3, " + fmt("%.2f", elapsed) + " s"};
}

RepresentationParams random_params(Rng& rng, std::size_t vocabulary, int s, int a) {
    auto p = RepresentationParams::initialize(vocabulary, s, a, rng.bits());
    for (Eigen::Index i = 0; i < p.decay.theta.size(); ++i) {
        p.decay.theta[i] = 2.0 * rng.normal(0.0, 1.0);
        p.decay.sigma_raw[i] = 2.0 * rng.normal(0.0, 1.0);
    }
    p.projection.query *= rng.uniform(0.5, 4.0);
    return p;
}

EventBag random_bag(Rng& rng, int vocabulary, Minutes end) {
    EventBag bag;
    for (int type = 0; type < vocabulary; ++type)
        if (rng.bernoulli(0.4)) bag.counts.push_back({type, static_cast<int>(rng.uniform_int(1, 30))});
    if (bag.counts.empty()) bag.counts.push_back({static_cast<int>(rng.uniform_int(0, vocabulary - 1)), 1});
    bag.tau = end - rng.uniform_int(0, 14 * kMinutesPerDay);
    return bag;
}

Outcome decomposition_identity() {
    Rng rng(303);
    constexpr Minutes end = 25463520 + 14 * kMinutesPerDay;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto params = random_params(rng, 15, 16, 16);
        const auto bag = random_bag(rng, 15, end);
        const auto enc = encode_window_attentive(bag, end, 3 * kMinutesPerDay, params);
        const auto att = attend(bag, params.embeddings, params.projection);
        const auto n = bag.counts.size();
        Vector direct = Vector::Zero(16);
        for (std::size_t i = 0; i < n; ++i) {
            const double I = contribution(bag.counts[i].type, enc.delta_minutes, params.decay);
            for (std::size_t j = 0; j < n; ++j)
                direct += bag.counts[i].frequency * I * att.alpha(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                          params.embeddings.row(bag.counts[j].type);
        }
        Vector regrouped = Vector::Zero(16);
        for (const auto& term : enc.terms) regrouped += term.coefficient * params.embeddings.row(term.type);
        worst = std::max({worst, (direct - regrouped).cwiseAbs().maxCoeff(), (enc.w - regrouped).cwiseAbs().maxCoeff()});
    }
    return {worst < 1e-10, "1000 windows, max discrepancy " + fmt("%.3g", worst)};
}

Outcome attention_decay_invariants() {
    Rng rng(404);
    constexpr Minutes end = 25463520 + 14 * kMinutesPerDay;
    double worst_row = 0.0;
    std::size_t out_of_range = 0, not_decreasing = 0, draws = 0;
    for (int trial = 0; trial < 2000; ++trial, ++draws) {
        const auto params = random_params(rng, 15, 16, 16);
        const auto att = attend(random_bag(rng, 15, end), params.embeddings, params.projection);
        for (Eigen::Index r = 0; r < att.alpha.rows(); ++r) worst_row = std::max(worst_row, std::abs(att.alpha.row(r).sum() - 1.0));

        const int type = static_cast<int>(rng.uniform_int(0, 14));
        double d1 = rng.uniform(0.0, 17.0 * kMinutesPerDay), d2 = rng.uniform(0.0, 17.0 * kMinutesPerDay);
        if (d1 > d2) std::swap(d1, d2);
        if (d2 - d1 < 1.0) d2 = d1 + 1.0;
        const double i1 = contribution(type, d1, params.decay), i2 = contribution(type, d2, params.decay);
        out_of_range += !(i1 > 0.0 && i1 < 1.0) + !(i2 > 0.0 && i2 < 1.0);
        if (params.decay.sigma(type) > 0.0) not_decreasing += !(i1 > i2);
    }
    return {worst_row < 1e-12 && out_of_range == 0 && not_decreasing == 0,
            std::to_string(draws) + " draws, max |row sum - 1| " + fmt("%.3g", worst_row) + ", I outside (0,1): " +
                std::to_string(out_of_range) + ", non-decreasing pairs: " + std::to_string(not_decreasing)};
}

// A pipeline run on disk, trained with one or both encoders.
struct Run {
    PipelineConfig config;
    std::vector<DeviceSequence> sequences;
    std::vector<std::string> test_ids;
};

PipelineConfig config_for(std::uint64_t seed, const std::string& dir) {
    PipelineConfig config;
    config.seed = seed;
    config.paths.dir = fs::path("acceptance_artifacts") / dir;
    config.synchronize();
    return config;
}

void require_ok(int code, const std::string& what) {
    if (code != 0) throw std::runtime_error(what + " failed with exit code " + std::to_string(code));
}

std::vector<std::string> read_test_ids(const PipelineConfig& config) {
    std::ifstream in(config.resolve(config.paths.split));
    return nlohmann::json::parse(in).at("test").get<std::vector<std::string>>();
}

std::vector<DeviceSequence> test_devices(const Run& run) {
    std::set<std::string> ids(run.test_ids.begin(), run.test_ids.end());
    std::vector<DeviceSequence> out;
    for (const auto& s : run.sequences)
        if (ids.count(s.device_id)) out.push_back(s);
    return out;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

struct Comparison {
    std::vector<double> attentive, plain;
    std::vector<std::pair<Model, Run>> runs;  // attentive models
};

Comparison compare_encoders(const std::vector<std::uint64_t>& seeds, std::ostream& log) {
    Comparison out;
    for (auto seed : seeds) {
        auto config = config_for(seed, "seed_" + std::to_string(seed));
        fs::remove_all(config.paths.dir);
        for (const char* stage : {"synth", "extract", "cluster"}) require_ok(run_command(stage, config, log), stage);
        for (auto encoder : {EncoderKind::attentive, EncoderKind::plain}) {
            auto c = config;
            c.model.encoder = encoder;
            c.paths.model = "model_" + to_string(encoder) + ".json";
            c.paths.metrics = "metrics_" + to_string(encoder) + ".json";
            c.paths.train_log = "train_log_" + to_string(encoder) + ".csv";
            require_ok(run_command("train", c, log), "train");
            require_ok(run_command("eval", c, log), "eval");
            std::ifstream in(c.resolve(c.paths.metrics));
            const double bacc = nlohmann::json::parse(in).at("balanced_accuracy").get<double>();
            (encoder == EncoderKind::attentive ? out.attentive : out.plain).push_back(bacc);
            if (encoder == EncoderKind::attentive) {
                auto model = load_model(c.resolve(c.paths.model));
                Run run{c, load_sequences(c, model.vocabulary, log), read_test_ids(c)};
                out.runs.emplace_back(std::move(model), std::move(run));
            }
        }
    }
    return out;
}

double mean(const std::vector<double>& v) {
    double total = 0.0;
    for (double x : v) total += x;
    return v.empty() ? 0.0 : total / static_cast<double>(v.size());
}

bool is_signature(const PipelineConfig& config, const std::string& type) {
    const auto& types = config.synth.signature.event_types;
    return std::find(types.begin(), types.end(), type) != types.end();
}

Outcome explanation_sanity(const Comparison& cmp) {
    std::size_t eligible = 0, hits = 0;
    for (const auto& [model, run] : cmp.runs) {
        for (const auto& device : test_devices(run)) {
            if (device.label != 1) continue;
            auto report = explain_device(model, device);
            if (report.probability < kDecisionThreshold) continue;
            ++eligible;
            std::stable_sort(report.rows.begin(), report.rows.end(),
                             [](const ExplanationRow& a, const ExplanationRow& b) { return a.contribution > b.contribution; });
            const bool top_two = report.rows.size() >= 2 && is_signature(run.config, report.rows[0].event_type) &&
                                 is_signature(run.config, report.rows[1].event_type);
            hits += top_two;
        }
    }
    const double share = eligible ? static_cast<double>(hits) / static_cast<double>(eligible) : 0.0;
    return {eligible > 0 && share >= 0.8,
            std::to_string(hits) + "/" + std::to_string(eligible) +
                " correctly predicted positive test devices have signature types as both top-2 rows (" +
                fmt("%.3f", share) + ")"};
}

Outcome temporal_sensitivity(const Comparison& cmp) {
    std::size_t tested = 0, passed = 0;
    constexpr Minutes shift = 10 * kMinutesPerDay;
    for (const auto& [model, run] : cmp.runs) {
        const auto& decay = model.params.representation.decay;
        for (const auto& device : test_devices(run)) {
            if (device.label != 1) continue;
            auto shifted = device;
            std::vector<std::size_t> moved;
            bool sigma_positive = true;
            for (std::size_t w = 0; w < shifted.windows.size(); ++w) {
                auto& slot = shifted.windows[w];
                const bool signature = std::any_of(slot.bag.counts.begin(), slot.bag.counts.end(), [&](const TypeCount& c) {
                    return is_signature(run.config, model.vocabulary.name(static_cast<std::size_t>(c.type)));
                });
                if (!signature) continue;
                for (const auto& c : slot.bag.counts)
                    if (is_signature(run.config, model.vocabulary.name(static_cast<std::size_t>(c.type))))
                        sigma_positive = sigma_positive && decay.sigma(c.type) > 0.0;
                slot.start -= shift;
                slot.bag.tau -= shift;
                moved.push_back(w);
            }
            if (moved.empty() || !sigma_positive) continue;
            ++tested;
            const auto before = encode_device(model, device);
            const auto after = encode_device(model, shifted);
            bool coefficients_drop = true;
            for (auto w : moved)
                for (std::size_t t = 0; t < before[w].terms.size(); ++t)
                    coefficients_drop = coefficients_drop &&
                                        std::abs(after[w].terms[t].coefficient) < std::abs(before[w].terms[t].coefficient);
            std::stable_sort(shifted.windows.begin(), shifted.windows.end(),
                             [](const WindowSlot& a, const WindowSlot& b) { return a.bag.tau < b.bag.tau; });
            const bool probability_drops = predict(model, shifted) < predict(model, device);
            passed += coefficients_drop && probability_drops;
        }
    }
    const double share = tested ? static_cast<double>(passed) / static_cast<double>(tested) : 0.0;
    return {tested > 0 && share >= 0.9,
            std::to_string(passed) + "/" + std::to_string(tested) +
                " positive test devices lose coefficient and probability after a 10-day shift (" + fmt("%.3f", share) + ")"};
}

Outcome faithfulness(const Comparison& cmp) {
    double worst = 0.0;
    std::size_t devices = 0;
    for (const auto& [model, run] : cmp.runs)
        for (const auto& device : test_devices(run)) {
            const auto report = explain_device(model, device);
            worst = std::max(worst, std::abs(replay_probability(model, report) - report.probability));
            ++devices;
        }
    return {devices > 0 && worst < 1e-9,
            std::to_string(devices) + " test devices, max |replayed - predicted| " + fmt("%.3g", worst)};
}

Outcome gradient_correctness(const Comparison& cmp) {
    const auto& [trained, run] = cmp.runs.front();
    std::vector<DeviceSequence> batch;
    for (int label : {1, 0})
        for (const auto& s : run.sequences)
            if (s.label == label && std::count_if(batch.begin(), batch.end(), [&](auto& b) { return b.label == label; }) < 4)
                batch.push_back(s);
    const auto initial = Model::initialize(trained.vocabulary, run.config.model, 99);
    GradientCheckOptions options;
    options.positive_weight = run.config.train.positive_class_weight;
    const auto at_init = gradient_check(initial, batch, options);
    const auto at_trained = gradient_check(trained, batch, options);

    auto faulty = options;
    faulty.analytic = [](const Model& m, std::span<const DeviceSequence> b, double weight, Parameters& grad) {
        const double value = loss_and_gradient(m, b, weight, grad);
        const int h = m.params.lstm.hidden_size();
        const int row = static_cast<int>(Gate::forget) * h;
        grad.lstm.input_weights.middleRows(row, h) *= -1.0;
        grad.lstm.recurrent_weights.middleRows(row, h) *= -1.0;
        grad.lstm.bias.segment(row, h) *= -1.0;
        return value;
    };
    const auto corrupted = gradient_check(initial, batch, faulty);
    const bool groups_covered = at_init.per_group.size() == 10 && at_trained.per_group.size() == 10;
    return {groups_covered && at_init.coordinates >= 200 && at_init.max_relative_error < 1e-4 &&
                at_trained.max_relative_error < 1e-4 && corrupted.max_relative_error > 1e-2,
            std::to_string(at_init.coordinates) + " coordinates over " + std::to_string(at_init.per_group.size()) +
                " groups; max error initial " + fmt("%.3g", at_init.max_relative_error) + ", trained " +
                fmt("%.3g", at_trained.max_relative_error) + ", corrupted forget gate " +
                fmt("%.3g", corrupted.max_relative_error)};
}

struct DefaultRun {
    double seconds = 0.0;
    double balanced_accuracy = 0.0;
    int epochs = 0;
    bool identical = false;
    std::size_t files = 0;
    std::string mismatch;
};

DefaultRun default_runs(std::ostream& log) {
    DefaultRun out;
    auto a = config_for(7, "default_a");
    auto b = config_for(7, "default_b");
    fs::remove_all(a.paths.dir);
    fs::remove_all(b.paths.dir);
    const auto start = Clock::now();
    require_ok(run_command("all", a, log), "all");
    out.seconds = seconds_since(start);
    require_ok(run_command("all", b, log), "all");
    out.epochs = a.train.epochs;
    std::ifstream in(a.resolve(a.paths.metrics));
    out.balanced_accuracy = nlohmann::json::parse(in).at("balanced_accuracy").get<double>();
    out.identical = true;
    for (const auto& entry : fs::directory_iterator(a.paths.dir)) {
        ++out.files;
        const auto other = b.paths.dir / entry.path().filename();
        if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
            out.identical = false;
            out.mismatch = entry.path().filename().string();
        }
    }
    std::size_t other_files = 0;
    for ([[maybe_unused]] const auto& entry : fs::directory_iterator(b.paths.dir)) ++other_files;
    out.identical = out.identical && other_files == out.files;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::ostringstream log;
    std::ofstream results;
    if (argc > 1) results.open(argv[1]);
    int failures = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& body) {
        Outcome outcome;
        try {
            outcome = body();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        failures += !outcome.pass;
        char line[1024];
        std::snprintf(line, sizeof line, "%s criterion %d (%s): %s\n", outcome.pass ? "PASS" : "FAIL", id, name,
                      outcome.detail.c_str());
        std::fputs(line, stdout);
        std::fflush(stdout);
        if (results.is_open()) results << line << std::flush;
    };

    report(1, "clustering optimality", clustering_oracle);
    report(2, "BIC recovery", bic_recovery);
    report(3, "decomposition identity", decomposition_identity);
    report(4, "attention and decay invariants", attention_decay_invariants);

    DefaultRun defaults;
    std::string default_error;
    try {
        defaults = default_runs(log);
    } catch (const std::exception& e) {
        default_error = e.what();
    }
    Comparison cmp;
    std::string comparison_error;
    try {
        cmp = compare_encoders({1, 2, 3, 4, 5}, log);
    } catch (const std::exception& e) {
        comparison_error = e.what();
    }
    auto need = [](const std::string& error) {
        if (!error.empty()) throw std::runtime_error(error);
    };

    report(5, "gradient correctness", [&] {
        need(comparison_error);
        return gradient_correctness(cmp);
    });
    report(6, "synthetic learnability", [&] {
        need(default_error);
        return Outcome{defaults.balanced_accuracy >= 0.85 && defaults.epochs <= 300 && defaults.seconds < 300.0,
                       "default corpus, seed 7: test balanced accuracy " + fmt("%.3f", defaults.balanced_accuracy) +
                           " after " + std::to_string(defaults.epochs) + " epochs; full pipeline " +
                           fmt("%.1f", defaults.seconds) + " s"};
    });
    report(7, "attention vs plain ordering", [&] {
        need(comparison_error);
        std::string per_seed;
        for (std::size_t i = 0; i < cmp.attentive.size(); ++i)
            per_seed += (i ? ", " : "") + fmt("%.3f", cmp.attentive[i]) + "/" + fmt("%.3f", cmp.plain[i]);
        return Outcome{mean(cmp.attentive) >= mean(cmp.plain),
                       "mean balanced accuracy attentive " + fmt("%.3f", mean(cmp.attentive)) + " vs plain " +
                           fmt("%.3f", mean(cmp.plain)) + " over seeds 1-5 (" + per_seed + ")"};
    });
    report(8, "explanation sanity", [&] {
        need(comparison_error);
        return explanation_sanity(cmp);
    });
    report(9, "temporal sensitivity", [&] {
        need(comparison_error);
        return temporal_sensitivity(cmp);
    });
    report(10, "explanation faithfulness", [&] {
        need(comparison_error);
        return faithfulness(cmp);
    });
    report(11, "determinism", [&] {
        need(default_error);
        return Outcome{defaults.identical, std::to_string(defaults.files) + " artifacts from two `all --seed 7` runs " +
                                               (defaults.identical ? "are byte-identical" : "differ at " + defaults.mismatch)};
    });
    return results.is_open() ? 0 : failures;
}
