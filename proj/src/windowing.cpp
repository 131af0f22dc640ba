#include "failex/windowing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>

#include "failex/csv.hpp"
#include "failex/error.hpp"

namespace failex {
namespace {

const std::vector<std::string> kWindowsHeader = {"device_id", "window_id", "start_min",
                                                 "duration_min", "event_count"};

constexpr double kInf = std::numeric_limits<double>::infinity();

// Neumaier-compensated running sums of x and x^2 over data shifted by its
// median, so segment costs are O(1) and do not lose digits to large offsets.
class PrefixMoments {
public:
    explicit PrefixMoments(std::span<const double> sorted)
        : n_(sorted.size()), s1_(n_ + 1), c1_(n_ + 1), s2_(n_ + 1), c2_(n_ + 1) {
        const double shift = sorted[n_ / 2];
        for (std::size_t i = 0; i < n_; ++i) {
            const double x = sorted[i] - shift;
            add(s1_[i], c1_[i], x, s1_[i + 1], c1_[i + 1]);
            add(s2_[i], c2_[i], x * x, s2_[i + 1], c2_[i + 1]);
        }
    }

    /// Sum of squared deviations of elements j..i (inclusive) from their mean.
    double ssq(std::size_t j, std::size_t i) const {
        const double len = static_cast<double>(i - j + 1);
        const double sum = (s1_[i + 1] - s1_[j]) + (c1_[i + 1] - c1_[j]);
        const double sum_sq = (s2_[i + 1] - s2_[j]) + (c2_[i + 1] - c2_[j]);
        return std::max(0.0, sum_sq - sum * sum / len);
    }

private:
    static void add(double sum, double comp, double x, double& out_sum, double& out_comp) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        out_sum = t;
        out_comp = comp;
    }

    std::size_t n_;
    std::vector<double> s1_, c1_, s2_, c2_;
};

// cost[m][i]: minimal ssq of the first i+1 points split into m+1 runs.
// split[m][i]: first index of the last run in that optimum (smallest on ties).
class ClusterTable {
public:
    ClusterTable(std::span<const double> sorted, int k_max, bool keep_ties_together)
        : n_(sorted.size()),
          cost_(static_cast<std::size_t>(k_max), std::vector<double>(n_, kInf)),
          split_(static_cast<std::size_t>(k_max), std::vector<std::size_t>(n_, 0)) {
        PrefixMoments moments(sorted);
        for (std::size_t i = 0; i < n_; ++i) cost_[0][i] = moments.ssq(0, i);
        for (std::size_t m = 1; m < cost_.size(); ++m) {
            const auto& prev = cost_[m - 1];
            auto& cur = cost_[m];
            for (std::size_t i = m; i < n_; ++i) {
                double best = kInf;
                std::size_t arg = 0;
                for (std::size_t j = m; j <= i; ++j) {
                    if (keep_ties_together && sorted[j] == sorted[j - 1]) continue;
                    const double candidate = prev[j - 1] + moments.ssq(j, i);
                    if (candidate < best) {
                        best = candidate;
                        arg = j;
                    }
                }
                cur[i] = best;
                split_[m][i] = arg;
            }
        }
    }

    /// Backtracks the optimal k-run partition, or nullopt when infeasible.
    std::optional<std::vector<int>> assignments(int k) const {
        const auto last = static_cast<std::size_t>(k - 1);
        if (!std::isfinite(cost_[last][n_ - 1])) return std::nullopt;
        std::vector<int> labels(n_, 0);
        std::size_t end = n_ - 1;
        for (std::size_t m = last; m >= 1; --m) {
            const std::size_t begin = split_[m][end];
            for (std::size_t i = begin; i <= end; ++i) labels[i] = static_cast<int>(m);
            end = begin - 1;
        }
        return labels;
    }

private:
    std::size_t n_;
    std::vector<std::vector<double>> cost_;
    std::vector<std::vector<std::size_t>> split_;
};

void require_sorted(std::span<const double> sorted) {
    if (sorted.empty()) throw ValidationError("clustering input is empty");
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (!std::isfinite(sorted[i])) throw ValidationError("clustering input is not finite");
        if (i && sorted[i] < sorted[i - 1]) throw ValidationError("clustering input is not sorted");
    }
}

double exact_within_ssq(std::span<const double> sorted, std::span<const int> assignments) {
    double total = 0.0;
    std::size_t begin = 0;
    while (begin < sorted.size()) {
        std::size_t end = begin;
        while (end < sorted.size() && assignments[end] == assignments[begin]) ++end;
        double mean = 0.0;
        for (std::size_t i = begin; i < end; ++i) mean += sorted[i];
        mean /= static_cast<double>(end - begin);
        for (std::size_t i = begin; i < end; ++i) total += (sorted[i] - mean) * (sorted[i] - mean);
        begin = end;
    }
    return total;
}

ClusteringResult finish(std::span<const double> sorted, std::vector<int> assignments, int k,
                        double variance_floor) {
    ClusteringResult result;
    result.k = k;
    result.within_ssq = exact_within_ssq(sorted, assignments);
    result.bic = mixture_bic(sorted, assignments, k, variance_floor);
    result.assignments = std::move(assignments);
    return result;
}

}  // namespace

ClusteringResult ckmeans_fixed_k(std::span<const double> sorted, int k) {
    require_sorted(sorted);
    if (k < 1 || static_cast<std::size_t>(k) > sorted.size())
        throw ValidationError("k must lie in [1, n]");
    ClusterTable table(sorted, k, false);
    return finish(sorted, *table.assignments(k), k, kDefaultVarianceFloor);
}

double mixture_bic(std::span<const double> sorted, std::span<const int> assignments, int k,
                   double variance_floor) {
    const double n = static_cast<double>(sorted.size());
    double log_likelihood = 0.0;
    std::size_t begin = 0;
    while (begin < sorted.size()) {
        std::size_t end = begin;
        while (end < sorted.size() && assignments[end] == assignments[begin]) ++end;
        const double count = static_cast<double>(end - begin);
        double mean = 0.0;
        for (std::size_t i = begin; i < end; ++i) mean += sorted[i];
        mean /= count;
        double ssq = 0.0;
        for (std::size_t i = begin; i < end; ++i) ssq += (sorted[i] - mean) * (sorted[i] - mean);
        const double variance = std::max(ssq / count, variance_floor);
        log_likelihood += count * (std::log(count / n) - 0.5 * std::log(2.0 * std::numbers::pi * variance)) -
                          ssq / (2.0 * variance);
        begin = end;
    }
    return 2.0 * log_likelihood - (3.0 * k - 1.0) * std::log(n);
}

KSelection select_k(std::span<const double> sorted, int k_max, double variance_floor,
                    bool keep_ties_together) {
    require_sorted(sorted);
    if (k_max < 1) throw ValidationError("k_max must be positive");
    k_max = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(k_max), sorted.size()));
    if (!(variance_floor > 0.0)) throw ValidationError("variance floor must be positive");
    if (keep_ties_together) {
        int distinct = 1;
        for (std::size_t i = 1; i < sorted.size(); ++i) distinct += sorted[i] != sorted[i - 1];
        k_max = std::min(k_max, distinct);
    }

    ClusterTable table(sorted, k_max, keep_ties_together);
    KSelection selection;
    for (int k = 1; k <= k_max; ++k) {
        auto labels = table.assignments(k);
        if (!labels) {
            selection.bic_by_k.push_back(-kInf);
            continue;
        }
        auto candidate = finish(sorted, std::move(*labels), k, variance_floor);
        selection.bic_by_k.push_back(candidate.bic);
        if (k == 1 || candidate.bic > selection.best.bic) selection.best = std::move(candidate);
    }
    return selection;
}

ClusteringResult select_k_bic(std::span<const double> sorted, int k_max, double variance_floor) {
    return select_k(sorted, k_max, variance_floor, false).best;
}

std::vector<EventWindow> build_windows(std::span<const AnomalousEvent> events,
                                       const WindowingOptions& options, KSelection* diagnostics) {
    if (events.empty()) return {};
    if (options.k_max < 1) throw ValidationError("k_max must be positive");
    std::vector<double> stamps;
    stamps.reserve(events.size());
    for (const auto& e : events) {
        if (e.device_id != events.front().device_id)
            throw ValidationError("build_windows expects events of a single device");
        stamps.push_back(static_cast<double>(e.timestamp));
    }
    auto selection = select_k(stamps,
                              std::min<int>(options.k_max, static_cast<int>(stamps.size())),
                              options.variance_floor(), true);

    std::vector<EventWindow> windows(static_cast<std::size_t>(selection.best.k));
    for (std::size_t i = 0; i < events.size(); ++i)
        windows[static_cast<std::size_t>(selection.best.assignments[i])].events.push_back(events[i]);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        auto& window = windows[w];
        window.window_id = static_cast<int>(w) + 1;
        window.start = window.events.front().timestamp;
        window.tau = window.events.back().timestamp;
        window.duration = window.tau - window.start;
    }
    if (diagnostics) *diagnostics = std::move(selection);
    return windows;
}

std::vector<WindowSummary> read_windows(const std::filesystem::path& path) {
    const auto source = path.string();
    std::vector<WindowSummary> windows;
    for (const auto& row : csv::read_file(source, kWindowsHeader)) {
        WindowSummary w;
        w.device_id = row.fields[0];
        w.window_id = static_cast<int>(csv::parse_int(row, 1, source));
        w.start = csv::parse_int(row, 2, source);
        w.duration = csv::parse_int(row, 3, source);
        const auto count = csv::parse_int(row, 4, source);
        if (w.duration < 0 || count < 1)
            throw FormatError(source, row.line, "window needs duration >= 0 and at least one event");
        w.event_count = static_cast<std::size_t>(count);
        windows.push_back(std::move(w));
    }
    return windows;
}

void write_windows(std::ostream& out, std::span<const WindowSummary> windows) {
    csv::write_row(out, kWindowsHeader);
    for (const auto& w : windows)
        csv::write_row(out, {w.device_id, std::to_string(w.window_id), std::to_string(w.start),
                             std::to_string(w.duration), std::to_string(w.event_count)});
}

std::vector<EventWindow> attach_events(std::span<const WindowSummary> device_windows,
                                       std::span<const AnomalousEvent> device_events) {
    std::vector<EventWindow> windows;
    for (const auto& s : device_windows) {
        EventWindow w;
        w.window_id = s.window_id;
        w.start = s.start;
        w.duration = s.duration;
        windows.push_back(std::move(w));
    }
    std::sort(windows.begin(), windows.end(),
              [](const EventWindow& a, const EventWindow& b) { return a.start < b.start; });
    for (const auto& event : device_events) {
        auto it = std::upper_bound(windows.begin(), windows.end(), event.timestamp,
                                   [](Minutes ts, const EventWindow& w) { return ts < w.start; });
        if (it == windows.begin() || event.timestamp > std::prev(it)->start + std::prev(it)->duration)
            throw ValidationError("event of device '" + event.device_id + "' at " +
                                  std::to_string(event.timestamp) + " lies outside every window");
        std::prev(it)->events.push_back(event);
    }
    for (std::size_t i = 0; i < windows.size(); ++i) {
        auto& w = windows[i];
        const auto& summary = *std::find_if(device_windows.begin(), device_windows.end(),
                                            [&](const WindowSummary& s) { return s.window_id == w.window_id; });
        if (w.events.size() != summary.event_count)
            throw ValidationError("window " + std::to_string(w.window_id) + " of device '" +
                                  summary.device_id + "' expected " +
                                  std::to_string(summary.event_count) + " events, found " +
                                  std::to_string(w.events.size()));
        w.tau = w.events.back().timestamp;
    }
    return windows;
}

}  // namespace failex
