#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "failex/telemetry.hpp"

namespace failex {

/// A partition of sorted 1-D data into k contiguous runs.
struct ClusteringResult {
    int k = 0;
    std::vector<int> assignments;  // non-decreasing, 0-based
    double within_ssq = 0.0;
    double bic = 0.0;
};

/// Exact minimum within-cluster sum of squares over all partitions of
/// `sorted` into k contiguous runs. O(k n^2) time, O(k n) space.
/// Throws ValidationError on empty input, unsorted input, or k outside [1, n].
ClusteringResult ckmeans_fixed_k(std::span<const double> sorted, int k);

/// Gaussian-mixture BIC of a partition (larger is better). Each cluster has
/// its own mean, variance (floored at `variance_floor`) and weight n_c/n;
/// 3k - 1 free parameters.
double mixture_bic(std::span<const double> sorted, std::span<const int> assignments, int k,
                   double variance_floor);

struct KSelection {
    ClusteringResult best;
    std::vector<double> bic_by_k;  // entry k-1 holds the score for k clusters
};

/// Default floor: variance of a uniform over one 5-minute sampling slot.
inline constexpr double kDefaultVarianceFloor = 25.0 / 12.0;

/// Scores k = 1..k_max and keeps the best BIC, preferring smaller k on ties.
/// With `keep_ties_together`, identical values never straddle two clusters
/// and k_max is capped at the number of distinct values. k_max is always
/// capped at n.
KSelection select_k(std::span<const double> sorted, int k_max,
                    double variance_floor = kDefaultVarianceFloor,
                    bool keep_ties_together = false);

ClusteringResult select_k_bic(std::span<const double> sorted, int k_max,
                              double variance_floor = kDefaultVarianceFloor);

/// A chronologically contiguous cluster of one device's events.
struct EventWindow {
    int window_id = 0;  // 1-based, chronological within the device
    std::vector<AnomalousEvent> events;
    Minutes start = 0;
    Minutes duration = 0;
    Minutes tau = 0;  // timestamp of the newest event

    std::size_t event_count() const { return events.size(); }
};

struct WindowingOptions {
    int k_max = 25;
    Minutes sampling_minutes = 5;

    double variance_floor() const {
        return static_cast<double>(sampling_minutes * sampling_minutes) / 12.0;
    }
};

/// Clusters a single device's events into windows. No events, no windows.
std::vector<EventWindow> build_windows(std::span<const AnomalousEvent> events,
                                       const WindowingOptions& options = {},
                                       KSelection* diagnostics = nullptr);

/// One row of the windows artifact.
struct WindowSummary {
    std::string device_id;
    int window_id = 0;
    Minutes start = 0;
    Minutes duration = 0;
    std::size_t event_count = 0;
};

std::vector<WindowSummary> read_windows(const std::filesystem::path& path);
void write_windows(std::ostream& out, std::span<const WindowSummary> windows);

/// Rebuilds a device's windows from summaries by time containment.
/// Throws ValidationError if an event falls outside every window or counts disagree.
std::vector<EventWindow> attach_events(std::span<const WindowSummary> device_windows,
                                       std::span<const AnomalousEvent> device_events);

}  // namespace failex
