#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "failex/representation.hpp"
#include "failex/telemetry.hpp"
#include "failex/windowing.hpp"

namespace failex {

/// A window as fed to the model, with the metadata explanations print.
struct WindowSlot {
    int window_id = 0;
    Minutes start = 0;
    Minutes duration = 0;
    std::size_t event_count = 0;
    EventBag bag;
};

/// Model input for one device: its most recent windows in chronological order.
struct DeviceSequence {
    std::string device_id;
    int label = 0;
    Minutes observation_start = 0;
    Minutes observation_end = 0;
    Minutes horizon = 0;
    std::vector<WindowSlot> windows;
};

/// Keeps the `sequence_length` most recent windows.
DeviceSequence make_sequence(const DeviceRecord& record, std::span<const EventWindow> windows,
                             const Vocabulary& vocabulary, int sequence_length);

/// Clusters every record's events and builds its sequence.
std::vector<DeviceSequence> build_sequences(std::span<const DeviceRecord> records,
                                            const Vocabulary& vocabulary,
                                            const WindowingOptions& windowing, int sequence_length);

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Seeded stratified shuffle: `train_fraction` of each class for training,
/// the remainder divided between validation and test by `validation_share`.
DatasetSplit split_dataset(std::span<const DeviceSequence> sequences, std::uint64_t seed,
                           double train_fraction = 0.8, double validation_share = 0.5);

std::vector<DeviceSequence> select(std::span<const DeviceSequence> sequences,
                                   std::span<const std::size_t> indices);

}  // namespace failex
