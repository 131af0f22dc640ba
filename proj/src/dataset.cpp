#include "failex/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "failex/error.hpp"
#include "failex/rng.hpp"

namespace failex {

DeviceSequence make_sequence(const DeviceRecord& record, std::span<const EventWindow> windows,
                             const Vocabulary& vocabulary, int sequence_length) {
    if (sequence_length < 1) throw ValidationError("sequence length must be positive");
    DeviceSequence seq;
    seq.device_id = record.device_id;
    seq.label = record.label;
    seq.observation_start = record.observation_start;
    seq.observation_end = record.observation_end;
    seq.horizon = record.horizon();
    const auto keep = std::min<std::size_t>(windows.size(), static_cast<std::size_t>(sequence_length));
    for (std::size_t i = windows.size() - keep; i < windows.size(); ++i) {
        const auto& w = windows[i];
        seq.windows.push_back({w.window_id, w.start, w.duration, w.event_count(), make_bag(w, vocabulary)});
    }
    return seq;
}

std::vector<DeviceSequence> build_sequences(std::span<const DeviceRecord> records,
                                            const Vocabulary& vocabulary,
                                            const WindowingOptions& windowing, int sequence_length) {
    std::vector<DeviceSequence> out;
    out.reserve(records.size());
    for (const auto& record : records) {
        const auto windows = build_windows(record.events, windowing);
        out.push_back(make_sequence(record, windows, vocabulary, sequence_length));
    }
    return out;
}

DatasetSplit split_dataset(std::span<const DeviceSequence> sequences, std::uint64_t seed,
                           double train_fraction, double validation_share) {
    if (!(train_fraction > 0.0 && train_fraction <= 1.0) ||
        !(validation_share >= 0.0 && validation_share <= 1.0))
        throw ValidationError("split fractions out of range");
    Rng rng(seed);
    DatasetSplit split;
    for (int label : {0, 1}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < sequences.size(); ++i)
            if (sequences[i].label == label) members.push_back(i);
        rng.shuffle(members);
        const auto n = members.size();
        const auto train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
        const auto held = n - train;
        const auto validation = static_cast<std::size_t>(std::floor(validation_share * static_cast<double>(held)));
        split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(train));
        split.validation.insert(split.validation.end(), members.begin() + static_cast<std::ptrdiff_t>(train),
                                members.begin() + static_cast<std::ptrdiff_t>(train + validation));
        split.test.insert(split.test.end(), members.begin() + static_cast<std::ptrdiff_t>(train + validation),
                          members.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

std::vector<DeviceSequence> select(std::span<const DeviceSequence> sequences,
                                   std::span<const std::size_t> indices) {
    std::vector<DeviceSequence> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(sequences[i]);
    return out;
}

}  // namespace failex
