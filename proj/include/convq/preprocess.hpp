#pragma once

// Acceleration standardization, the seven derived movement channels, and
// optional sliding-window smoothing into statistical and spectral series.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convq/core_data.hpp"

namespace convq {

inline constexpr std::size_t kChannelCount = 7;

/// raw_x, raw_y, raw_z, abs_x, abs_y, abs_z, euclid_norm
const std::array<std::string, kChannelCount>& channel_names();

struct ChannelSet {
    ParticipantId participant_id;
    double rate_hz = kDefaultSampleRateHz;
    std::array<std::vector<double>, kChannelCount> channels;

    std::size_t size() const noexcept { return channels[0].size(); }
};

/// Per-axis z-score using the sample standard deviation. Throws
/// UndefinedError naming the axis when it has zero variance.
AccelRecording zscore(const AccelRecording& recording);

/// Raw and absolute z-scored axes plus the Euclidean norm across axes.
ChannelSet derive_channels(const AccelRecording& z);

struct WindowConfig {
    double window_len_s = 1.0;
    std::optional<double> hop_s;  // half a window when unset
    int n_bands = 4;
};

/// Named series derived from one channel, sampled at `rate_hz`.
struct WindowedSeries {
    double rate_hz = kDefaultSampleRateHz;
    std::vector<std::string> names;
    std::vector<std::vector<double>> series;
};

/// Without a config the channel is passed through unchanged as "raw".
/// Otherwise each window yields its mean, population variance and the
/// Hann-tapered DFT power in `n_bands` log-spaced bands over (0, Nyquist].
WindowedSeries window_features(std::span<const double> channel, double rate_hz,
                               const std::optional<WindowConfig>& cfg);

/// Band edges in Hz for a window of `window_samples` at `rate_hz`.
std::vector<double> band_edges(std::size_t window_samples, double rate_hz, int n_bands);

/// Every channel of a ChannelSet expanded through window_features; names
/// are "<channel>" for the pass-through and "<channel>.<stat>" otherwise.
WindowedSeries smooth_channels(const ChannelSet& set, const std::optional<WindowConfig>& cfg);

}  // namespace convq
