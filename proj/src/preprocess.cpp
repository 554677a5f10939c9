#include "convq/preprocess.hpp"

#include <cmath>
#include <complex>
#include <numeric>

#include "convq/errors.hpp"
#include "spectral.hpp"

namespace convq {

const std::array<std::string, kChannelCount>& channel_names() {
    static const std::array<std::string, kChannelCount> names{
        "raw_x", "raw_y", "raw_z", "abs_x", "abs_y", "abs_z", "euclid_norm"};
    return names;
}

AccelRecording zscore(const AccelRecording& recording) {
    static constexpr const char* axis_name[] = {"x", "y", "z"};
    if (recording.size() < 2) throw InputError("z-score needs at least 2 samples");
    AccelRecording out = recording;
    for (std::size_t a = 0; a < 3; ++a) {
        auto& v = out.axes[a];
        const double n = static_cast<double>(v.size());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd = std::sqrt(ss / (n - 1.0));
        if (!(sd > 0.0) || sd <= 1e-12 * (std::abs(mean) + 1.0)) {
            throw UndefinedError("participant " + recording.participant_id + ": axis " +
                                 axis_name[a] + " is constant, z-score undefined");
        }
        for (double& x : v) x = (x - mean) / sd;
    }
    return out;
}

ChannelSet derive_channels(const AccelRecording& z) {
    ChannelSet set;
    set.participant_id = z.participant_id;
    set.rate_hz = z.sample_rate_hz;
    const std::size_t n = z.size();
    for (auto& c : set.channels) c.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double x = z.axes[0][k], y = z.axes[1][k], w = z.axes[2][k];
        set.channels[0][k] = x;
        set.channels[1][k] = y;
        set.channels[2][k] = w;
        set.channels[3][k] = std::abs(x);
        set.channels[4][k] = std::abs(y);
        set.channels[5][k] = std::abs(w);
        set.channels[6][k] = std::sqrt(x * x + y * y + w * w);
    }
    return set;
}

std::vector<double> band_edges(std::size_t window_samples, double rate_hz, int n_bands) {
    if (n_bands < 1) throw InputError("need at least one band");
    const double lowest = rate_hz / static_cast<double>(window_samples);
    const double nyquist = rate_hz / 2.0;
    std::vector<double> edges(static_cast<std::size_t>(n_bands) + 1);
    for (int b = 0; b <= n_bands; ++b) {
        edges[static_cast<std::size_t>(b)] =
            lowest * std::pow(nyquist / lowest, static_cast<double>(b) / n_bands);
    }
    return edges;
}

WindowedSeries window_features(std::span<const double> channel, double rate_hz,
                               const std::optional<WindowConfig>& cfg) {
    WindowedSeries out;
    out.rate_hz = rate_hz;
    if (!cfg) {
        out.names = {"raw"};
        out.series.emplace_back(channel.begin(), channel.end());
        return out;
    }
    const auto len = static_cast<std::size_t>(std::llround(cfg->window_len_s * rate_hz));
    if (len < 2) throw InputError("window must span at least 2 samples");
    const std::size_t hop =
        cfg->hop_s ? static_cast<std::size_t>(std::llround(*cfg->hop_s * rate_hz)) : len / 2;
    if (hop < 1) throw InputError("hop must be at least 1 sample");
    if (len > channel.size()) throw InputError("window longer than signal");

    const std::size_t n_windows = (channel.size() - len) / hop + 1;
    const auto n_bands = static_cast<std::size_t>(cfg->n_bands);
    const auto edges = band_edges(len, rate_hz, cfg->n_bands);

    out.rate_hz = rate_hz / static_cast<double>(hop);
    out.names = {"mean", "var"};
    for (std::size_t b = 0; b < n_bands; ++b) out.names.push_back("band" + std::to_string(b));
    out.series.assign(out.names.size(), std::vector<double>(n_windows, 0.0));

    // Map each positive-frequency bin to its band; band 0 includes its lower edge.
    spectral::RealFft fft(len);
    std::vector<int> bin_band(fft.bins(), -1);
    for (std::size_t k = 1; k < fft.bins(); ++k) {
        const double f = static_cast<double>(k) * rate_hz / static_cast<double>(len);
        for (std::size_t b = 0; b < n_bands; ++b) {
            const bool above_low = b == 0 ? f >= edges[0] * (1 - 1e-12) : f > edges[b];
            if (above_low && f <= edges[b + 1] * (1 + 1e-12)) {
                bin_band[k] = static_cast<int>(b);
                break;
            }
        }
    }

    const auto taper = spectral::hann(len);
    std::vector<double> buf(len);
    std::vector<std::complex<double>> spec;
    for (std::size_t w = 0; w < n_windows; ++w) {
        const auto seg = channel.subspan(w * hop, len);
        const double mean = std::accumulate(seg.begin(), seg.end(), 0.0) / static_cast<double>(len);
        double ss = 0.0;
        for (double x : seg) ss += (x - mean) * (x - mean);
        out.series[0][w] = mean;
        out.series[1][w] = ss / static_cast<double>(len);
        for (std::size_t i = 0; i < len; ++i) buf[i] = seg[i] * taper[i];
        fft.forward(buf, spec);
        for (std::size_t k = 1; k < spec.size(); ++k) {
            if (bin_band[k] >= 0) out.series[2 + static_cast<std::size_t>(bin_band[k])][w] += std::norm(spec[k]);
        }
    }
    return out;
}

WindowedSeries smooth_channels(const ChannelSet& set, const std::optional<WindowConfig>& cfg) {
    WindowedSeries out;
    out.rate_hz = set.rate_hz;
    for (std::size_t c = 0; c < kChannelCount; ++c) {
        auto w = window_features(set.channels[c], set.rate_hz, cfg);
        out.rate_hz = w.rate_hz;
        for (std::size_t i = 0; i < w.names.size(); ++i) {
            out.names.push_back(cfg ? channel_names()[c] + "." + w.names[i] : channel_names()[c]);
            out.series.push_back(std::move(w.series[i]));
        }
    }
    return out;
}

}  // namespace convq
