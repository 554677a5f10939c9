#include "convq/coordination.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include "convq/errors.hpp"
#include "spectral.hpp"

namespace convq {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool is_flat(double ss, std::span<const double> v) {
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    const double tol = 1e-14 * scale;
    return !(ss > static_cast<double>(v.size()) * tol * tol) || ss == 0.0;
}

std::vector<double> time_index(std::size_t n) {
    std::vector<double> t(n);
    std::iota(t.begin(), t.end(), 0.0);
    return t;
}

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InputError("pearson: series lengths differ");
    if (a.size() < 3) throw InputError("pearson: need at least 3 samples");
    const double ma = mean_of(a), mb = mean_of(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (is_flat(saa, a) || is_flat(sbb, b)) throw UndefinedError("correlation undefined for a constant series");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

LaggedCorrelation lagged_correlation(std::span<const double> a, std::span<const double> b,
                                     int max_lag) {
    if (a.size() != b.size()) throw InputError("lagged_correlation: series lengths differ");
    if (max_lag < 0) throw InputError("lagged_correlation: negative max lag");
    if (a.size() <= 2 * static_cast<std::size_t>(max_lag) + 2) {
        throw InputError("lagged_correlation: series too short for max lag " + std::to_string(max_lag));
    }
    const std::size_t n = a.size();
    auto at = [&](int lag) {
        const auto l = static_cast<std::size_t>(std::abs(lag));
        return lag >= 0 ? pearson(a.subspan(0, n - l), b.subspan(l, n - l))
                        : pearson(a.subspan(l, n - l), b.subspan(0, n - l));
    };
    LaggedCorrelation r;
    r.min = r.max = at(0);
    // Visit 0, +1, -1, +2, -2, ... so strict comparison keeps the smallest |lag|.
    for (int m = 1; m <= max_lag; ++m) {
        for (int lag : {m, -m}) {
            const double v = at(lag);
            if (v > r.max) {
                r.max = v;
                r.argmax = lag;
            }
            if (v < r.min) {
                r.min = v;
                r.argmin = lag;
            }
        }
    }
    return r;
}

WindowStats summarize(std::span<const double> values) {
    if (values.empty()) throw InputError("cannot summarize an empty set");
    WindowStats s;
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    s.mean = mean_of(values);
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.variance = ss / static_cast<double>(values.size());
    return s;
}

double histogram_mutual_information(std::span<const double> a, std::span<const double> b,
                                    int bins) {
    if (a.size() != b.size() || a.empty()) throw InputError("mutual information: bad window");
    if (bins < 2) throw InputError("mutual information: need at least 2 bins");
    const auto nb = static_cast<std::size_t>(bins);
    auto bin_of = [nb](std::span<const double> v) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        const double width = *hi - *lo;
        std::vector<std::size_t> idx(v.size(), 0);
        if (width > 0) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                const auto k = static_cast<std::size_t>((v[i] - *lo) / width * static_cast<double>(nb));
                idx[i] = std::min(k, nb - 1);
            }
        }
        return idx;
    };
    const auto ia = bin_of(a), ib = bin_of(b);
    std::vector<double> joint(nb * nb, 0.0), pa(nb, 0.0), pb(nb, 0.0);
    const double inv = 1.0 / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[ia[i] * nb + ib[i]] += inv;
        pa[ia[i]] += inv;
        pb[ib[i]] += inv;
    }
    double mi = 0.0;
    for (std::size_t x = 0; x < nb; ++x) {
        for (std::size_t y = 0; y < nb; ++y) {
            const double p = joint[x * nb + y];
            if (p > 0) mi += p * std::log(p / (pa[x] * pb[y]));
        }
    }
    return std::max(0.0, mi);
}

WindowStats mutual_information(std::span<const double> a, std::span<const double> b, int bins,
                               std::size_t window) {
    if (a.size() != b.size()) throw InputError("mutual information: series lengths differ");
    if (window < 2) throw InputError("mutual information: window too short");
    const std::size_t count = a.size() / window;
    if (count < 2) throw InputError("mutual information: fewer than 2 full windows");
    std::vector<double> per_window(count);
    for (std::size_t w = 0; w < count; ++w) {
        per_window[w] = histogram_mutual_information(a.subspan(w * window, window),
                                                     b.subspan(w * window, window), bins);
    }
    return summarize(per_window);
}

Mimicry mimicry(std::span<const double> follower, std::span<const double> model,
                std::size_t window) {
    if (follower.size() != model.size()) throw InputError("mimicry: series lengths differ");
    if (window < 3) throw InputError("mimicry: window must hold at least 3 samples");
    const std::size_t count = follower.size() / window;
    if (count < 3) throw InputError("mimicry: fewer than 3 windows");
    auto scores = [&](std::span<const double> later, std::span<const double> earlier) {
        std::vector<double> s;
        for (std::size_t w = 0; w + 1 < count; ++w) {
            try {
                s.push_back(pearson(later.subspan((w + 1) * window, window),
                                    earlier.subspan(w * window, window)));
            } catch (const UndefinedError&) {
                // constant window: skipped
            }
        }
        if (s.empty()) throw UndefinedError("mimicry: every window was constant");
        return summarize(s);
    };
    return {scores(follower, model), scores(model, follower)};
}

std::vector<double> coherence_spectrum(std::span<const double> a, std::span<const double> b,
                                       std::size_t seg_len) {
    if (a.size() != b.size()) throw InputError("coherence: series lengths differ");
    if (seg_len < 4) throw InputError("coherence: segment too short");
    if (a.size() < 2 * seg_len) throw InputError("coherence: series shorter than two segments");
    const std::size_t hop = std::max<std::size_t>(1, seg_len / 2);
    const std::size_t count = (a.size() - seg_len) / hop + 1;

    spectral::RealFft fft(seg_len);
    const auto taper = spectral::hann(seg_len);
    const std::size_t bins = fft.bins();
    std::vector<double> saa(bins, 0.0), sbb(bins, 0.0);
    std::vector<std::complex<double>> sab(bins, 0.0);
    std::vector<double> buf(seg_len);
    std::vector<std::complex<double>> fa, fb;
    for (std::size_t s = 0; s < count; ++s) {
        auto load = [&](std::span<const double> x, std::vector<std::complex<double>>& f) {
            const auto seg = x.subspan(s * hop, seg_len);
            const double m = mean_of(seg);
            for (std::size_t i = 0; i < seg_len; ++i) buf[i] = (seg[i] - m) * taper[i];
            fft.forward(buf, f);
        };
        load(a, fa);
        load(b, fb);
        for (std::size_t k = 0; k < bins; ++k) {
            saa[k] += std::norm(fa[k]);
            sbb[k] += std::norm(fb[k]);
            sab[k] += fa[k] * std::conj(fb[k]);
        }
    }
    const double max_a = *std::max_element(saa.begin() + 1, saa.end());
    const double max_b = *std::max_element(sbb.begin() + 1, sbb.end());
    std::vector<double> coh;
    coh.reserve(bins - 1);
    for (std::size_t k = 1; k < bins; ++k) {
        if (!(saa[k] > 1e-12 * max_a) || !(sbb[k] > 1e-12 * max_b)) {
            coh.push_back(kNaN);
            continue;
        }
        coh.push_back(std::clamp(std::norm(sab[k]) / (saa[k] * sbb[k]), 0.0, 1.0));
    }
    return coh;
}

CoherenceRange coherence(std::span<const double> a, std::span<const double> b,
                         std::size_t seg_len) {
    const auto spec = coherence_spectrum(a, b, seg_len);
    CoherenceRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    bool any = false;
    for (double c : spec) {
        if (std::isnan(c)) continue;
        any = true;
        r.min = std::min(r.min, c);
        r.max = std::max(r.max, c);
    }
    if (!any) throw UndefinedError("coherence: no frequency bin carries power in both signals");
    return r;
}

double granger(std::span<const double> cause, std::span<const double> effect, int order) {
    if (cause.size() != effect.size()) throw InputError("granger: series lengths differ");
    if (order < 1) throw InputError("granger: order must be positive");
    const auto p = static_cast<std::size_t>(order);
    const std::size_t n = cause.size();
    if (n <= 3 * p + 10) throw InputError("granger: series too short for the model order");

    const auto rows = static_cast<Eigen::Index>(n - p);
    Eigen::VectorXd y(rows);
    Eigen::MatrixXd full(rows, static_cast<Eigen::Index>(1 + 2 * p));
    for (Eigen::Index r = 0; r < rows; ++r) {
        const std::size_t t = static_cast<std::size_t>(r) + p;
        y(r) = effect[t];
        full(r, 0) = 1.0;
        for (std::size_t k = 1; k <= p; ++k) {
            full(r, static_cast<Eigen::Index>(k)) = effect[t - k];
            full(r, static_cast<Eigen::Index>(p + k)) = cause[t - k];
        }
    }
    auto rss = [&](const Eigen::MatrixXd& x) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
        qr.setThreshold(1e-10);
        if (qr.rank() < x.cols()) {
            throw RankDeficiencyError("granger: regression matrix is rank deficient");
        }
        const Eigen::VectorXd beta = qr.solve(y);
        return (y - x * beta).squaredNorm();
    };
    const double rss_u = rss(full);
    const double rss_r = rss(full.leftCols(static_cast<Eigen::Index>(1 + p)));
    const double dof = static_cast<double>(rows) - 2.0 * static_cast<double>(p) - 1.0;
    if (rss_u <= 0.0) return std::numeric_limits<double>::infinity();
    const double f = ((rss_r - rss_u) / static_cast<double>(p)) / (rss_u / dof);
    return std::max(0.0, f);
}

double symmetric_convergence(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InputError("convergence: series lengths differ");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = std::abs(a[i] - b[i]);
    return pearson(time_index(d.size()), d);
}

double convergence_toward(std::span<const double> self, std::span<const double> partner) {
    if (self.size() != partner.size()) throw InputError("convergence: series lengths differ");
    if (self.size() < 4) throw InputError("convergence: need at least 4 samples");
    const double baseline = mean_of(partner.subspan(0, partner.size() / 2));
    std::vector<double> d(self.size());
    for (std::size_t i = 0; i < self.size(); ++i) d[i] = std::abs(self[i] - baseline);
    return pearson(time_index(d.size()), d);
}

AsymmetricConvergence asymmetric_convergence(std::span<const double> self,
                                             std::span<const double> partner) {
    return {convergence_toward(self, partner), convergence_toward(partner, self)};
}

double global_convergence(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InputError("convergence: series lengths differ");
    if (a.size() < 4) throw InputError("convergence: need at least 4 samples");
    const std::size_t half = a.size() / 2;
    double d1 = 0.0, d2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) d1 += std::abs(a[i] - b[i]);
    for (std::size_t i = half; i < a.size(); ++i) d2 += std::abs(a[i] - b[i]);
    return d1 / static_cast<double>(half) - d2 / static_cast<double>(a.size() - half);
}

// ---------------------------------------------------------------------------

std::string to_string(FeatureFamily f) {
    switch (f) {
        case FeatureFamily::turn_taking: return "turn_taking";
        case FeatureFamily::synchrony: return "synchrony";
        case FeatureFamily::causality: return "causality";
        case FeatureFamily::convergence: return "convergence";
    }
    return "unknown";
}

std::string tag(FeatureFamily f) {
    switch (f) {
        case FeatureFamily::turn_taking: return "tt";
        case FeatureFamily::synchrony: return "sync";
        case FeatureFamily::causality: return "caus";
        case FeatureFamily::convergence: return "conv";
    }
    return "unknown";
}

FeatureFamily family_from_tag(const std::string& t) {
    if (t == "tt") return FeatureFamily::turn_taking;
    if (t == "sync") return FeatureFamily::synchrony;
    if (t == "caus") return FeatureFamily::causality;
    if (t == "conv") return FeatureFamily::convergence;
    throw InputError("unknown feature set '" + t + "' (expected tt, sync, caus or conv)");
}

namespace {

struct FeatureSpec {
    std::string name;
    FeatureFamily family;
};

const std::vector<FeatureSpec>& feature_specs() {
    static const std::vector<FeatureSpec> specs = [] {
        std::vector<FeatureSpec> s;
        auto add = [&](std::initializer_list<const char*> names, FeatureFamily f) {
            for (const char* n : names) s.push_back({n, f});
        };
        add({"corr", "lagcorr_min", "lagcorr_max", "lagcorr_argmin", "lagcorr_argmax", "mi_min",
             "mi_max", "mi_mean", "mi_var", "mimicry_lag_min", "mimicry_lag_max",
             "mimicry_lag_mean", "mimicry_lag_var", "mimicry_lead_min", "mimicry_lead_max",
             "mimicry_lead_mean", "mimicry_lead_var"},
            FeatureFamily::synchrony);
        add({"coherence_min", "coherence_max", "granger_to", "granger_from"}, FeatureFamily::causality);
        add({"symconv", "asymconv_lag", "asymconv_lead", "globalconv"}, FeatureFamily::convergence);
        return s;
    }();
    return specs;
}

std::size_t samples(double seconds, double rate, std::size_t floor_value) {
    return std::max<std::size_t>(floor_value, static_cast<std::size_t>(std::llround(seconds * rate)));
}

template <typename F>
void guarded(F&& fn) {
    try {
        fn();
    } catch (const Error&) {
        // left as NaN
    }
}

}  // namespace

const std::vector<std::string>& pair_feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& s : feature_specs()) n.push_back(s.name);
        return n;
    }();
    return names;
}

FeatureFamily pair_feature_family(const std::string& name) {
    for (const auto& s : feature_specs()) {
        if (s.name == name) return s.family;
    }
    throw InputError("unknown pair feature '" + name + "'");
}

PairFeatureSet compute_pair_features(const ParticipantId& first, const ParticipantId& second,
                                     const std::string& channel, std::span<const double> a,
                                     std::span<const double> b, double rate_hz,
                                     const CoordinationConfig& cfg,
                                     const std::vector<FeatureFamily>& families) {
    if (a.size() != b.size()) throw InputError("pair features: series lengths differ");
    PairFeatureSet p{first, second, channel, {}};
    auto wanted = [&](FeatureFamily f) {
        return std::find(families.begin(), families.end(), f) != families.end();
    };
    for (const auto& s : feature_specs()) {
        if (wanted(s.family)) p.values[s.name] = kNaN;
    }
    auto& v = p.values;
    const std::size_t n = a.size();

    if (wanted(FeatureFamily::synchrony)) {
        guarded([&] { v["corr"] = pearson(a, b); });
        guarded([&] {
            std::size_t lag = samples(cfg.max_lag_s, rate_hz, 1);
            if (n >= 5) lag = std::min(lag, (n - 3) / 2);
            const auto r = lagged_correlation(a, b, static_cast<int>(lag));
            v["lagcorr_min"] = r.min;
            v["lagcorr_max"] = r.max;
            v["lagcorr_argmin"] = r.argmin;
            v["lagcorr_argmax"] = r.argmax;
        });
        guarded([&] {
            const auto r = mutual_information(a, b, cfg.mi_bins, samples(cfg.mi_window_s, rate_hz, 8));
            v["mi_min"] = r.min;
            v["mi_max"] = r.max;
            v["mi_mean"] = r.mean;
            v["mi_var"] = r.variance;
        });
        guarded([&] {
            const auto r = mimicry(a, b, samples(cfg.mimicry_window_s, rate_hz, 4));
            v["mimicry_lag_min"] = r.lag.min;
            v["mimicry_lag_max"] = r.lag.max;
            v["mimicry_lag_mean"] = r.lag.mean;
            v["mimicry_lag_var"] = r.lag.variance;
            v["mimicry_lead_min"] = r.lead.min;
            v["mimicry_lead_max"] = r.lead.max;
            v["mimicry_lead_mean"] = r.lead.mean;
            v["mimicry_lead_var"] = r.lead.variance;
        });
    }
    if (wanted(FeatureFamily::causality)) {
        guarded([&] {
            const auto r = coherence(a, b, samples(cfg.coherence_segment_s, rate_hz, 8));
            v["coherence_min"] = r.min;
            v["coherence_max"] = r.max;
        });
        guarded([&] { v["granger_to"] = granger(a, b, cfg.granger_order); });
        guarded([&] { v["granger_from"] = granger(b, a, cfg.granger_order); });
    }
    if (wanted(FeatureFamily::convergence)) {
        guarded([&] { v["symconv"] = symmetric_convergence(a, b); });
        guarded([&] { v["asymconv_lag"] = convergence_toward(a, b); });
        guarded([&] { v["asymconv_lead"] = convergence_toward(b, a); });
        guarded([&] { v["globalconv"] = global_convergence(a, b); });
    }
    return p;
}

PairFeatureSet reoriented(const PairFeatureSet& p) {
    PairFeatureSet out{p.second, p.first, p.channel, p.values};
    auto swap_keys = [&](const std::string& x, const std::string& y) {
        auto ix = p.values.find(x), iy = p.values.find(y);
        if (ix != p.values.end() && iy != p.values.end()) {
            out.values[x] = iy->second;
            out.values[y] = ix->second;
        }
    };
    for (const char* key : {"lagcorr_argmin", "lagcorr_argmax"}) {
        auto it = out.values.find(key);
        if (it != out.values.end() && !std::isnan(it->second)) it->second = -it->second;
    }
    for (const char* stat : {"min", "max", "mean", "var"}) {
        swap_keys(std::string("mimicry_lag_") + stat, std::string("mimicry_lead_") + stat);
    }
    swap_keys("granger_to", "granger_from");
    swap_keys("asymconv_lag", "asymconv_lead");
    return out;
}

}  // namespace convq
