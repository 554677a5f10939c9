#pragma once

// Straightforward reference implementations used to check the library.
// They favour obviousness over speed and share no code with src/.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Two-pass sample standard deviation.
inline double sample_sd(const std::vector<double>& v) {
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double pop_variance(const std::vector<double>& v) {
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size());
}

// cov / (sd sd) from the textbook definition.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// corr(a_t, b_{t+lag}) for every lag, keyed by lag.
inline std::map<int, double> lag_profile(const std::vector<double>& a, const std::vector<double>& b, int max_lag) {
    std::map<int, double> out;
    const int n = static_cast<int>(a.size());
    for (int lag = -max_lag; lag <= max_lag; ++lag) {
        std::vector<double> x, y;
        for (int t = 0; t < n; ++t) {
            const int u = t + lag;
            if (u < 0 || u >= n) continue;
            x.push_back(a[static_cast<std::size_t>(t)]);
            y.push_back(b[static_cast<std::size_t>(u)]);
        }
        out[lag] = pearson(x, y);
    }
    return out;
}

struct Run {
    std::int64_t start, end;  // [start, end)
    bool operator==(const Run&) const = default;
};

// Turns by repeatedly fusing adjacent speech runs whose silent gap is at
// most `gap` samples, until nothing changes.
inline std::vector<Run> merge_turns(const std::vector<std::uint8_t>& s, std::int64_t gap) {
    std::vector<Run> runs;
    for (std::size_t t = 0; t < s.size(); ++t) {
        if (!s[t]) continue;
        if (t == 0 || !s[t - 1]) runs.push_back({static_cast<std::int64_t>(t), static_cast<std::int64_t>(t) + 1});
        else runs.back().end = static_cast<std::int64_t>(t) + 1;
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t k = 0; k + 1 < runs.size(); ++k) {
            if (runs[k + 1].start - runs[k].end <= gap) {
                runs[k].end = runs[k + 1].end;
                runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(k) + 1);
                changed = true;
                break;
            }
        }
    }
    return runs;
}

// Interruptions found by walking the clock: at every sample where a turn
// of j begins while i is already mid-turn, follow time forward to see
// whose turn ends first. Returns counts indexed [interrupter][interrupted].
struct InterruptionCounts {
    std::vector<std::vector<int>> success, unsuccess;
};

inline InterruptionCounts scan_interruptions(const std::vector<std::vector<Run>>& turns, std::int64_t horizon) {
    const std::size_t n = turns.size();
    InterruptionCounts out{std::vector<std::vector<int>>(n, std::vector<int>(n, 0)),
                           std::vector<std::vector<int>>(n, std::vector<int>(n, 0))};
    auto turn_at = [&](std::size_t who, std::int64_t t) -> const Run* {
        for (const auto& r : turns[who]) {
            if (r.start <= t && t < r.end) return &r;
        }
        return nullptr;
    };
    for (std::int64_t t = 0; t < horizon; ++t) {
        for (std::size_t j = 0; j < n; ++j) {
            const Run* tj = turn_at(j, t);
            if (!tj || tj->start != t) continue;
            for (std::size_t i = 0; i < n; ++i) {
                if (i == j) continue;
                const Run* ti = turn_at(i, t);
                if (!ti || ti->start == t) continue;
                // Step forward until one of the two turns is over.
                std::int64_t u = t;
                while (u < ti->end && u < tj->end) ++u;
                if (u == ti->end && u < tj->end) ++out.success[j][i];
                else ++out.unsuccess[j][i];
            }
        }
    }
    return out;
}

// Quadratic weighted kappa from the K x K contingency table by explicit
// double sums.
inline double kappa_table(const std::vector<int>& r1, const std::vector<int>& r2, int k) {
    std::vector<std::vector<double>> obs(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(k), 0.0));
    for (std::size_t n = 0; n < r1.size(); ++n) obs[static_cast<std::size_t>(r1[n] - 1)][static_cast<std::size_t>(r2[n] - 1)] += 1.0;
    std::vector<double> row(static_cast<std::size_t>(k), 0.0), col(static_cast<std::size_t>(k), 0.0);
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            row[static_cast<std::size_t>(i)] += obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            col[static_cast<std::size_t>(j)] += obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            total += obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    double num = 0.0, den = 0.0;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double w = static_cast<double>((i - j) * (i - j)) / static_cast<double>((k - 1) * (k - 1));
            num += w * obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            den += w * row[static_cast<std::size_t>(i)] * col[static_cast<std::size_t>(j)] / total;
        }
    }
    return 1.0 - num / den;
}

// Mid-ranks by counting, for every element, how many are smaller and how
// many are equal.
inline std::vector<double> mid_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double less = 0, equal = 0;
        for (double w : v) {
            if (w < v[i]) less += 1;
            else if (w == v[i]) equal += 1;
        }
        r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
}

inline double check_loss(const std::vector<double>& x, const std::vector<double>& y, double b0, double b1, double tau) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double u = y[i] - b0 - b1 * x[i];
        s += u * (tau - (u < 0 ? 1.0 : 0.0));
    }
    return s;
}

// Coarse-to-fine grid search of the (intercept, slope) check-loss minimum.
inline std::pair<double, double> grid_quantile_fit(const std::vector<double>& x, const std::vector<double>& y,
                                                   double tau, double b0_lo, double b0_hi, double b1_lo, double b1_hi,
                                                   int steps = 60, int rounds = 6) {
    double best0 = 0.0, best1 = 0.0;
    for (int r = 0; r < rounds; ++r) {
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= steps; ++i) {
            for (int j = 0; j <= steps; ++j) {
                const double b0 = b0_lo + (b0_hi - b0_lo) * i / steps;
                const double b1 = b1_lo + (b1_hi - b1_lo) * j / steps;
                const double l = check_loss(x, y, b0, b1, tau);
                if (l < best) {
                    best = l;
                    best0 = b0;
                    best1 = b1;
                }
            }
        }
        const double w0 = (b0_hi - b0_lo) / steps * 2, w1 = (b1_hi - b1_lo) / steps * 2;
        b0_lo = best0 - w0;
        b0_hi = best0 + w0;
        b1_lo = best1 - w1;
        b1_hi = best1 + w1;
    }
    return {best0, best1};
}

// Residual sum of squares of y on [1, X] via the normal equations.
inline double ols_rss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    Eigen::MatrixXd d(x.rows(), x.cols() + 1);
    d.col(0).setOnes();
    d.rightCols(x.cols()) = x;
    const Eigen::VectorXd beta = (d.transpose() * d).ldlt().solve(d.transpose() * y);
    return (y - d * beta).squaredNorm();
}

// Granger F from two explicitly built nested regressions.
inline double granger_f(const std::vector<double>& cause, const std::vector<double>& effect, int p) {
    const int n = static_cast<int>(effect.size());
    const int rows = n - p;
    Eigen::MatrixXd restricted(rows, p), full(rows, 2 * p);
    Eigen::VectorXd y(rows);
    for (int t = p; t < n; ++t) {
        y(t - p) = effect[static_cast<std::size_t>(t)];
        for (int k = 1; k <= p; ++k) {
            restricted(t - p, k - 1) = effect[static_cast<std::size_t>(t - k)];
            full(t - p, k - 1) = effect[static_cast<std::size_t>(t - k)];
            full(t - p, p + k - 1) = cause[static_cast<std::size_t>(t - k)];
        }
    }
    const double rss_r = ols_rss(restricted, y);
    const double rss_u = ols_rss(full, y);
    return ((rss_r - rss_u) / p) / (rss_u / (rows - 2 * p - 1));
}

// Power of one Hann-tapered window at DFT bin k, by the direct sum.
inline std::vector<double> dft_power(const std::vector<double>& x) {
    const std::size_t n = x.size();
    const double pi = std::acos(-1.0);
    std::vector<double> p(n / 2 + 1);
    for (std::size_t k = 0; k < p.size(); ++k) {
        std::complex<double> s = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double w = 0.5 - 0.5 * std::cos(2 * pi * static_cast<double>(t) / static_cast<double>(n));
            s += w * x[t] * std::polar(1.0, -2 * pi * static_cast<double>(k * t) / static_cast<double>(n));
        }
        p[k] = std::norm(s);
    }
    return p;
}

inline std::vector<double> normal_series(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

}  // namespace oracle
