#include "spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "convq/errors.hpp"

namespace convq::spectral {

namespace {
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

std::vector<double> hann(std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (n < 2) return w;
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                    static_cast<double>(n - 1));
    }
    return w;
}

RealFft::RealFft(std::size_t n) : n_(n) {
    if (n < 2) throw InputError("transform length must be at least 2");
    std::lock_guard lock(planner_mutex());
    in_ = fftw_alloc_real(n_);
    auto* out = fftw_alloc_complex(bins());
    out_ = out;
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), in_, out, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_));
    fftw_free(static_cast<fftw_complex*>(out_));
    fftw_free(in_);
}

void RealFft::forward(std::span<const double> input, std::vector<std::complex<double>>& out) {
    if (input.size() != n_) throw InputError("transform input has wrong length");
    std::copy(input.begin(), input.end(), in_);
    fftw_execute(static_cast<fftw_plan>(plan_));
    const auto* res = static_cast<const fftw_complex*>(out_);
    out.resize(bins());
    for (std::size_t k = 0; k < bins(); ++k) out[k] = {res[k][0], res[k][1]};
}

}  // namespace convq::spectral
