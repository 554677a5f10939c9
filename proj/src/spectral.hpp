#pragma once

// FFTW-backed real-input DFT used by the band-power and coherence code.

#include <complex>
#include <span>
#include <vector>

namespace convq::spectral {

/// Periodic-free ("symmetric") Hann taper of length n.
std::vector<double> hann(std::size_t n);

/// Plan for a length-n real-to-complex transform, reusable across calls.
/// Plan creation is serialized internally; execution is thread-safe per
/// instance.
class RealFft {
public:
    explicit RealFft(std::size_t n);
    ~RealFft();
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    std::size_t size() const noexcept { return n_; }
    std::size_t bins() const noexcept { return n_ / 2 + 1; }

    /// Spectrum bins 0..n/2 of `input` (length n).
    void forward(std::span<const double> input, std::vector<std::complex<double>>& out);

private:
    std::size_t n_;
    double* in_ = nullptr;
    void* out_ = nullptr;
    void* plan_ = nullptr;
};

}  // namespace convq::spectral
