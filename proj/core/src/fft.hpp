#pragma once

// Thin FFTW wrapper. Plans are created once per size under a lock and then
// executed with the new-array interface, which FFTW documents as thread safe.

#include <complex>
#include <cstddef>
#include <span>

namespace qbv::fft {

/// Real-to-complex forward transform of length in.size(); writes n/2+1 bins.
void real_forward(std::span<const double> in, std::span<std::complex<double>> out);

/// Unnormalized forward 2-D complex transform of a row-major rows x cols array.
void forward_2d(std::size_t rows, std::size_t cols, std::span<const std::complex<double>> in,
                std::span<std::complex<double>> out);

}  // namespace qbv::fft
