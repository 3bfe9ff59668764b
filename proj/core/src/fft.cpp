#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace qbv::fft {

namespace {

enum class PlanKind { r2c_1d, c2c_2d };

class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(PlanKind kind, std::size_t rows, std::size_t cols) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(kind, rows, cols);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    fftw_plan plan = nullptr;
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    if (kind == PlanKind::r2c_1d) {
      std::vector<double> in(cols);
      std::vector<fftw_complex> out(cols / 2 + 1);
      plan = fftw_plan_dft_r2c_1d(static_cast<int>(cols), in.data(), out.data(), flags);
    } else {
      std::vector<fftw_complex> in(rows * cols);
      std::vector<fftw_complex> out(rows * cols);
      plan = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), in.data(), out.data(),
                              FFTW_FORWARD, flags);
    }
    if (plan == nullptr) throw std::runtime_error("FFTW failed to create a plan");
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<PlanKind, std::size_t, std::size_t>, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

}  // namespace

void real_forward(std::span<const double> in, std::span<std::complex<double>> out) {
  const std::size_t n = in.size();
  if (n == 0 || out.size() != n / 2 + 1) throw std::invalid_argument("real_forward: bad buffer sizes");
  fftw_plan plan = cache().get(PlanKind::r2c_1d, 1, n);
  std::vector<double> buffer(in.begin(), in.end());
  fftw_execute_dft_r2c(plan, buffer.data(), reinterpret_cast<fftw_complex*>(out.data()));
}

void forward_2d(std::size_t rows, std::size_t cols, std::span<const std::complex<double>> in,
                std::span<std::complex<double>> out) {
  if (rows == 0 || cols == 0 || in.size() != rows * cols || out.size() != rows * cols) {
    throw std::invalid_argument("forward_2d: bad buffer sizes");
  }
  fftw_plan plan = cache().get(PlanKind::c2c_2d, rows, cols);
  std::vector<std::complex<double>> buffer(in.begin(), in.end());
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(buffer.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

}  // namespace qbv::fft
