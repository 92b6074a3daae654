#include "mfrate/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <numeric>
#include <string>

#include "mfrate/errors.hpp"

namespace mfrate {

namespace {

// The FFTW planner is not reentrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

FftPlan::FftPlan(std::vector<int> extents) : extents_(std::move(extents)) {
  if (extents_.empty()) throw ConfigError("FftPlan: no extents");
  size_ = 1;
  for (int e : extents_) {
    if (e < 1) throw ConfigError("FftPlan: extent must be positive");
    size_ *= static_cast<std::size_t>(e);
  }
  // Planning with FFTW_ESTIMATE never touches the array contents, but FFTW
  // still wants a correctly sized buffer to inspect.
  fftw_complex* scratch = fftw_alloc_complex(size_);
  if (scratch == nullptr) throw CapacityError("FftPlan: cannot allocate planning buffer");
  const int rank = static_cast<int>(extents_.size());
  {
    std::lock_guard lock(planner_mutex());
    forward_ = fftw_plan_dft(rank, extents_.data(), scratch, scratch, FFTW_FORWARD,
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
    backward_ = fftw_plan_dft(rank, extents_.data(), scratch, scratch, FFTW_BACKWARD,
                              FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  fftw_free(scratch);
  if (forward_ == nullptr || backward_ == nullptr) {
    release();
    throw NumericalError("FftPlan: FFTW could not create a plan");
  }
}

FftPlan::~FftPlan() { release(); }

FftPlan::FftPlan(FftPlan&& other) noexcept
    : extents_(std::move(other.extents_)),
      size_(other.size_),
      forward_(other.forward_),
      backward_(other.backward_) {
  other.forward_ = nullptr;
  other.backward_ = nullptr;
  other.size_ = 0;
}

FftPlan& FftPlan::operator=(FftPlan&& other) noexcept {
  if (this != &other) {
    release();
    extents_ = std::move(other.extents_);
    size_ = other.size_;
    forward_ = other.forward_;
    backward_ = other.backward_;
    other.forward_ = nullptr;
    other.backward_ = nullptr;
    other.size_ = 0;
  }
  return *this;
}

void FftPlan::release() noexcept {
  if (forward_ == nullptr && backward_ == nullptr) return;
  std::lock_guard lock(planner_mutex());
  if (forward_ != nullptr) fftw_destroy_plan(static_cast<fftw_plan>(forward_));
  if (backward_ != nullptr) fftw_destroy_plan(static_cast<fftw_plan>(backward_));
  forward_ = nullptr;
  backward_ = nullptr;
}

void FftPlan::execute(void* plan, std::span<cplx> data) const {
  if (data.size() != size_) {
    throw ConfigError("FftPlan: buffer of size " + std::to_string(data.size()) +
                      " does not match plan size " + std::to_string(size_));
  }
  fftw_execute_dft(static_cast<fftw_plan>(plan), as_fftw(data.data()), as_fftw(data.data()));
}

void FftPlan::forward(std::span<cplx> data) const { execute(forward_, data); }

void FftPlan::backward(std::span<cplx> data) const { execute(backward_, data); }

}  // namespace mfrate
