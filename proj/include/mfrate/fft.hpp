#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mfrate/types.hpp"

namespace mfrate {

/// Owning wrapper around a pair of in-place FFTW plans (forward and
/// unnormalized backward) over a row-major tensor of the given extents.
///
/// Plans are created with FFTW_ESTIMATE so that the choice of algorithm,
/// and therefore the rounding, is identical from run to run. Plan creation
/// is serialized internally; execution is safe from any thread.
class FftPlan {
 public:
  explicit FftPlan(std::vector<int> extents);
  ~FftPlan();

  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
  FftPlan(FftPlan&& other) noexcept;
  FftPlan& operator=(FftPlan&& other) noexcept;

  void forward(std::span<cplx> data) const;
  // No 1/size factor.
  void backward(std::span<cplx> data) const;

  std::size_t size() const { return size_; }
  const std::vector<int>& extents() const { return extents_; }

 private:
  void execute(void* plan, std::span<cplx> data) const;
  void release() noexcept;

  std::vector<int> extents_;
  std::size_t size_ = 0;
  void* forward_ = nullptr;
  void* backward_ = nullptr;
};

inline std::span<cplx> as_span(CVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace mfrate
