#pragma once

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>

#include "magray/types.hpp"

namespace magray {

// Length-n complex DFT with plans shared per size. Forward output is normalized by 1/n so that
// u(theta_l) = sum_k c_k e^{i k theta_l}; coefficient index j maps to frequency freq(j).
class FiberFFT {
 public:
  explicit FiberFFT(int n) : n_(n), plans_(plans(n)) {}

  int size() const { return n_; }
  static int freq(int j, int n) { return j < n / 2 ? j : j - n; }
  static int slot(int k, int n) { return k >= 0 ? k : k + n; }

  void forward(const cd* in, cd* out) const {
    fftw_execute_dft(plans_->fwd, reinterpret_cast<fftw_complex*>(const_cast<cd*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
    const double s = 1.0 / n_;
    for (int j = 0; j < n_; ++j) out[j] *= s;
  }
  void inverse(const cd* in, cd* out) const {
    fftw_execute_dft(plans_->bwd, reinterpret_cast<fftw_complex*>(const_cast<cd*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
  }

 private:
  struct Plans {
    fftw_plan fwd = nullptr, bwd = nullptr;
    ~Plans() {
      if (fwd) fftw_destroy_plan(fwd);
      if (bwd) fftw_destroy_plan(bwd);
    }
  };

  static std::shared_ptr<Plans> plans(int n) {
    static std::mutex m;
    static std::map<int, std::shared_ptr<Plans>> cache;
    std::lock_guard<std::mutex> lock(m);
    auto& p = cache[n];
    if (!p) {
      p = std::make_shared<Plans>();
      fftw_complex* a = fftw_alloc_complex(static_cast<std::size_t>(n));
      fftw_complex* b = fftw_alloc_complex(static_cast<std::size_t>(n));
      p->fwd = fftw_plan_dft_1d(n, a, b, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
      p->bwd = fftw_plan_dft_1d(n, a, b, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
      fftw_free(a);
      fftw_free(b);
    }
    return p;
  }

  int n_;
  std::shared_ptr<Plans> plans_;
};

}  // namespace magray
