#include "specklenet/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>

namespace specklenet::fft {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
// Plans are made once per (shape, direction) and kept for the process lifetime.
std::mutex g_plan_mutex;
std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> g_plans;

fftw_plan plan_for(std::size_t rows, std::size_t cols, int sign) {
  std::lock_guard lock(g_plan_mutex);
  const auto key = std::make_tuple(rows, cols, sign);
  if (auto it = g_plans.find(key); it != g_plans.end()) return it->second;
  auto* buf = fftw_alloc_complex(rows * cols);
  fftw_plan p = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), buf, buf,
                                 sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(buf);
  g_plans.emplace(key, p);
  return p;
}

void execute(Grid2D<Complex>& g, int sign) {
  if (g.empty()) return;
  auto* data = reinterpret_cast<fftw_complex*>(g.data());
  fftw_execute_dft(plan_for(g.rows(), g.cols(), sign), data, data);
}

}  // namespace

void forward(Grid2D<Complex>& g) { execute(g, FFTW_FORWARD); }

void inverse(Grid2D<Complex>& g) {
  execute(g, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(g.size());
  for (auto& v : g.values()) v *= scale;
}

}  // namespace specklenet::fft
