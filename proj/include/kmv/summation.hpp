#pragma once

#ifdef __FAST_MATH__
#error "-ffast-math would defeat compensated summation"
#endif

#include <cmath>
#include <cstddef>
#include <vector>

namespace kmv {

// Neumaier variant of Kahan summation.
struct NeumaierSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      carry += (sum - t) + x;
    } else {
      carry += (x - t) + sum;
    }
    sum = t;
  }

  double value() const { return sum + carry; }
};

// Block size of the deterministic reduction tree. Partial sums are formed
// per block and combined in block order, so the result is a function of the
// data only, never of the number of threads.
inline constexpr std::size_t kSumBlock = 4096;

inline std::size_t sum_block_count(std::size_t n) { return (n + kSumBlock - 1) / kSumBlock; }

// Compensated sum of term(i) for i in [0, n). `parallel` distributes blocks
// over OpenMP threads; the combination order is fixed either way.
template <class Term>
double blocked_sum(std::size_t n, Term&& term, bool parallel = true) {
  if (n == 0) return 0.0;
  const std::size_t nblocks = sum_block_count(n);
  if (nblocks == 1) {
    NeumaierSum acc;
    for (std::size_t i = 0; i < n; ++i) acc.add(term(i));
    return acc.value();
  }
  std::vector<double> partial(nblocks);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nblocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kSumBlock;
    const std::size_t hi = std::min(lo + kSumBlock, n);
    NeumaierSum acc;
    for (std::size_t i = lo; i < hi; ++i) acc.add(term(i));
    partial[static_cast<std::size_t>(b)] = acc.value();
  }
  NeumaierSum total;
  for (double p : partial) total.add(p);
  return total.value();
}

template <class Term>
double blocked_mean(std::size_t n, Term&& term, bool parallel = true) {
  return blocked_sum(n, term, parallel) / static_cast<double>(n);
}

}  // namespace kmv
