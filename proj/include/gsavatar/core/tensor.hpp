#pragma once

#include <initializer_list>
#include <numeric>
#include <vector>

#include "gsavatar/core/common.hpp"

namespace gsavatar {

// Dense row-major container. Most of the pipeline works with 2-D shapes
// (rows = tokens / pixels / primitives, cols = channels).
struct Tensor {
  std::vector<long> shape;
  std::vector<real> v;

  Tensor() = default;
  Tensor(long r, long c) : shape{r, c}, v(size_t(r) * size_t(c), 0.0) {}
  explicit Tensor(std::vector<long> s) : shape(std::move(s)) {
    v.assign(size_t(numel_of(shape)), 0.0);
  }

  static long numel_of(const std::vector<long>& s) {
    long n = 1;
    for (long d : s) n *= d;
    return n;
  }

  long numel() const { return long(v.size()); }
  long rows() const { return shape.empty() ? 0 : shape[0]; }
  long cols() const {
    if (shape.size() < 2) return shape.size() == 1 ? 1 : 0;
    long c = 1;
    for (size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return c;
  }

  real& operator()(long r, long c) { return v[size_t(r) * size_t(cols()) + size_t(c)]; }
  real operator()(long r, long c) const { return v[size_t(r) * size_t(cols()) + size_t(c)]; }

  MatMap mat() { return MatMap(v.data(), rows(), cols()); }
  CMatMap mat() const { return CMatMap(v.data(), rows(), cols()); }

  void fill(real x) { std::fill(v.begin(), v.end(), x); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  static Tensor full(long r, long c, real x) {
    Tensor t(r, c);
    t.fill(x);
    return t;
  }

  static Tensor from_rows(const std::vector<std::vector<real>>& rows_in) {
    GS_CHECK(!rows_in.empty(), "from_rows: empty");
    Tensor t(long(rows_in.size()), long(rows_in[0].size()));
    for (size_t r = 0; r < rows_in.size(); ++r)
      for (size_t c = 0; c < rows_in[r].size(); ++c) t(long(r), long(c)) = rows_in[r][c];
    return t;
  }
};

inline real max_abs_diff(const Tensor& a, const Tensor& b) {
  GS_CHECK(a.numel() == b.numel(), "max_abs_diff: size mismatch");
  real m = 0;
  for (long i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.v[size_t(i)] - b.v[size_t(i)]));
  return m;
}

}  // namespace gsavatar
