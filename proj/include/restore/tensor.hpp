#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "restore/errors.hpp"

namespace restore {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ')';
  return os.str();
}

// Dense row-major n-d array. Dumb on purpose: the layer ops own all the math,
// this type only owns storage and indexing.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(numel_of(shape), T(0)) {}
  Tensor(Shape s, T fill) : shape(std::move(s)), data(numel_of(shape), fill) {}
  Tensor(Shape s, std::initializer_list<T> vals) : shape(std::move(s)), data(vals) {
    if (data.size() != numel_of(shape))
      throw DimensionError("tensor init list size does not match shape " + shape_str(shape));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t dim(std::size_t i) const {
    assert(i < shape.size());
    return shape[i];
  }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](std::size_t i) {
    assert(i < data.size());
    return data[i];
  }
  const T& operator[](std::size_t i) const {
    assert(i < data.size());
    return data[i];
  }

  template <typename... Ix>
  T& at(Ix... ix) {
    return data[offset(ix...)];
  }
  template <typename... Ix>
  const T& at(Ix... ix) const {
    return data[offset(ix...)];
  }

  template <typename... Ix>
  std::size_t offset(Ix... ix) const {
    assert(sizeof...(Ix) == shape.size());
    std::size_t idx[] = {static_cast<std::size_t>(ix)...};
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizeof...(Ix); ++k) {
      assert(idx[k] < shape[k]);
      off = off * shape[k] + idx[k];
    }
    return off;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T>
T sum_of(const Tensor<T>& t) {
  T s = T(0);
  for (T v : t.data) s += v;
  return s;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  T m = T(0);
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
double l2_norm(const Tensor<T>& t) {
  double s = 0.0;
  for (T v : t.data) s += double(v) * double(v);
  return std::sqrt(s);
}

}  // namespace restore
