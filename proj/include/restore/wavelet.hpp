#pragma once

#include <cstddef>
#include <string>

#include "restore/tensor.hpp"

namespace restore {

// Single-level orthonormal 2-D Haar transform. Each 2x2 block [a b; c d] maps to
//   ll = (a+b+c+d)/2   lh = (a+b-c-d)/2
//   hl = (a-b+c-d)/2   hh = (a-b-c+d)/2
// The 1/2-per-block scaling makes the transform orthogonal: energy is preserved
// and the adjoint equals the inverse, which the autodiff layer relies on.

template <typename T>
struct SubbandSet {
  Tensor<T> ll, lh, hl, hh;
};

namespace detail {

template <typename T>
inline void haar_decompose_plane(const T* src, std::size_t h, std::size_t w, T* ll, T* lh, T* hl,
                                 T* hh) {
  const std::size_t hh2 = h / 2, hw2 = w / 2;
  for (std::size_t y = 0; y < hh2; ++y) {
    const T* r0 = src + (2 * y) * w;
    const T* r1 = src + (2 * y + 1) * w;
    T* pll = ll + y * hw2;
    T* plh = lh + y * hw2;
    T* phl = hl + y * hw2;
    T* phh = hh + y * hw2;
    for (std::size_t x = 0; x < hw2; ++x) {
      const T a = r0[2 * x], b = r0[2 * x + 1];
      const T c = r1[2 * x], d = r1[2 * x + 1];
      pll[x] = (a + b + c + d) / T(2);
      plh[x] = (a + b - c - d) / T(2);
      phl[x] = (a - b + c - d) / T(2);
      phh[x] = (a - b - c + d) / T(2);
    }
  }
}

template <typename T>
inline void haar_reconstruct_plane(const T* ll, const T* lh, const T* hl, const T* hh,
                                   std::size_t h2, std::size_t w2, T* dst) {
  const std::size_t w = 2 * w2;
  for (std::size_t y = 0; y < h2; ++y) {
    const T* pll = ll + y * w2;
    const T* plh = lh + y * w2;
    const T* phl = hl + y * w2;
    const T* phh = hh + y * w2;
    T* r0 = dst + (2 * y) * w;
    T* r1 = dst + (2 * y + 1) * w;
    for (std::size_t x = 0; x < w2; ++x) {
      const T s = pll[x], t = plh[x], u = phl[x], v = phh[x];
      r0[2 * x] = (s + t + u + v) / T(2);
      r0[2 * x + 1] = (s + t - u - v) / T(2);
      r1[2 * x] = (s - t + u - v) / T(2);
      r1[2 * x + 1] = (s - t - u + v) / T(2);
    }
  }
}

// Accumulating variant of the reconstruction, used as the decompose adjoint.
template <typename T>
inline void haar_reconstruct_plane_add(const T* ll, const T* lh, const T* hl, const T* hh,
                                       std::size_t h2, std::size_t w2, T* dst) {
  const std::size_t w = 2 * w2;
  for (std::size_t y = 0; y < h2; ++y) {
    const T* pll = ll + y * w2;
    const T* plh = lh + y * w2;
    const T* phl = hl + y * w2;
    const T* phh = hh + y * w2;
    T* r0 = dst + (2 * y) * w;
    T* r1 = dst + (2 * y + 1) * w;
    for (std::size_t x = 0; x < w2; ++x) {
      const T s = pll[x], t = plh[x], u = phl[x], v = phh[x];
      r0[2 * x] += (s + t + u + v) / T(2);
      r0[2 * x + 1] += (s + t - u - v) / T(2);
      r1[2 * x] += (s - t + u - v) / T(2);
      r1[2 * x + 1] += (s - t - u + v) / T(2);
    }
  }
}

template <typename T>
inline void haar_decompose_plane_add(const T* src, std::size_t h, std::size_t w, T* ll, T* lh,
                                     T* hl, T* hh) {
  const std::size_t hh2 = h / 2, hw2 = w / 2;
  for (std::size_t y = 0; y < hh2; ++y) {
    const T* r0 = src + (2 * y) * w;
    const T* r1 = src + (2 * y + 1) * w;
    for (std::size_t x = 0; x < hw2; ++x) {
      const T a = r0[2 * x], b = r0[2 * x + 1];
      const T c = r1[2 * x], d = r1[2 * x + 1];
      const std::size_t i = y * hw2 + x;
      ll[i] += (a + b + c + d) / T(2);
      lh[i] += (a + b - c - d) / T(2);
      hl[i] += (a - b + c - d) / T(2);
      hh[i] += (a - b - c + d) / T(2);
    }
  }
}

}  // namespace detail

template <typename T>
SubbandSet<T> haar_decompose(const Tensor<T>& image) {
  if (image.ndim() != 2)
    throw DimensionError("haar_decompose expects a 2-D array, got " + shape_str(image.shape));
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (h % 2 != 0)
    throw DimensionError("haar_decompose: height " + std::to_string(h) + " is odd");
  if (w % 2 != 0) throw DimensionError("haar_decompose: width " + std::to_string(w) + " is odd");
  SubbandSet<T> out{Tensor<T>({h / 2, w / 2}), Tensor<T>({h / 2, w / 2}),
                    Tensor<T>({h / 2, w / 2}), Tensor<T>({h / 2, w / 2})};
  detail::haar_decompose_plane(image.ptr(), h, w, out.ll.ptr(), out.lh.ptr(), out.hl.ptr(),
                               out.hh.ptr());
  return out;
}

template <typename T>
Tensor<T> haar_reconstruct(const SubbandSet<T>& sb) {
  if (sb.ll.ndim() != 2) throw DimensionError("haar_reconstruct expects 2-D subbands");
  if (!(sb.ll.same_shape(sb.lh) && sb.ll.same_shape(sb.hl) && sb.ll.same_shape(sb.hh)))
    throw DimensionError("haar_reconstruct: subband shapes disagree: ll " + shape_str(sb.ll.shape) +
                         ", lh " + shape_str(sb.lh.shape) + ", hl " + shape_str(sb.hl.shape) +
                         ", hh " + shape_str(sb.hh.shape));
  const std::size_t h2 = sb.ll.dim(0), w2 = sb.ll.dim(1);
  Tensor<T> out({2 * h2, 2 * w2});
  detail::haar_reconstruct_plane(sb.ll.ptr(), sb.lh.ptr(), sb.hl.ptr(), sb.hh.ptr(), h2, w2,
                                 out.ptr());
  return out;
}

}  // namespace restore
