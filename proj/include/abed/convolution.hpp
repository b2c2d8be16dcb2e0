#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "abed/tensor.hpp"

#if defined(__AVX512VNNI__) && defined(__AVX512BW__) && defined(__AVX512F__)
#define ABED_HAVE_VNNI 1
#include <immintrin.h>
#endif

namespace abed {

/// Maximum CRS for which int32 accumulation of int8 products cannot wrap
/// (16 + log2(CRS) <= 32). Wider windows need a wider accumulator plan.
inline constexpr std::int64_t kMaxCrsForI32 = 65536;

struct Matrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  ElemKind kind = ElemKind::I8;
  std::vector<std::byte> data;

  Matrix() = default;
  Matrix(std::int64_t r, std::int64_t c, ElemKind k) : rows(r), cols(c), kind(k) {
    if (r < 1 || c < 1) throw std::invalid_argument("Matrix: extents must be >= 1");
    data.resize(static_cast<std::size_t>(r) * static_cast<std::size_t>(c) * elem_size(k));
  }

  std::int64_t count() const { return rows * cols; }

  template <typename T>
  std::span<T> view() {
    check_kind<T>();
    return {reinterpret_cast<T*>(data.data()), static_cast<std::size_t>(count())};
  }
  template <typename T>
  std::span<const T> view() const {
    check_kind<T>();
    return {reinterpret_cast<const T*>(data.data()), static_cast<std::size_t>(count())};
  }
  template <typename T>
  T& at(std::int64_t i, std::int64_t j) {
    return view<T>()[static_cast<std::size_t>(i * cols + j)];
  }
  template <typename T>
  T at(std::int64_t i, std::int64_t j) const {
    return view<const T>()[static_cast<std::size_t>(i * cols + j)];
  }

  bool operator==(const Matrix&) const = default;

 private:
  template <typename T>
  void check_kind() const {
    if (kind_of<std::remove_const_t<T>>() != kind)
      throw std::invalid_argument("Matrix: element access with mismatched kind");
  }
};

namespace detail {

inline void check_conv_args(const Tensor4D& input, const Tensor4D& filters,
                            const LayerShape& shape, ElemKind in_kind, ElemKind filt_kind) {
  if (input.kind() != in_kind || input.dims() != shape.input_dims())
    throw std::invalid_argument("conv: input tensor does not match shape");
  if (filters.kind() != filt_kind || filters.dims() != shape.filter_dims())
    throw std::invalid_argument("conv: filter tensor does not match shape");
}

/// Reference convolution: the plain loop nest over (n,k,p,q,c,r,s) with
/// explicit zero-padding checks. Kept free of the im2col machinery so the
/// two routes stay independent.
template <typename TIn, typename TW, typename TAcc>
Tensor4D conv_reference(const Tensor4D& input, const Tensor4D& filters, const LayerShape& shape) {
  check_conv_args(input, filters, shape, kind_of<TIn>(), kind_of<TW>());
  Tensor4D out(shape.output_dims(), kind_of<TAcc>());
  const auto in = input.view<const TIn>();
  const auto ft = filters.view<const TW>();
  auto ov = out.view<TAcc>();
  for (std::int64_t n = 0; n < shape.n; ++n) {
    for (std::int64_t k = 0; k < shape.k; ++k) {
      for (std::int64_t p = 0; p < shape.p; ++p) {
        const std::int64_t h0 = p * shape.stride_h - shape.pad_h;
        for (std::int64_t q = 0; q < shape.q; ++q) {
          const std::int64_t w0 = q * shape.stride_w - shape.pad_w;
          TAcc acc = 0;
          for (std::int64_t c = 0; c < shape.c; ++c) {
            for (std::int64_t r = 0; r < shape.r; ++r) {
              const std::int64_t h_idx = h0 + r;
              if (h_idx < 0 || h_idx >= shape.h) continue;
              for (std::int64_t s = 0; s < shape.s; ++s) {
                const std::int64_t w_idx = w0 + s;
                if (w_idx < 0 || w_idx >= shape.w) continue;
                const TIn x = in[static_cast<std::size_t>(((n * shape.c + c) * shape.h + h_idx) * shape.w + w_idx)];
                const TW f = ft[static_cast<std::size_t>(((k * shape.c + c) * shape.r + r) * shape.s + s)];
                acc += static_cast<TAcc>(x) * static_cast<TAcc>(f);
              }
            }
          }
          ov[static_cast<std::size_t>(((n * shape.k + k) * shape.p + p) * shape.q + q)] = acc;
        }
      }
    }
  }
  return out;
}

template <typename TAcc, typename TA, typename TB>
inline TAcc row_dot(const TA* a, const TB* b, std::int64_t len) {
  TAcc acc = 0;
  for (std::int64_t i = 0; i < len; ++i)
    acc += static_cast<TAcc>(a[i]) * static_cast<TAcc>(b[i]);
  return acc;
}

#ifdef ABED_HAVE_VNNI
// Exact u8 x s8 dot product. Each vpdpbusd product fits an i16 and the full
// accumulation stays below 2^31 for len <= 64K, so no saturation occurs.
inline std::int32_t dot_u8s8(const std::uint8_t* a, const std::int8_t* b, std::int64_t len) {
  __m512i acc = _mm512_setzero_si512();
  std::int64_t i = 0;
  for (; i + 64 <= len; i += 64) {
    acc = _mm512_dpbusd_epi32(acc, _mm512_loadu_si512(a + i),
                              _mm512_loadu_si512(reinterpret_cast<const void*>(b + i)));
  }
  std::int32_t sum = _mm512_reduce_add_epi32(acc);
  for (; i < len; ++i)
    sum += static_cast<std::int32_t>(a[i]) * static_cast<std::int32_t>(b[i]);
  return sum;
}
#endif

/// Patch-major im2col: row j = (n*P + p)*Q + q holds the zero-padded window
/// in (c,r,s) order. Contiguous rows make the inner product vectorizable.
template <typename T>
void im2col_rows(const Tensor4D& input, const LayerShape& shape, std::vector<T>& rows) {
  const auto in = input.view<const T>();
  const std::int64_t crs = shape.crs();
  rows.assign(static_cast<std::size_t>(shape.npq() * crs), T{0});
  for (std::int64_t n = 0; n < shape.n; ++n) {
    for (std::int64_t p = 0; p < shape.p; ++p) {
      const std::int64_t h0 = p * shape.stride_h - shape.pad_h;
      for (std::int64_t q = 0; q < shape.q; ++q) {
        const std::int64_t w0 = q * shape.stride_w - shape.pad_w;
        T* row = rows.data() + static_cast<std::size_t>(((n * shape.p + p) * shape.q + q) * crs);
        for (std::int64_t c = 0; c < shape.c; ++c) {
          for (std::int64_t r = 0; r < shape.r; ++r) {
            const std::int64_t h_idx = h0 + r;
            if (h_idx < 0 || h_idx >= shape.h) continue;
            const T* src = in.data() + static_cast<std::size_t>(((n * shape.c + c) * shape.h + h_idx) * shape.w);
            T* dst = row + (c * shape.r + r) * shape.s;
            const std::int64_t s_lo = std::max<std::int64_t>(0, -w0);
            const std::int64_t s_hi = std::min<std::int64_t>(shape.s, shape.w - w0);
            for (std::int64_t s = s_lo; s < s_hi; ++s) dst[s] = src[w0 + s];
          }
        }
      }
    }
  }
}

/// Convolution over prebuilt patch rows; out[n,k,p,q] = filt_k . row_(n,p,q).
/// Filters are visited in blocks sized to stay cache-resident across the row
/// sweep, which keeps large-K layers off the memory-bandwidth wall.
inline Tensor4D conv_rows_i8(const std::vector<std::int8_t>& rows, const Tensor4D& filters,
                             const LayerShape& shape) {
  Tensor4D out(shape.output_dims(), ElemKind::I32);
  const auto ft = filters.view<const std::int8_t>();
  auto ov = out.view<std::int32_t>();
  const std::int64_t crs = shape.crs();
  const std::int64_t pq = shape.p * shape.q;
  const std::int64_t block = std::clamp<std::int64_t>((std::int64_t{512} << 10) / crs, 16, shape.k);
#ifdef ABED_HAVE_VNNI
  // bias the patch rows into u8 (v + 128 == v ^ 0x80) and correct each dot
  // product by 128 * filter_sum afterward; bit-identical to the scalar path
  std::vector<std::uint8_t> rows_u8(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    rows_u8[i] = static_cast<std::uint8_t>(rows[i]) ^ 0x80u;
  std::vector<std::int64_t> fsum(static_cast<std::size_t>(shape.k), 0);
  for (std::int64_t k = 0; k < shape.k; ++k) {
    std::int64_t s = 0;
    for (std::int64_t i = 0; i < crs; ++i)
      s += ft[static_cast<std::size_t>(k * crs + i)];
    fsum[static_cast<std::size_t>(k)] = s << 7;
  }
  for (std::int64_t n = 0; n < shape.n; ++n) {
    for (std::int64_t k0 = 0; k0 < shape.k; k0 += block) {
      const std::int64_t k1 = std::min(shape.k, k0 + block);
      for (std::int64_t j = 0; j < pq; ++j) {
        const std::uint8_t* row = rows_u8.data() + static_cast<std::size_t>((n * pq + j) * crs);
        for (std::int64_t k = k0; k < k1; ++k) {
          const std::int64_t biased =
              dot_u8s8(row, ft.data() + static_cast<std::size_t>(k * crs), crs);
          ov[static_cast<std::size_t>((n * shape.k + k) * pq + j)] =
              static_cast<std::int32_t>(biased - fsum[static_cast<std::size_t>(k)]);
        }
      }
    }
  }
#else
  for (std::int64_t n = 0; n < shape.n; ++n) {
    for (std::int64_t k0 = 0; k0 < shape.k; k0 += block) {
      const std::int64_t k1 = std::min(shape.k, k0 + block);
      for (std::int64_t j = 0; j < pq; ++j) {
        const std::int8_t* row = rows.data() + static_cast<std::size_t>((n * pq + j) * crs);
        for (std::int64_t k = k0; k < k1; ++k) {
          ov[static_cast<std::size_t>((n * shape.k + k) * pq + j)] =
              row_dot<std::int32_t>(ft.data() + static_cast<std::size_t>(k * crs), row, crs);
        }
      }
    }
  }
#endif
  return out;
}

/// im2col-backed int8 convolution. Bit-identical to conv_direct, used where
/// the reference loop nest is too slow (campaigns, whole-network sweeps).
inline Tensor4D conv_fast_i8(const Tensor4D& input, const Tensor4D& filters,
                             const LayerShape& shape) {
  check_conv_args(input, filters, shape, ElemKind::I8, ElemKind::I8);
  std::vector<std::int8_t> rows;
  im2col_rows<std::int8_t>(input, shape, rows);
  return conv_rows_i8(rows, filters, shape);
}

}  // namespace detail

/// Reference integer convolution: out[n,k,p,q] = sum_{c,r,s} patch * filter,
/// exact in 32-bit accumulation. Rejects windows the int32 guarantee does not
/// cover; callers needing CRS > 64K must plan a wider accumulator.
inline Tensor4D conv_direct(const Tensor4D& input, const Tensor4D& filters,
                            const LayerShape& shape) {
  if (shape.crs() > kMaxCrsForI32)
    throw std::invalid_argument("conv_direct: CRS > 65536 exceeds the int32 accumulator plan");
  return detail::conv_reference<std::int8_t, std::int8_t, std::int32_t>(input, filters, shape);
}

/// Float-mode convolution: f32 operands, f32 accumulation.
inline Tensor4D conv_direct_f32(const Tensor4D& input, const Tensor4D& filters,
                                const LayerShape& shape) {
  return detail::conv_reference<float, float, float>(input, filters, shape);
}

/// Lowers the input to a (C*R*S) x (N*P*Q) patch matrix; column (n,p,q) is the
/// flattened window, zero in padding positions.
inline Matrix im2col(const Tensor4D& input, const LayerShape& shape) {
  if (input.kind() != ElemKind::I8 || input.dims() != shape.input_dims())
    throw std::invalid_argument("im2col: input tensor does not match shape");
  Matrix m(shape.crs(), shape.npq(), ElemKind::I8);
  auto mv = m.view<std::int8_t>();
  const std::int64_t npq = shape.npq();
  for (std::int64_t n = 0; n < shape.n; ++n) {
    for (std::int64_t p = 0; p < shape.p; ++p) {
      for (std::int64_t q = 0; q < shape.q; ++q) {
        const std::int64_t col = (n * shape.p + p) * shape.q + q;
        for_each_patch_element(input, shape, n, p, q,
                               [&](std::int64_t c, std::int64_t r, std::int64_t s, std::int8_t v) {
                                 const std::int64_t row = (c * shape.r + r) * shape.s + s;
                                 mv[static_cast<std::size_t>(row * npq + col)] = v;
                               });
      }
    }
  }
  return m;
}

namespace detail {
template <typename TIn, typename TAcc>
Matrix gemm_typed(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols, kind_of<TAcc>());
  const auto av = a.view<const TIn>();
  const auto bv = b.view<const TIn>();
  auto cv = c.view<TAcc>();
  for (std::int64_t i = 0; i < a.rows; ++i) {
    TAcc* crow = cv.data() + static_cast<std::size_t>(i * b.cols);
    for (std::int64_t t = 0; t < a.cols; ++t) {
      const TAcc x = static_cast<TAcc>(av[static_cast<std::size_t>(i * a.cols + t)]);
      const TIn* brow = bv.data() + static_cast<std::size_t>(t * b.cols);
      for (std::int64_t j = 0; j < b.cols; ++j) crow[j] += x * static_cast<TAcc>(brow[j]);
    }
  }
  return c;
}
}  // namespace detail

/// Exact matrix product in the requested accumulator kind. Supported operand
/// kinds: i8 x i8 (acc i32 for inner dim <= 64K, or i64), i32 x i32 (acc i64),
/// f32 x f32 (acc f32).
inline Matrix gemm(const Matrix& a, const Matrix& b, ElemKind acc_kind) {
  if (a.cols != b.rows) throw std::invalid_argument("gemm: inner dimensions do not match");
  if (a.kind != b.kind) throw std::invalid_argument("gemm: operand kinds differ");
  if (a.kind == ElemKind::I8 && acc_kind == ElemKind::I32) {
    if (a.cols > kMaxCrsForI32)
      throw std::invalid_argument("gemm: inner dim > 65536 is overflow-unsafe for an i32 accumulator");
    return detail::gemm_typed<std::int8_t, std::int32_t>(a, b);
  }
  if (a.kind == ElemKind::I8 && acc_kind == ElemKind::I64)
    return detail::gemm_typed<std::int8_t, std::int64_t>(a, b);
  if (a.kind == ElemKind::I32 && acc_kind == ElemKind::I64)
    return detail::gemm_typed<std::int32_t, std::int64_t>(a, b);
  if (a.kind == ElemKind::F32 && acc_kind == ElemKind::F32)
    return detail::gemm_typed<float, float>(a, b);
  throw std::invalid_argument("gemm: unsupported operand/accumulator kind combination");
}

/// Filters KCRS reinterpreted as a K x (C*R*S) matrix (row k = filter k).
inline Matrix filters_as_matrix(const Tensor4D& filters) {
  if (filters.kind() != ElemKind::I8)
    throw std::invalid_argument("filters_as_matrix: expected i8 filters");
  const Dims4 d = filters.dims();
  Matrix m(d.d0, d.d1 * d.d2 * d.d3, ElemKind::I8);
  std::memcpy(m.data.data(), filters.raw(), filters.byte_size());
  return m;
}

/// GEMM lowering of the convolution; reproduces conv_direct exactly.
inline Tensor4D conv_via_gemm(const Tensor4D& input, const Tensor4D& filters,
                              const LayerShape& shape) {
  detail::check_conv_args(input, filters, shape, ElemKind::I8, ElemKind::I8);
  if (shape.crs() > kMaxCrsForI32)
    throw std::invalid_argument("conv_via_gemm: CRS > 65536 exceeds the int32 accumulator plan");
  const Matrix patches = im2col(input, shape);
  const Matrix prod = gemm(filters_as_matrix(filters), patches, ElemKind::I32);
  Tensor4D out(shape.output_dims(), ElemKind::I32);
  auto ov = out.view<std::int32_t>();
  const auto pv = prod.view<const std::int32_t>();
  const std::int64_t pq = shape.p * shape.q;
  for (std::int64_t k = 0; k < shape.k; ++k)
    for (std::int64_t n = 0; n < shape.n; ++n)
      for (std::int64_t j = 0; j < pq; ++j)
        ov[static_cast<std::size_t>((n * shape.k + k) * pq + j)] =
            pv[static_cast<std::size_t>(k * shape.npq() + n * pq + j)];
  return out;
}

enum class Activation { ReLU, Identity };

/// Post-convolution stage: scale, per-channel bias, activation, then clamp
/// and truncate when the output is int8.
struct EpilogParams {
  float scale = 1.0f;
  std::vector<float> bias;  // one entry per output channel
  Activation activation = Activation::ReLU;
  ElemKind output_kind = ElemKind::I8;
};

inline Tensor4D epilog(const Tensor4D& convout, const EpilogParams& params) {
  if (convout.kind() != ElemKind::I32) throw std::invalid_argument("epilog: convout must be i32");
  const Dims4 d = convout.dims();
  if (static_cast<std::int64_t>(params.bias.size()) != d.d1)
    throw std::invalid_argument("epilog: bias length must equal the channel count");
  if (!std::isfinite(params.scale)) throw std::invalid_argument("epilog: non-finite scale");
  for (float b : params.bias)
    if (!std::isfinite(b)) throw std::invalid_argument("epilog: non-finite bias");
  if (params.output_kind != ElemKind::I8 && params.output_kind != ElemKind::F32)
    throw std::invalid_argument("epilog: output kind must be i8 or f32");

  Tensor4D out(d, params.output_kind);
  const auto in = convout.view<const std::int32_t>();
  float* out_f = params.output_kind == ElemKind::F32 ? out.view<float>().data() : nullptr;
  std::int8_t* out_i = out_f ? nullptr : out.view<std::int8_t>().data();
  const std::int64_t pq = d.d2 * d.d3;
  std::int64_t idx = 0;
  for (std::int64_t n = 0; n < d.d0; ++n) {
    for (std::int64_t k = 0; k < d.d1; ++k) {
      const float bias_k = params.bias[static_cast<std::size_t>(k)];
      for (std::int64_t j = 0; j < pq; ++j, ++idx) {
        float v = static_cast<float>(in[static_cast<std::size_t>(idx)]) * params.scale + bias_k;
        if (params.activation == Activation::ReLU && v < 0.0f) v = 0.0f;
        if (out_f) {
          out_f[idx] = v;
        } else {
          // clamp to the int8 range, then drop the fraction toward zero
          v = std::min(127.0f, std::max(-128.0f, v));
          out_i[idx] = static_cast<std::int8_t>(std::trunc(v));
        }
      }
    }
  }
  return out;
}

}  // namespace abed
