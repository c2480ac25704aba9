// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/nd/gemm.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include "edaq/nd/parallel.hpp"

namespace edaq::nd {

namespace {

constexpr std::size_t kRows = 6;
constexpr std::size_t kCols = 16;

typedef double v8d __attribute__((vector_size(64)));
typedef float v8f __attribute__((vector_size(32)));

inline v8d load_widen(const float* p) {
  v8f f;
  std::memcpy(&f, p, sizeof(f));
  return __builtin_convertvector(f, v8d);
}

// Register tile of R rows x kCols; `b` is a packed k x kCols panel.
template <std::size_t R>
inline void tile_full(std::size_t n, std::size_t k, const float* a, const float* b, float* c,
                      bool accumulate) {
  v8d acc[R][2];
  for (auto& row : acc) {
    row[0] = v8d{};
    row[1] = v8d{};
  }
  for (std::size_t p = 0; p < k; ++p) {
    const v8d b0 = load_widen(b + p * kCols);
    const v8d b1 = load_widen(b + p * kCols + 8);
    for (std::size_t r = 0; r < R; ++r) {
      const double x = a[r * k + p];
      acc[r][0] += x * b0;
      acc[r][1] += x * b1;
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    float* cr = c + r * n;
    for (std::size_t j = 0; j < 8; ++j) {
      cr[j] = accumulate ? static_cast<float>(cr[j] + acc[r][0][j]) : static_cast<float>(acc[r][0][j]);
      cr[j + 8] =
          accumulate ? static_cast<float>(cr[j + 8] + acc[r][1][j]) : static_cast<float>(acc[r][1][j]);
    }
  }
}

inline void tile_edge(std::size_t rows, std::size_t cols, std::size_t n, std::size_t k,
                      const float* a, const float* b, float* c, bool accumulate) {
  double acc[kRows][kCols] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const float* bp = b + p * n;
    for (std::size_t r = 0; r < rows; ++r) {
      const double x = a[r * k + p];
      for (std::size_t j = 0; j < cols; ++j) acc[r][j] += x * static_cast<double>(bp[j]);
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    float* cr = c + r * n;
    for (std::size_t j = 0; j < cols; ++j) {
      cr[j] = accumulate ? static_cast<float>(cr[j] + acc[r][j]) : static_cast<float>(acc[r][j]);
    }
  }
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
          bool accumulate) {
  if (m == 0 || n == 0) return;
  const std::size_t col_tiles = (n + kCols - 1) / kCols;
  const std::size_t work = m * n * std::max<std::size_t>(k, 1);
  const std::size_t min_chunk = work > (1u << 22) ? 1 : col_tiles;
  parallel_for(col_tiles, min_chunk, [&](std::size_t t0, std::size_t t1) {
    std::vector<float> panel(k * kCols);
    for (std::size_t t = t0; t < t1; ++t) {
      const std::size_t j0 = t * kCols;
      const std::size_t cols = std::min(kCols, n - j0);
      if (cols == kCols) {
        for (std::size_t p = 0; p < k; ++p) {
          std::copy_n(b + p * n + j0, kCols, panel.data() + p * kCols);
        }
      }
      for (std::size_t i0 = 0; i0 < m; i0 += kRows) {
        const std::size_t rows = std::min(kRows, m - i0);
        if (cols == kCols) {
          const float* ai = a + i0 * k;
          float* ci = c + i0 * n + j0;
          switch (rows) {
            case 6: tile_full<6>(n, k, ai, panel.data(), ci, accumulate); break;
            case 5: tile_full<5>(n, k, ai, panel.data(), ci, accumulate); break;
            case 4: tile_full<4>(n, k, ai, panel.data(), ci, accumulate); break;
            case 3: tile_full<3>(n, k, ai, panel.data(), ci, accumulate); break;
            case 2: tile_full<2>(n, k, ai, panel.data(), ci, accumulate); break;
            default: tile_full<1>(n, k, ai, panel.data(), ci, accumulate); break;
          }
        } else {
          tile_edge(rows, cols, n, k, a + i0 * k, b + j0, c + i0 * n + j0, accumulate);
        }
      }
    }
  });
}

void transpose_copy(std::size_t m, std::size_t n, const float* in, float* out) {
  constexpr std::size_t kB = 32;
  for (std::size_t i0 = 0; i0 < m; i0 += kB) {
    for (std::size_t j0 = 0; j0 < n; j0 += kB) {
      const std::size_t i1 = std::min(m, i0 + kB);
      const std::size_t j1 = std::min(n, j0 + kB);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) out[j * m + i] = in[i * n + j];
      }
    }
  }
}

}  // namespace edaq::nd
