#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string_view>

#include "abed/checksum.hpp"
#include "abed/convolution.hpp"

namespace abed {

/// Op/byte accounting for one online ABFT task. Tasks follow the classical
/// breakdown: (2) copy inputs into the augmented matrices, (3) generate input
/// checksums, (4) run the larger GEMM, (5) generate and compare both output
/// checksums, (6) copy the output back.
struct AbftTaskCost {
  std::string_view name;
  std::int64_t ops = 0;
  std::int64_t read_bytes = 0;
  std::int64_t write_bytes = 0;
  std::int64_t elements_moved = 0;
};

struct AbftCosts {
  std::array<AbftTaskCost, 5> tasks;  // tasks (2) through (6)

  std::int64_t copy_elements() const { return tasks[0].elements_moved + tasks[4].elements_moved; }
  std::int64_t total_ops() const {
    std::int64_t t = 0;
    for (const auto& task : tasks) t += task.ops;
    return t;
  }
  std::int64_t total_bytes() const {
    std::int64_t t = 0;
    for (const auto& task : tasks) t += task.read_bytes + task.write_bytes;
    return t;
  }
};

inline AbftCosts abft_costs(std::int64_t m, std::int64_t n, std::int64_t k,
                            bool single_pass_output_check = false) {
  AbftCosts costs;
  costs.tasks[0] = {"copy_in", 0, (m * k + k * n) * 1, (m * k + k * n) * 4, m * k + k * n};
  costs.tasks[1] = {"input_checksums", k * (m - 1) + k * (n - 1), (m * k + k * n) * 1, 2 * k * 4,
                    0};
  costs.tasks[2] = {"gemm", (m + 1) * (n + 1) * k, ((m + 1) * k + k * (n + 1)) * 4,
                    (m + 1) * (n + 1) * 8, 0};
  const std::int64_t passes = single_pass_output_check ? 1 : 2;
  costs.tasks[3] = {"output_checksums",
                    (m + 1) * (n - 1) + (n + 1) * (m - 1) + (m + 1) + (n + 1),
                    passes * (m + 1) * (n + 1) * 8, 8, 0};
  costs.tasks[4] = {"copy_out", 0, m * n * 8, m * n * 4, 2 * m * n};
  return costs;
}

struct AbftResult {
  Matrix c;      // trimmed m x n block, i32
  Matrix c_aug;  // full (m+1) x (n+1) result, i64
  VerifyOutcome row_check;  // row sums vs the appended column
  VerifyOutcome col_check;  // column sums vs the appended row
  AbftCosts costs;

  bool pass() const { return row_check.pass() && col_check.pass(); }
};

/// Re-derives both output checksums of an augmented result and compares them
/// with the appended row/column. A corrupted interior cell (i,j) flags row i
/// in the row check and column j in the column check.
inline std::pair<VerifyOutcome, VerifyOutcome> abft_check(const Matrix& c_aug) {
  const std::int64_t m = c_aug.rows - 1;
  const std::int64_t n = c_aug.cols - 1;
  if (m < 1 || n < 1) throw std::invalid_argument("abft_check: matrix too small");
  const auto cv = c_aug.view<const std::int64_t>();
  VerifyOutcome row_check = VerifyOutcome::ok();
  for (std::int64_t i = 0; i <= m; ++i) {
    std::int64_t sum = 0;
    for (std::int64_t j = 0; j < n; ++j) sum += cv[static_cast<std::size_t>(i * (n + 1) + j)];
    const std::int64_t want = cv[static_cast<std::size_t>(i * (n + 1) + n)];
    if (sum != want) {
      row_check = VerifyOutcome::fail(sum, want, std::array<std::int64_t, 3>{i, -1, -1});
      break;
    }
  }
  VerifyOutcome col_check = VerifyOutcome::ok();
  for (std::int64_t j = 0; j <= n; ++j) {
    std::int64_t sum = 0;
    for (std::int64_t i = 0; i < m; ++i) sum += cv[static_cast<std::size_t>(i * (n + 1) + j)];
    const std::int64_t want = cv[static_cast<std::size_t>(m * (n + 1) + j)];
    if (sum != want) {
      col_check = VerifyOutcome::fail(sum, want, std::array<std::int64_t, 3>{j, -1, -1});
      break;
    }
  }
  return {row_check, col_check};
}

/// Row/column-checksum ABFT for an int8 GEMM, detection only. Executes the
/// online tasks (2)-(6): widened copies with an appended column-sum row and
/// row-sum column, the larger GEMM, dual output-checksum comparison, and the
/// trimmed copy-out.
inline AbftResult abft_gemm(const Matrix& a, const Matrix& b,
                            bool single_pass_output_check = false) {
  if (a.kind != ElemKind::I8 || b.kind != ElemKind::I8)
    throw std::invalid_argument("abft_gemm: operands must be i8");
  if (a.cols != b.rows) throw std::invalid_argument("abft_gemm: inner dimensions do not match");
  const std::int64_t m = a.rows, k = a.cols, n = b.cols;
  if (16 + ceil_log2(m * n * k) > 63)
    throw std::invalid_argument("abft_gemm: checksum accumulation would overflow i64");
  if (16 + ceil_log2(k) > 31)
    throw std::invalid_argument("abft_gemm: product accumulation would overflow the i32 output");

  // task (2): copy into the widened augmented operands
  Matrix a_aug(m + 1, k, ElemKind::I32);
  Matrix b_aug(k, n + 1, ElemKind::I32);
  const auto av = a.view<const std::int8_t>();
  const auto bv = b.view<const std::int8_t>();
  auto aav = a_aug.view<std::int32_t>();
  auto bav = b_aug.view<std::int32_t>();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t t = 0; t < k; ++t)
      aav[static_cast<std::size_t>(i * k + t)] = av[static_cast<std::size_t>(i * k + t)];
  for (std::int64_t t = 0; t < k; ++t)
    for (std::int64_t j = 0; j < n; ++j)
      bav[static_cast<std::size_t>(t * (n + 1) + j)] = bv[static_cast<std::size_t>(t * n + j)];

  // task (3): input checksums, a column-sum row for A and a row-sum column for B
  for (std::int64_t t = 0; t < k; ++t) {
    std::int32_t col_sum = 0;
    for (std::int64_t i = 0; i < m; ++i) col_sum += av[static_cast<std::size_t>(i * k + t)];
    aav[static_cast<std::size_t>(m * k + t)] = col_sum;
    std::int32_t row_sum = 0;
    for (std::int64_t j = 0; j < n; ++j) row_sum += bv[static_cast<std::size_t>(t * n + j)];
    bav[static_cast<std::size_t>(t * (n + 1) + n)] = row_sum;
  }

  AbftResult result;
  // task (4): the larger GEMM
  result.c_aug = gemm(a_aug, b_aug, ElemKind::I64);
  // task (5): dual output checksum generation and comparison
  std::tie(result.row_check, result.col_check) = abft_check(result.c_aug);
  // task (6): trimmed copy-out
  result.c = Matrix(m, n, ElemKind::I32);
  const auto cav = result.c_aug.view<const std::int64_t>();
  auto cv = result.c.view<std::int32_t>();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      cv[static_cast<std::size_t>(i * n + j)] =
          static_cast<std::int32_t>(cav[static_cast<std::size_t>(i * (n + 1) + j)]);
  result.costs = abft_costs(m, n, k, single_pass_output_check);
  return result;
}

}  // namespace abed
