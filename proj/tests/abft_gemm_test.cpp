#include "abed/abft_gemm.hpp"

#include <gtest/gtest.h>

#include "abed/rng.hpp"
#include "test_oracles.hpp"

using namespace abed;

namespace {

Matrix random_matrix(std::int64_t rows, std::int64_t cols, SplitMix64& rng) {
  Matrix m(rows, cols, ElemKind::I8);
  for (auto& v : m.view<std::int8_t>()) v = rng.next_i8();
  return m;
}

}  // namespace

TEST(AbftGemm, IdentityPasses) {
  Matrix eye(2, 2, ElemKind::I8);
  eye.at<std::int8_t>(0, 0) = 1;
  eye.at<std::int8_t>(1, 1) = 1;
  const AbftResult result = abft_gemm(eye, eye);
  EXPECT_TRUE(result.pass());
  EXPECT_EQ(result.c.at<std::int32_t>(0, 0), 1);
  EXPECT_EQ(result.c.at<std::int32_t>(0, 1), 0);
  EXPECT_EQ(result.c.at<std::int32_t>(1, 1), 1);
  EXPECT_EQ(result.c_aug.at<std::int64_t>(2, 2), 2);  // grand total
}

TEST(AbftGemm, SingleCorruptionFlagsRowAndColumn) {
  SplitMix64 rng(7);
  const Matrix a = random_matrix(6, 5, rng);
  const Matrix b = random_matrix(5, 4, rng);
  AbftResult result = abft_gemm(a, b);
  ASSERT_TRUE(result.pass());

  result.c_aug.at<std::int64_t>(2, 3) ^= std::int64_t{1} << 17;
  const auto [row_check, col_check] = abft_check(result.c_aug);
  EXPECT_FALSE(row_check.pass());
  EXPECT_FALSE(col_check.pass());
  ASSERT_TRUE(row_check.locus.has_value());
  ASSERT_TRUE(col_check.locus.has_value());
  EXPECT_EQ((*row_check.locus)[0], 2);
  EXPECT_EQ((*col_check.locus)[0], 3);
}

TEST(AbftGemm, ChecksumRowMatchesColumnSumOracle) {
  SplitMix64 rng(8);
  const Matrix a = random_matrix(8, 8, rng);
  const Matrix b = random_matrix(8, 8, rng);
  const AbftResult result = abft_gemm(a, b);
  ASSERT_TRUE(result.pass());

  std::vector<std::int8_t> av(a.view<const std::int8_t>().begin(), a.view<const std::int8_t>().end());
  std::vector<std::int8_t> bv(b.view<const std::int8_t>().begin(), b.view<const std::int8_t>().end());
  const auto c = oracle::matmul(av, bv, 8, 8, 8);
  for (std::int64_t j = 0; j < 8; ++j) {
    std::int64_t col_sum = 0;
    for (std::int64_t i = 0; i < 8; ++i) col_sum += c[static_cast<std::size_t>(i * 8 + j)];
    EXPECT_EQ(result.c_aug.at<std::int64_t>(8, j), col_sum);
  }
  for (std::int64_t i = 0; i < 8; ++i) {
    std::int64_t row_sum = 0;
    for (std::int64_t j = 0; j < 8; ++j) row_sum += c[static_cast<std::size_t>(i * 8 + j)];
    EXPECT_EQ(result.c_aug.at<std::int64_t>(i, 8), row_sum);
    for (std::int64_t j = 0; j < 8; ++j)
      EXPECT_EQ(result.c.at<std::int32_t>(i, j), c[static_cast<std::size_t>(i * 8 + j)]);
  }
}

TEST(AbftGemm, FaultFreeInvariantOnRandomInstances) {
  SplitMix64 rng(9);
  for (int iter = 0; iter < 200; ++iter) {
    const std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(16));
    const std::int64_t k = 1 + static_cast<std::int64_t>(rng.below(16));
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(16));
    const Matrix a = random_matrix(m, k, rng);
    const Matrix b = random_matrix(k, n, rng);
    const AbftResult result = abft_gemm(a, b);
    ASSERT_TRUE(result.pass()) << m << "x" << k << "x" << n;
  }
}

TEST(AbftGemm, CostAccounting) {
  const std::int64_t m = 7, n = 5, k = 9;
  const AbftCosts costs = abft_costs(m, n, k);
  EXPECT_EQ(costs.tasks[2].ops, (m + 1) * (n + 1) * k);  // gemm FMAs
  EXPECT_EQ(costs.copy_elements(), m * k + k * n + 2 * m * n);
  EXPECT_EQ(costs.tasks[0].elements_moved, m * k + k * n);
  EXPECT_EQ(costs.tasks[4].elements_moved, 2 * m * n);

  const AbftCosts two_pass = abft_costs(m, n, k, false);
  const AbftCosts one_pass = abft_costs(m, n, k, true);
  EXPECT_LT(one_pass.tasks[3].read_bytes, two_pass.tasks[3].read_bytes);
  EXPECT_EQ(one_pass.tasks[2].ops, two_pass.tasks[2].ops);
}

TEST(AbftGemm, Guards) {
  Matrix a(2, 3, ElemKind::I8);
  Matrix b(4, 2, ElemKind::I8);
  EXPECT_THROW(abft_gemm(a, b), std::invalid_argument);
  Matrix a32(2, 2, ElemKind::I32);
  Matrix b32(2, 2, ElemKind::I32);
  EXPECT_THROW(abft_gemm(a32, b32), std::invalid_argument);
}
