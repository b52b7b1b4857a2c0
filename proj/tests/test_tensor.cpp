#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "clozefact/tensor.hpp"

using namespace clozefact;

namespace {

Matrix make(std::size_t r, std::size_t c, std::initializer_list<double> vals) {
    Matrix m(r, c);
    std::size_t i = 0;
    for (double v : vals) {
        m[i++] = v;
    }
    return m;
}

} // namespace

TEST(Tensor, MatmulSmall) {
    const Matrix a = make(2, 3, {1, 2, 3, 4, 5, 6});
    const Matrix b = make(3, 2, {7, 8, 9, 10, 11, 12});
    const Matrix c = matmul(a, b);
    EXPECT_EQ(c, make(2, 2, {58, 64, 139, 154}));
}

TEST(Tensor, MatmulShapeMismatchThrows) {
    EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), std::invalid_argument);
    EXPECT_THROW(matmul_a_bt(Matrix(2, 3), Matrix(2, 4)), std::invalid_argument);
}

TEST(Tensor, TransposedProductsAgreeWithMatmul) {
    const Matrix a = make(2, 3, {1, -2, 3, 0.5, 5, -6});
    const Matrix b = make(2, 2, {2, 1, -1, 3});
    Matrix atb(3, 2);
    matmul_at_b_acc(a, b, atb);
    // (A^T B)[i][j] = sum_r A[r][i] B[r][j]
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            EXPECT_DOUBLE_EQ(atb(i, j), a(0, i) * b(0, j) + a(1, i) * b(1, j));
        }
    }
    const Matrix abt = matmul_a_bt(a, a);
    EXPECT_DOUBLE_EQ(abt(0, 1), 1 * 0.5 + -2 * 5 + 3 * -6);
    EXPECT_DOUBLE_EQ(abt(0, 1), abt(1, 0));
}

TEST(Tensor, AccumulateAddsToExisting) {
    const Matrix a = make(1, 1, {2});
    Matrix out = make(1, 1, {10});
    matmul_at_b_acc(a, a, out);
    EXPECT_DOUBLE_EQ(out(0, 0), 14.0);
}

TEST(Tensor, BiasAndColumnSums) {
    Matrix m = make(2, 2, {1, 2, 3, 4});
    add_row_bias(m, make(1, 2, {10, 20}));
    EXPECT_EQ(m, make(2, 2, {11, 22, 13, 24}));
    Matrix g(1, 2);
    acc_col_sums(m, g);
    EXPECT_EQ(g, make(1, 2, {24, 46}));
}

TEST(Tensor, SoftmaxSumsToOneAndIsShiftInvariant) {
    const std::vector<double> x{1.0, 2.0, 3.0};
    const std::vector<double> y{1001.0, 1002.0, 1003.0};
    const auto p = softmax(x);
    const auto q = softmax(y);
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        s += p[i];
        EXPECT_NEAR(p[i], q[i], 1e-15);
    }
    EXPECT_NEAR(s, 1.0, 1e-15);
    EXPECT_NEAR(log_sum_exp(y), 1003.0 + std::log(std::exp(-2.0) + std::exp(-1.0) + 1.0), 1e-12);
}

TEST(Tensor, ArgmaxTiesGoLow) {
    const std::vector<double> x{0.2, 0.4, 0.4, 0.1};
    EXPECT_EQ(argmax(x), 1u);
}

TEST(Tensor, AllFinite) {
    std::vector<double> x{1.0, 2.0};
    EXPECT_TRUE(all_finite(x));
    x[1] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_FALSE(all_finite(x));
    x[1] = std::numeric_limits<double>::infinity();
    EXPECT_FALSE(all_finite(x));
}
