#include <doctest.h>

#include "test_util.hpp"
#include "waffle/error.hpp"
#include "waffle/matrix.hpp"
#include "waffle/rng.hpp"

using namespace waffle;
using testutil::max_abs_diff;
using testutil::naive_matmul;
using testutil::random_matrix;

TEST_CASE("matmul identity") {
    RngStream rng(7, 0, 1);
    const DenseMatrix m = random_matrix(3, 5, rng);
    const DenseMatrix out = matmul(DenseMatrix::identity(3), m);
    CHECK(max_abs_diff(out, m) == 0.0);
}

TEST_CASE("matmul hand example") {
    const DenseMatrix a(2, 2, {1, 2, 3, 4});
    const DenseMatrix b(2, 1, {0, 1});
    const DenseMatrix out = matmul(a, b);
    CHECK(out.at(0, 0) == 2.0);
    CHECK(out.at(1, 0) == 4.0);
}

TEST_CASE("matmul matches naive triple loop") {
    RngStream rng(13, 0, 2);
    const DenseMatrix a = random_matrix(5, 4, rng);
    const DenseMatrix b = random_matrix(4, 3, rng);
    CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) <= 1e-12);
}

TEST_CASE("matmul shape error") {
    const DenseMatrix a(2, 3);
    const DenseMatrix b(2, 3);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul transposed variants match naive") {
    RngStream rng(17, 0, 3);
    const DenseMatrix a = random_matrix(4, 6, rng);
    const DenseMatrix b = random_matrix(5, 6, rng);
    // a * b^T
    DenseMatrix bt(6, 5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 6; ++j) bt.at(j, i) = b.at(i, j);
    CHECK(max_abs_diff(matmul_nt(a, b), naive_matmul(a, bt)) <= 1e-12);
    // a^T * c
    const DenseMatrix c = random_matrix(4, 3, rng);
    DenseMatrix at(6, 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 6; ++j) at.at(j, i) = a.at(i, j);
    CHECK(max_abs_diff(matmul_tn(a, c), naive_matmul(at, c)) <= 1e-12);
}

TEST_CASE("sgd_step zero rate leaves params") {
    DenseMatrix p(1, 3, {1, 2, 3});
    const DenseMatrix g(1, 3, {5, 5, 5});
    sgd_step(p, g, 0.0);
    CHECK(p.data == std::vector<double>{1, 2, 3});
}

TEST_CASE("sgd_step hand example") {
    DenseMatrix p(1, 1, {1});
    const DenseMatrix g(1, 1, {2});
    sgd_step(p, g, 0.5);
    CHECK(p.data[0] == 0.0);
}

TEST_CASE("sgd_step geometric decay on x^2") {
    // Gradient of x^2 is 2x, so x_t = (1-2*eta)^t * x_0.
    const double eta = 0.1;
    double x = 1.0;
    double prev = std::abs(x);
    for (int t = 1; t <= 20; ++t) {
        DenseMatrix p(1, 1, {x});
        const DenseMatrix g(1, 1, {2.0 * x});
        sgd_step(p, g, eta);
        x = p.data[0];
        CHECK(std::abs(x - std::pow(1.0 - 2.0 * eta, t)) <= 1e-12);
        CHECK(std::abs(x) < prev);
        prev = std::abs(x);
    }
}

TEST_CASE("sgd_step shape mismatch") {
    DenseMatrix p(1, 2);
    const DenseMatrix g(2, 1);
    CHECK_THROWS_AS(sgd_step(p, g, 0.1), ShapeError);
}

TEST_CASE("im2col 1x1 kernel flattens pixels") {
    const std::vector<double> img = {1, 2, 3, 4, 5, 6};  // 1x2x3
    const DenseMatrix cols = im2col(img, 1, 2, 3, 1, 1, 1, 0);
    CHECK(cols.rows == 1);
    CHECK(cols.cols == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(cols.data[i] == img[i]);
}

TEST_CASE("im2col enumerates 2x2 patches of a 3x3 image") {
    // 1 2 3 / 4 5 6 / 7 8 9
    const std::vector<double> img = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    const DenseMatrix cols = im2col(img, 1, 3, 3, 2, 2, 1, 0);
    REQUIRE(cols.rows == 4);
    REQUIRE(cols.cols == 4);
    // Columns are the four patches in row-major output order.
    const double expected[4][4] = {{1, 2, 4, 5}, {2, 3, 5, 6}, {4, 5, 7, 8}, {5, 6, 8, 9}};
    for (std::size_t patch = 0; patch < 4; ++patch)
        for (std::size_t k = 0; k < 4; ++k) CHECK(cols.at(k, patch) == expected[patch][k]);
}

TEST_CASE("im2col reproduces direct convolution") {
    RngStream rng(23, 0, 4);
    DenseMatrix imgm = random_matrix(1, 3 * 8 * 8, rng);
    const std::vector<double>& img = imgm.data;
    const DenseMatrix kernel = random_matrix(5, 3 * 3 * 3, rng);
    const DenseMatrix cols = im2col(img, 3, 8, 8, 3, 3, 1, 1);
    const DenseMatrix via_matmul = matmul(kernel, cols);
    const std::vector<double> direct = testutil::direct_conv(img, 3, 8, 8, kernel, 3, 3, 1, 1);
    REQUIRE(via_matmul.data.size() == direct.size());
    for (std::size_t i = 0; i < direct.size(); ++i)
        CHECK(std::abs(via_matmul.data[i] - direct[i]) <= 1e-12);
}

TEST_CASE("im2col kernel larger than padded input") {
    const std::vector<double> img(9, 0.0);
    CHECK_THROWS_AS(im2col(img, 1, 3, 3, 5, 5, 1, 0), ShapeError);
}

TEST_CASE("ensure_finite rejects NaN") {
    DenseMatrix m(1, 2, {1.0, std::nan("")});
    CHECK_THROWS_AS(ensure_finite(m, "test"), ConsistencyError);
}
