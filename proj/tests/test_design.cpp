#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "posi/design.hpp"
#include "posi/design_io.hpp"

using namespace posi;

namespace {

Matrix random_matrix(int n, int p, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    Matrix X(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) X(i, j) = z(gen);
    return X;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("posi_design_" + name)).string();
}

}  // namespace

TEST(ModelId, SetOperations) {
    const ModelId M = ModelId::from_indices(5, std::vector<int>{0, 3});
    EXPECT_EQ(M.size(), 2);
    EXPECT_TRUE(M.contains(3));
    EXPECT_FALSE(M.contains(1));
    EXPECT_EQ(M.to_string(), "{1,4}");
    EXPECT_EQ(M.complement().to_string(), "{2,3,5}");
    EXPECT_TRUE(M.is_subset_of(ModelId::full(5)));
    EXPECT_FALSE(ModelId::full(5).is_subset_of(M));
    EXPECT_TRUE(ModelId::empty(5).is_subset_of(M));
    EXPECT_EQ(M.united(M.complement()), ModelId::full(5));
    EXPECT_THROW(M.contains(5), ValidationError);
}

TEST(ModelId, WideModels) {
    ModelId M(130);
    M.insert(0);
    M.insert(129);
    EXPECT_EQ(M.size(), 2);
    EXPECT_EQ(M.indices(), (std::vector<int>{0, 129}));
    EXPECT_EQ(M.complement().size(), 128);
}

TEST(Canonicalize, FullRankTall) {
    const Matrix X = random_matrix(12, 4, 1);
    const auto c = canonicalize(X);
    EXPECT_EQ(c.d, 4);
    EXPECT_EQ(c.n, 12);
    EXPECT_LT((c.Q.transpose() * c.Q - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((c.Q * c.Xt - X).cwiseAbs().maxCoeff(), 1e-12);
    // Gram matrix is preserved.
    EXPECT_LT((c.Xt.transpose() * c.Xt - X.transpose() * X).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Canonicalize, RankDeficientAndWide) {
    Matrix X = random_matrix(10, 3, 2);
    X.col(2) = X.col(0) + X.col(1);
    EXPECT_EQ(canonicalize(X).d, 2);
    const Matrix W = random_matrix(4, 7, 3);
    const auto c = canonicalize(W);
    EXPECT_EQ(c.d, 4);
    EXPECT_LT((c.Xt.transpose() * c.Xt - W.transpose() * W).cwiseAbs().maxCoeff(), 1e-10);
    Matrix Z = random_matrix(5, 2, 4);
    Z.col(1).setZero();
    EXPECT_THROW(canonicalize(Z), ValidationError);
}

TEST(Universe, PowerSetAndCounts) {
    const auto c = canonicalize(random_matrix(10, 4, 5));
    const auto U = enumerate_universe(4, std::nullopt, c);
    EXPECT_EQ(U.size(), 16u);
    EXPECT_TRUE(U[0].is_empty());
    EXPECT_TRUE(U[15].is_full());
    EXPECT_EQ(count_not_subset(ModelId::empty(4), U), 15u);
    EXPECT_EQ(count_not_subset(ModelId::full(4), U), 0u);
    // Subsets of a 2-model: 4, so 12 are not contained.
    EXPECT_EQ(count_not_subset(ModelId::from_indices(4, std::vector<int>{1, 2}), U), 12u);
    const auto U2 = enumerate_universe(4, 2, c);
    EXPECT_EQ(U2.size(), 11u);
}

TEST(Universe, WideDesignDropsRankDeficientModels) {
    const auto c = canonicalize(random_matrix(3, 5, 6));
    const auto U = enumerate_universe(5, std::nullopt, c);
    // Models with more than 3 columns are rank deficient: C(5,4) + C(5,5) = 6.
    EXPECT_EQ(U.dropped(), 6);
    EXPECT_EQ(U.size(), 26u);
}

TEST(Universe, ValidationErrors) {
    const auto c = canonicalize(random_matrix(8, 3, 7));
    auto m = [](std::vector<int> v) { return ModelId::from_indices(3, v); };
    EXPECT_THROW(ModelUniverse::validated(3, {m({0}), m({1, 2})}, c), ValidationError);         // no empty model
    EXPECT_THROW(ModelUniverse::validated(3, {m({}), m({0}), m({1})}, c), ValidationError);     // union not full
    EXPECT_THROW(ModelUniverse::validated(3, {m({}), m({0, 1, 2}), m({0, 1, 2})}, c), ValidationError);
    EXPECT_NO_THROW(ModelUniverse::validated(3, {m({}), m({0, 1, 2})}, c));
    Matrix X = random_matrix(8, 3, 8);
    X.col(2) = X.col(0);
    const auto cd = canonicalize(X);
    EXPECT_THROW(ModelUniverse::validated(3, {m({}), m({0, 1, 2})}, cd), ValidationError);
}

TEST(SVector, MatchesDirectFormula) {
    const Matrix X = random_matrix(15, 5, 9);
    const Vector x0 = random_matrix(5, 1, 10).col(0);
    const auto c = canonicalize(X);
    const auto U = enumerate_universe(5, std::nullopt, c);
    const UniverseGeometry g(c, U);
    for (std::size_t k = 0; k < U.size(); ++k) {
        const auto s = s_vector(c, x0, U[k]);
        EXPECT_NEAR(s.norm, s_norm_direct(X, x0, U[k]), 1e-10);
        EXPECT_LT((g.s_tilde(k, x0) - s.s_tilde).cwiseAbs().maxCoeff(), 1e-12);
        if (s.norm > 0) {
            EXPECT_NEAR(s.s_bar.norm(), 1.0, 1e-12);
        }
    }
    // ||s_M||^2 = x0[M]' (X[M]'X[M])^{-1} x0[M].
    const ModelId M = ModelId::from_indices(5, std::vector<int>{1, 3});
    const Matrix XM = select_columns(X, M);
    const Vector xm = select_entries(x0, M);
    EXPECT_NEAR(std::pow(s_vector(c, x0, M).norm, 2), xm.dot((XM.transpose() * XM).ldlt().solve(xm)), 1e-10);
}

TEST(SVector, OrthonormalDesignGivesUnitVectors) {
    const auto c = canonicalize(Matrix::Identity(4, 4));
    Vector e1 = Vector::Zero(4);
    e1(0) = 1;
    const auto s = s_vector(c, e1, ModelId::from_indices(4, std::vector<int>{0, 2}));
    EXPECT_NEAR(s.norm, 1.0, 1e-14);
    EXPECT_NEAR(std::abs(s.s_bar(0)), 1.0, 1e-14);
}

TEST(RestrictedOls, ProjectionAndEmpty) {
    const Matrix X = random_matrix(20, 3, 11);
    const Vector beta = (Vector(3) << 1.0, -2.0, 0.5).finished();
    const Vector Y = X * beta;
    EXPECT_LT((restricted_ols(X, Y, ModelId::full(3)) - beta).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(restricted_ols(X, Y, ModelId::empty(3)).size(), 0);
}

TEST(DesignProblem, Validation) {
    const Matrix X = random_matrix(6, 2, 12);
    EXPECT_NO_THROW((DesignProblem{X, Vector::Ones(2), 0.05, DofParam::infinite()}.validate()));
    EXPECT_THROW((DesignProblem{X, Vector::Ones(3), 0.05, DofParam::infinite()}.validate()), ValidationError);
    EXPECT_THROW((DesignProblem{X, Vector::Ones(2), 1.0, DofParam::infinite()}.validate()), ValidationError);
}

TEST(DesignIo, CsvRoundTripAndErrors) {
    const Matrix X = random_matrix(4, 3, 13);
    const auto path = temp_path("x.csv");
    io::write_csv_matrix(path, X);
    EXPECT_EQ(io::read_csv_matrix(path), X);
    {
        std::ofstream out(path);
        out << "a,b\n1,2\n3,x\n";
    }
    EXPECT_THROW(io::read_csv_matrix(path, true), ValidationError);
    {
        std::ofstream out(path);
        out << "1,2\n3\n";
    }
    EXPECT_THROW(io::read_csv_matrix(path), ValidationError);
    EXPECT_THROW(io::read_csv_matrix(temp_path("missing.csv")), ValidationError);
    std::remove(path.c_str());
}

TEST(DesignIo, UniverseFile) {
    const auto c = canonicalize(random_matrix(10, 3, 14));
    const auto path = temp_path("u.txt");
    {
        std::ofstream out(path);
        out << "\n1\n2,3\n1,2,3\n";
    }
    const auto U = io::read_universe(path, c);
    EXPECT_EQ(U.size(), 4u);
    EXPECT_TRUE(U[0].is_empty());
    io::write_universe(path, U);
    EXPECT_EQ(io::read_universe(path, c).models(), U.models());
    EXPECT_EQ(io::parse_model("", 3), ModelId::empty(3));
    EXPECT_THROW(io::parse_model("4", 3), ValidationError);
    std::remove(path.c_str());
}
