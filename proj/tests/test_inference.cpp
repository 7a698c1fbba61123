#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "posi/inference.hpp"

using namespace posi;

TEST(Interval, Arithmetic) {
    Vector x0 = Vector::Zero(3);
    x0(0) = 1.0;
    const ModelId M = ModelId::from_indices(3, std::vector<int>{0});
    const auto iv = build_interval(x0, M, Vector::Constant(1, 2.5), 2.0, ConstantKind::K1, 0.4, 1.0);
    EXPECT_NEAR(iv.lower(), 1.7, 1e-15);
    EXPECT_NEAR(iv.upper(), 3.3, 1e-15);
    const auto point = build_interval(x0, M, Vector::Constant(1, 2.5), 0.0, ConstantKind::K1, 0.4, 1.0);
    EXPECT_EQ(point.lower(), point.upper());
    EXPECT_THROW(build_interval(x0, M, Vector::Zero(2), 1.0, ConstantKind::K1, 1.0, 1.0), ValidationError);
}

TEST(Interval, EmptyModelIsZero) {
    const auto iv = build_interval(Vector::Ones(3), ModelId::empty(3), Vector(0), 5.0, ConstantKind::K5, 0.0, 2.0);
    EXPECT_EQ(iv.center, 0.0);
    EXPECT_EQ(iv.half_width, 0.0);
    EXPECT_TRUE(covers(iv, 0.0));
}

TEST(Interval, ClosedBoundary) {
    PredictionInterval iv;
    iv.center = 1.0;
    iv.half_width = 0.5;
    EXPECT_TRUE(covers(iv, 1.5));
    EXPECT_TRUE(covers(iv, 0.5));
    EXPECT_FALSE(covers(iv, 1.6));
}

TEST(Targets, DesignDependentIdentities) {
    const Matrix X = fixtures::random_matrix(20, 5, 31);
    const Vector beta = fixtures::random_vector(5, 32);
    const Vector mu = X * beta;
    EXPECT_LT((beta_target_n(X, mu, ModelId::full(5)) - beta).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(beta_target_n(X, mu, ModelId::empty(5)).size(), 0);
    for (int seed = 0; seed < 20; ++seed) {
        ModelId M(5);
        for (int j = 0; j < 5; ++j)
            if ((seed >> (j % 4)) & 1 || j == seed % 5) M.insert(j);
        if (M.is_full()) continue;
        const ModelId Mc = M.complement();
        const Matrix XM = select_columns(X, M);
        const Vector rhs = select_entries(beta, M) + (XM.transpose() * XM).ldlt().solve(
                                                          XM.transpose() * select_columns(X, Mc) * select_entries(beta, Mc));
        EXPECT_LT((beta_target_n(X, mu, M) - rhs).cwiseAbs().maxCoeff(), 1e-8) << M.to_string();
    }
}

TEST(Targets, DesignIndependent) {
    const Vector beta = fixtures::random_vector(4, 33);
    const Matrix A = fixtures::random_matrix(4, 4, 34);
    const Matrix S = A * A.transpose() + Matrix::Identity(4, 4);
    EXPECT_EQ(beta_target_star(S, beta, ModelId::full(4)), beta);
    EXPECT_EQ(beta_target_star(S, beta, ModelId::empty(4)).size(), 0);
    const Matrix D = Vector::LinSpaced(4, 1, 4).asDiagonal();
    const ModelId M = ModelId::from_indices(4, std::vector<int>{1, 3});
    EXPECT_LT((beta_target_star(D, beta, M) - select_entries(beta, M)).cwiseAbs().maxCoeff(), 1e-15);
    Matrix Z = Matrix::Zero(4, 4);
    EXPECT_THROW(beta_target_star(Z, beta, M), DegeneracyError);
}

TEST(Targets, CoincideWhenSigmaIsGram) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix X = fixtures::random_matrix(15, 4, 40 + seed);
        const Vector beta = fixtures::random_vector(4, 60 + seed);
        const Matrix S = X.transpose() * X / 15.0;
        for (std::vector<int> idx : {std::vector<int>{0}, {1, 2}, {0, 2, 3}}) {
            const ModelId M = ModelId::from_indices(4, idx);
            EXPECT_LT((beta_target_n(X, X * beta, M) - beta_target_star(S, beta, M)).cwiseAbs().maxCoeff(), 1e-8);
        }
    }
}

TEST(Targets, TargetValueAndValidation) {
    const Matrix X = fixtures::random_matrix(10, 3, 70);
    const Vector beta = fixtures::random_vector(3, 71);
    const Vector x0 = fixtures::random_vector(3, 72);
    TargetSpec t{TargetKind::DesignDependent, beta, Vector(), Matrix()};
    EXPECT_NEAR(target_value(t, X, x0, ModelId::full(3)), x0.dot(beta), 1e-12);
    EXPECT_EQ(target_value(t, X, x0, ModelId::empty(3)), 0.0);
    TargetSpec bad{TargetKind::DesignIndependent, beta, Vector(), Matrix::Ones(3, 3)};
    EXPECT_THROW(bad.validate(3), ValidationError);
    EXPECT_EQ(to_string(TargetKind::DesignIndependent), "design-independent");
}
