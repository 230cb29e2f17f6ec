// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Cholesky>

#include "vxs/gaussian.hpp"

using namespace vxs;

namespace {

Gaussian random_gaussian(Rng& rng) {
    Gaussian g;
    g.position = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    g.rotation = q.normalized();
    g.log_scale = Eigen::Vector3d(rng.uniform(-2.0, 1.0), rng.uniform(-2.0, 1.0), rng.uniform(-2.0, 1.0));
    g.opacity_logit = rng.uniform(-4.0, 4.0);
    g.color = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());
    return g;
}

} // namespace

TEST_CASE("covariance_from identity cases") {
    const Eigen::Vector4d identity(1, 0, 0, 0);
    CHECK((covariance_from(identity, Eigen::Vector3d(1, 1, 1)) - Eigen::Matrix3d::Identity())
              .cwiseAbs()
              .maxCoeff() < 1e-12);

    const Eigen::Matrix3d axis = covariance_from(identity, Eigen::Vector3d(2, 1, 1));
    CHECK((axis - Eigen::Vector3d(4, 1, 1).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("covariance_from 90-degree z rotation swaps x and y variances") {
    // q = (cos 45, 0, 0, sin 45) rotates x onto y.
    const double s = std::sqrt(0.5);
    const Eigen::Vector4d q(s, 0, 0, s);
    const Eigen::Matrix3d cov = covariance_from(q, Eigen::Vector3d(2, 1, 1));
    CHECK((cov - Eigen::Vector3d(1, 4, 1).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("covariance_from rejects bad inputs") {
    CHECK_THROWS_AS(covariance_from(Eigen::Vector4d(1, 0, 0, 0), Eigen::Vector3d(1, -1, 1)),
                    InvalidParameter);
    CHECK_THROWS_AS(covariance_from(Eigen::Vector4d(1, 0, 0, 0),
                                    Eigen::Vector3d(1, std::numeric_limits<double>::quiet_NaN(), 1)),
                    InvalidParameter);
}

TEST_CASE("covariance_from is SPD with eigenvalues equal to squared scales") {
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const Gaussian g = random_gaussian(rng);
        const Eigen::Matrix3d cov = covariance_from(g.rotation, g.scale());
        CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        const Eigen::LLT<Eigen::Matrix3d> llt(cov);
        CHECK(llt.info() == Eigen::Success);

        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
        Eigen::Vector3d expected = g.scale().array().square();
        std::sort(expected.data(), expected.data() + 3);
        CHECK((eig.eigenvalues() - expected).cwiseAbs().maxCoeff() <
              1e-9 * std::max(1.0, expected.maxCoeff()));
    }
}

TEST_CASE("shortest_axis_normal axis-aligned and flip cases") {
    Gaussian g;
    g.log_scale = Eigen::Vector3d(0.0, 0.0, std::log(0.1));
    const Eigen::Vector3d n = shortest_axis_normal(g, Eigen::Vector3d(0, 0, -1));
    CHECK((n - Eigen::Vector3d(0, 0, 1)).norm() < 1e-12);

    Gaussian gx;
    gx.log_scale = Eigen::Vector3d(std::log(0.1), 0.0, 0.0);
    const Eigen::Vector3d nx = shortest_axis_normal(gx, Eigen::Vector3d(1, 0, 0));
    CHECK((nx - Eigen::Vector3d(-1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("shortest_axis_normal tie-break picks axis 0") {
    Gaussian g; // unit scales everywhere
    const Eigen::Vector3d n = shortest_axis_normal(g, Eigen::Vector3d(1, 0, 0));
    CHECK((n - Eigen::Vector3d(-1, 0, 0)).norm() < 1e-12); // axis 0, flipped toward viewer
}

TEST_CASE("shortest_axis_normal is unit with non-positive view dot") {
    Rng rng(12);
    for (int trial = 0; trial < 500; ++trial) {
        const Gaussian g = random_gaussian(rng);
        Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
        dir.normalize();
        const Eigen::Vector3d n = shortest_axis_normal(g, dir);
        CHECK(std::abs(n.norm() - 1.0) < 1e-9);
        CHECK(n.dot(dir) <= 1e-12);
    }
}

TEST_CASE("flatten layout matches the documented channel order") {
    Gaussian g;
    g.opacity_logit = 0.0; // sigmoid -> 0.5
    g.color = Eigen::Vector3d(1, 0, 0);
    const Feature14 f = flatten(g);
    Feature14 expected;
    expected << 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0.5, 1, 0, 0;
    CHECK((f - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("unflatten coerces degenerate all-zero features") {
    const Gaussian g = unflatten(Feature14::Zero());
    CHECK(g.opacity() == doctest::Approx(kOpacityClampLo).epsilon(1e-9));
    CHECK((g.rotation - Eigen::Vector4d(1, 0, 0, 0)).norm() < 1e-12);
    CHECK(g.scale().minCoeff() > 0.0);
}

TEST_CASE("unflatten rejects out-of-range opacity") {
    Feature14 f = flatten(Gaussian{});
    f[10] = 1.5;
    CHECK_THROWS_AS(unflatten(f), InvalidParameter);
    f[10] = -0.1;
    CHECK_THROWS_AS(unflatten(f), InvalidParameter);
}

TEST_CASE("flatten/unflatten round trip on random gaussians") {
    Rng rng(13);
    for (int trial = 0; trial < 1000; ++trial) {
        const Gaussian g = random_gaussian(rng);
        const Feature14 f = flatten(g);
        const Feature14 f2 = flatten(unflatten(f));
        CHECK((f - f2).cwiseAbs().maxCoeff() < 1e-9);

        // And activated values survive through the raw parameterization.
        const Gaussian g2 = unflatten(f);
        CHECK((g.position - g2.position).norm() < 1e-12);
        CHECK((g.scale() - g2.scale()).norm() < 1e-9);
        CHECK(std::abs(g.opacity() - g2.opacity()) < 1e-9);
    }
}
