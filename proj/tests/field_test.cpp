// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "occfield/field.hpp"
#include "occfield/rng.hpp"

using namespace occfield;

TEST(Field, InitAndParameterCount) {
    SemanticDensityField f(GridDims{2, 2, 2}, 3, Vec3{0, 0, 0}, 1.0, -5.0, 0.0);
    EXPECT_EQ(f.density_params().size(), 8u);
    EXPECT_EQ(f.semantic_params().size(), 24u);
    EXPECT_NEAR(softplus(-5.0), 0.00671535, 1e-7);
    EXPECT_NEAR(f.sigma_at_voxel(0, 0, 0), 0.00671535, 1e-7);
}

TEST(Field, RejectsInvalidConstruction) {
    EXPECT_THROW(SemanticDensityField(GridDims{0, 1, 1}, 2, Vec3{}, 1.0),
                 std::invalid_argument);
    EXPECT_THROW(SemanticDensityField(GridDims{1, 1, 1}, 2, Vec3{}, 0.0),
                 std::invalid_argument);
    EXPECT_THROW(SemanticDensityField(GridDims{1, 1, 1}, 1, Vec3{}, 1.0),
                 std::invalid_argument);
}

TEST(FieldQuery, VoxelCenterSoftplusZero) {
    SemanticDensityField f(GridDims{3, 3, 3}, 2, Vec3{0, 0, 0}, 1.0, 0.0, 0.0);
    FieldQuery q = f.query(f.voxel_center(1, 1, 1));
    EXPECT_NEAR(q.sigma, std::log(2.0), 1e-12);  // softplus(0) = ln 2
}

TEST(FieldQuery, ConstantFieldInterpolatesToConstant) {
    SemanticDensityField f(GridDims{4, 4, 4}, 2, Vec3{0, 0, 0}, 0.5, 1.25, 0.75);
    Rng rng = make_rng(3);
    for (int i = 0; i < 100; ++i) {
        Vec3 p{uniform01(rng) * 2, uniform01(rng) * 2, uniform01(rng) * 2};
        FieldQuery q = f.query(p);
        EXPECT_NEAR(q.sigma, softplus(1.25), 1e-12);
        EXPECT_NEAR(q.sem_logits[0], 0.75, 1e-12);
        EXPECT_NEAR(q.sem_logits[1], 0.75, 1e-12);
    }
}

TEST(FieldQuery, MidpointBetweenCenters) {
    SemanticDensityField f(GridDims{2, 1, 1}, 2, Vec3{0, 0, 0}, 1.0, 0.0, 0.0);
    f.density_params()[f.voxel_index(1, 0, 0)] = 2.0;
    // midway between centers (0.5,.5,.5) and (1.5,.5,.5)
    FieldQuery q = f.query(Vec3{1.0, 0.5, 0.5});
    EXPECT_NEAR(q.interp.density_pre, 1.0, 1e-12);
    EXPECT_NEAR(q.sigma, 1.31326169, 1e-7);  // softplus(1)
}

TEST(FieldQuery, WeightsNonnegativeSumToOne) {
    SemanticDensityField f(GridDims{5, 4, 3}, 3, Vec3{-1, -1, -1}, 0.7);
    Rng rng = make_rng(5);
    Aabb b = f.bounds();
    for (int i = 0; i < 500; ++i) {
        Vec3 p{b.lo.x + uniform01(rng) * (b.hi.x - b.lo.x),
               b.lo.y + uniform01(rng) * (b.hi.y - b.lo.y),
               b.lo.z + uniform01(rng) * (b.hi.z - b.lo.z)};
        FieldQuery q = f.query(p);
        double sum = 0;
        for (double w : q.interp.weight) {
            EXPECT_GE(w, 0.0);
            sum += w;
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(FieldQuery, CenterValuesReproducedExactly) {
    SemanticDensityField f(GridDims{4, 4, 4}, 2, Vec3{0, 0, 0}, 1.0);
    Rng rng = make_rng(9);
    for (auto& v : f.density_params()) v = uniform01(rng) * 4 - 2;
    for (int x = 1; x < 3; ++x)
        for (int y = 1; y < 3; ++y)
            for (int z = 1; z < 3; ++z) {
                FieldQuery q = f.query(f.voxel_center(x, y, z));
                EXPECT_NEAR(q.interp.density_pre,
                            f.density_params()[f.voxel_index(x, y, z)], 1e-12);
            }
}

TEST(FieldQuery, LipschitzContinuityWithinCell) {
    SemanticDensityField f(GridDims{3, 3, 3}, 2, Vec3{0, 0, 0}, 1.0);
    Rng rng = make_rng(21);
    for (auto& v : f.density_params()) v = uniform01(rng) * 6 - 3;
    // corner spread bounds the per-cell slope of the interpolated density;
    // softplus is 1-Lipschitz on top of it
    double max_abs = 0;
    for (double v : f.density_params()) max_abs = std::max(max_abs, std::abs(v));
    double K = 6 * max_abs;  // loose per-axis bound summed over 3 axes
    for (int i = 0; i < 200; ++i) {
        Vec3 p{0.6 + uniform01(rng) * 0.7, 0.6 + uniform01(rng) * 0.7,
               0.6 + uniform01(rng) * 0.7};
        double eps = 1e-4;
        Vec3 p2 = p + Vec3{eps, 0, 0};
        EXPECT_LE(std::abs(f.query(p).sigma - f.query(p2).sigma), K * eps + 1e-12);
    }
}

TEST(FieldQuery, OutOfBoundsRejected) {
    SemanticDensityField f(GridDims{2, 2, 2}, 2, Vec3{0, 0, 0}, 1.0);
    EXPECT_THROW(f.query(Vec3{-0.1, 1, 1}), std::invalid_argument);
    EXPECT_THROW(f.query(Vec3{1, 1, 2.1}), std::invalid_argument);
}

TEST(FieldQuery, NearestModeIsOneHot) {
    SemanticDensityField f(GridDims{2, 2, 2}, 2, Vec3{0, 0, 0}, 1.0);
    f.density_params()[f.voxel_index(1, 1, 1)] = 3.0;
    FieldQuery q = f.query(Vec3{1.4, 1.4, 1.4}, true);
    EXPECT_NEAR(q.interp.density_pre, 3.0, 1e-12);
}

TEST(ExtractOccupancy, ThresholdAndArgmax) {
    SemanticDensityField f(GridDims{1, 1, 2}, 3, Vec3{0, 0, 0}, 1.0);
    // sigma ~ 0.05 -> below tau = 0.1 -> empty
    f.density_params()[0] = -2.97;  // softplus ~= 0.0498
    // sigma ~ 0.5 with logits (0.1, 3.0, -1.0) -> class 1
    f.density_params()[1] = 0.0;  // softplus(0) ~= 0.693 >= 0.1
    f.semantic_params()[3] = 0.1;
    f.semantic_params()[4] = 3.0;
    f.semantic_params()[5] = -1.0;
    OccupancyGrid g = f.extract_occupancy(0.1);
    EXPECT_EQ(g.at(0, 0, 0), g.empty_label());
    EXPECT_EQ(g.at(0, 0, 1), 1);
}

TEST(ExtractOccupancy, MatchesBruteForceOracle) {
    Rng rng = make_rng(33);
    SemanticDensityField f(GridDims{4, 4, 4}, 3, Vec3{0, 0, 0}, 1.0);
    for (auto& v : f.density_params()) v = uniform01(rng) * 6 - 3;
    for (auto& v : f.semantic_params()) v = uniform01(rng) * 4 - 2;
    double tau = 0.4;
    OccupancyGrid g = f.extract_occupancy(tau);
    for (int x = 0; x < 4; ++x)
        for (int y = 0; y < 4; ++y)
            for (int z = 0; z < 4; ++z) {
                double sigma = softplus(f.density_params()[f.voxel_index(x, y, z)]);
                int expect;
                if (sigma < tau) {
                    expect = 3;
                } else {
                    const double* lg = f.logits_at_voxel(x, y, z);
                    expect = 0;
                    for (int l = 1; l < 3; ++l)
                        if (lg[l] > lg[expect]) expect = l;
                }
                EXPECT_EQ(g.at(x, y, z), expect);
            }
}

TEST(ExtractOccupancy, TauZeroNeverEmpty) {
    Rng rng = make_rng(35);
    SemanticDensityField f(GridDims{3, 3, 3}, 2, Vec3{0, 0, 0}, 1.0);
    for (auto& v : f.density_params()) v = uniform01(rng) * 20 - 10;
    OccupancyGrid g = f.extract_occupancy(0.0);
    for (auto v : g.labels) EXPECT_NE(v, g.empty_label());
}

TEST(ExtractOccupancy, RaisingDensityNeverEmptiesVoxel) {
    Rng rng = make_rng(37);
    SemanticDensityField f(GridDims{3, 3, 3}, 2, Vec3{0, 0, 0}, 1.0);
    for (auto& v : f.density_params()) v = uniform01(rng) * 4 - 2;
    double tau = 0.5;
    OccupancyGrid before = f.extract_occupancy(tau);
    for (int i = 0; i < 27; ++i) {
        SemanticDensityField g = f;
        g.density_params()[i] += 1.0 + uniform01(rng);
        OccupancyGrid after = g.extract_occupancy(tau);
        for (int j = 0; j < 27; ++j)
            if (before.labels[j] != before.empty_label())
                EXPECT_NE(after.labels[j], after.empty_label());
    }
}
