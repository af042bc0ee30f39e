#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mpde/probgen.hpp"

using namespace mpde;

TEST(GenProblem, DeterministicPerSeed) {
    PdeProblem a = gen_problem(77), b = gen_problem(77), c = gen_problem(78);
    EXPECT_EQ(a.alpha.alpha, b.alpha.alpha);
    EXPECT_EQ(a.ic.r1, b.ic.r1);
    EXPECT_NE(a.alpha.alpha, c.alpha.alpha);
}

TEST(GenProblem, CoefficientDistribution) {
    const int n = 10000;
    std::vector<int> zero_count(28, 0);
    int nonzero_total = 0;
    Rng master(2024);
    for (int i = 0; i < n; ++i) {
        PdeProblem p = gen_problem(master.child(i).state());
        for (std::size_t k = 0; k < p.alpha.alpha.size(); ++k) {
            const double a = p.alpha.alpha[k];
            if (a == 0.0)
                ++zero_count[k];
            else {
                EXPECT_GE(a, -1.0);
                EXPECT_LE(a, 1.0);
                ++nonzero_total;
            }
        }
        EXPECT_GE(p.ic.r1, -1.0);
        EXPECT_LE(p.ic.r1, 1.0);
    }
    // overall zero fraction 0.75 +- 0.02, and per coefficient within 3 sigma
    const double overall =
        1.0 - static_cast<double>(nonzero_total) / (static_cast<double>(n) * 28);
    EXPECT_NEAR(overall, 0.75, 0.02);
    const double sigma = std::sqrt(0.75 * 0.25 / n);
    for (int k = 0; k < 28; ++k)
        EXPECT_NEAR(zero_count[k] / static_cast<double>(n), 0.75, 3.0 * sigma) << "coeff " << k;
}

TEST(BoundaryValue, MatchesClosedForm) {
    PdeProblem p = gen_problem(5);
    // (x-1)(x+1)(...) vanishes at the corners for any r
    EXPECT_DOUBLE_EQ(boundary_value(p, {0.0, 1.0}), 0.0);
    EXPECT_DOUBLE_EQ(boundary_value(p, {0.0, -1.0}), 0.0);
    // side edges are pinned to zero
    EXPECT_DOUBLE_EQ(boundary_value(p, {0.5, -1.0}), 0.0);
    EXPECT_DOUBLE_EQ(boundary_value(p, {0.99, 1.0}), 0.0);

    p.ic = {1.0, 0.0, 0.0};
    EXPECT_DOUBLE_EQ(boundary_value(p, {0.0, 0.0}), 0.0);
    p.ic = {0.0, 0.0, 1.0};
    EXPECT_DOUBLE_EQ(boundary_value(p, {0.0, 0.0}), -1.0);

    EXPECT_THROW(boundary_value(p, {0.5, 0.5}), domain_error);
}

TEST(SampleBoundary, PointsSitOnBoundaryWithRequestedCounts) {
    PdeProblem p = gen_problem(9);
    Rng rng(1);
    BoundarySet b = sample_boundary(p, rng);
    ASSERT_EQ(b.size(), 100u);
    int at_t0 = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const Point2 pt = b.points[i];
        const bool on_init = pt.t == 0.0;
        const bool on_side = pt.x == -1.0 || pt.x == 1.0;
        EXPECT_TRUE(on_init || on_side);
        if (on_init) ++at_t0;
        EXPECT_DOUBLE_EQ(b.values[i], boundary_value(p, pt));
    }
    EXPECT_EQ(at_t0, 50);

    Rng rng2(1);
    BoundarySet single = sample_boundary(p, rng2, 1, 0, 0);
    EXPECT_EQ(single.size(), 1u);
    EXPECT_EQ(single.points[0].t, 0.0);

    Rng rng3(1);
    EXPECT_THROW(sample_boundary(p, rng3, 0, 0, 0), config_error);
}

TEST(SampleBoundary, SideEdgesExcludeInitialCorner) {
    PdeProblem p = gen_problem(11);
    Rng rng(3);
    BoundarySet b = sample_boundary(p, rng, 0, 500, 500);
    for (const Point2& pt : b.points) EXPECT_GT(pt.t, 0.0);
}

TEST(SampleInterior, OpenBoxUniform) {
    PdeProblem p = gen_problem(13);
    Rng rng(7);
    auto pts = sample_interior(p, rng, 10000);
    double t_mean = 0.0;
    for (const Point2& pt : pts) {
        EXPECT_GT(pt.t, 0.0);
        EXPECT_LT(pt.t, 1.0);
        EXPECT_GT(pt.x, -1.0);
        EXPECT_LT(pt.x, 1.0);
        t_mean += pt.t;
    }
    EXPECT_NEAR(t_mean / 10000, 0.5, 0.02);

    Rng rng2(7);
    auto again = sample_interior(p, rng2, 10000);
    EXPECT_EQ(pts[0].t, again[0].t);
    EXPECT_EQ(pts[9999].x, again[9999].x);
}

TEST(ProblemSet, RoundTripsThroughText) {
    std::vector<PdeProblem> set;
    Rng master(31337);
    for (int i = 0; i < 20; ++i) set.push_back(gen_problem(master.child(i).state()));

    std::stringstream ss;
    write_problem_set(ss, set);
    auto back = read_problem_set(ss);
    ASSERT_EQ(back.size(), set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        EXPECT_EQ(back[i].seed, set[i].seed);
        EXPECT_EQ(back[i].alpha.alpha, set[i].alpha.alpha);
        EXPECT_EQ(back[i].ic.r1, set[i].ic.r1);
        EXPECT_EQ(back[i].ic.r3, set[i].ic.r3);
    }

    // header-only file for n = 0
    std::stringstream empty;
    write_problem_set(empty, {});
    EXPECT_EQ(empty.str().substr(0, 1), "#");
    EXPECT_TRUE(read_problem_set(empty).empty());

    std::stringstream bad("1 2 3\n");
    EXPECT_THROW(read_problem_set(bad), config_error);
}
