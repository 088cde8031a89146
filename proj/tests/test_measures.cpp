#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "tcmf/measures.hpp"
#include "tcmf/rng.hpp"

using namespace tcmf;

TEST_CASE("empirical") {
    SECTION("single atom") {
        const EmpiricalMeasure p = empirical({3.0});
        REQUIRE(p.atoms == std::vector<double>{3.0});
        REQUIRE(p.mean() == 3.0);
    }
    SECTION("atoms stored sorted, duplicates kept") {
        const EmpiricalMeasure p = empirical({2.0, 1.0, 2.0});
        REQUIRE(p.atoms == std::vector<double>{1.0, 2.0, 2.0});
        REQUIRE(p.mean() == Catch::Approx(5.0 / 3.0));
    }
    SECTION("MC mean of standard normal samples") {
        RngStream rng(1);
        std::vector<double> xs(10000);
        for (auto& x : xs) x = rng.next_gaussian();
        REQUIRE(empirical(xs).mean() == Catch::Approx(0.0).margin(0.05));
    }
    SECTION("empty input rejected") {
        REQUIRE_THROWS_AS(empirical({}), std::invalid_argument);
    }
}

TEST_CASE("mean_functional") {
    REQUIRE(mean_functional(empirical({5.0}), [](double x) { return x; }) == 5.0);
    REQUIRE(mean_functional(empirical({-1.0, 1.0}), [](double x) { return x * x; }) ==
            1.0);
    RngStream rng(2);
    std::vector<double> xs(10000);
    for (auto& x : xs) x = 2.0 + rng.next_gaussian();
    REQUIRE(mean_functional(empirical(xs), [](double x) { return x; }) ==
            Catch::Approx(2.0).margin(0.05));
}

TEST_CASE("wasserstein2") {
    SECTION("identical diracs") {
        REQUIRE(wasserstein2(empirical({4.0}), empirical({4.0})) == 0.0);
    }
    SECTION("dirac to dirac") {
        REQUIRE(wasserstein2(empirical({0.0}), empirical({3.0})) == 3.0);
    }
    SECTION("two-atom example against brute force") {
        const double d = wasserstein2(empirical({0.0, 1.0}), empirical({1.0, 2.0}));
        REQUIRE(d == Catch::Approx(oracle::wasserstein2_bruteforce({0, 1}, {1, 2})));
        REQUIRE(d == Catch::Approx(1.0));
    }
    SECTION("sorted pairing equals exhaustive minimum for random instances") {
        RngStream rng(3);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t n = 1 + rng.next_u64() % 6;
            std::vector<double> a(n), b(n);
            for (auto& v : a) v = 4.0 * rng.next_double() - 2.0;
            for (auto& v : b) v = 4.0 * rng.next_double() - 2.0;
            const double fast = wasserstein2(empirical(a), empirical(b));
            const double slow = oracle::wasserstein2_bruteforce(a, b);
            REQUIRE(fast == Catch::Approx(slow).margin(1e-12));
        }
    }
    SECTION("metric properties on random triples") {
        RngStream rng(4);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> a(8), b(8), c(8);
            for (auto& v : a) v = rng.next_gaussian();
            for (auto& v : b) v = rng.next_gaussian();
            for (auto& v : c) v = rng.next_gaussian();
            const EmpiricalMeasure P = empirical(a), Q = empirical(b), R = empirical(c);
            REQUIRE(wasserstein2(P, P) == 0.0);
            REQUIRE(wasserstein2(P, Q) == wasserstein2(Q, P));
            REQUIRE(wasserstein2(P, R) <=
                    wasserstein2(P, Q) + wasserstein2(Q, R) + 1e-12);
        }
    }
    SECTION("translation covariance is exact") {
        RngStream rng(5);
        std::vector<double> a(16), b(16);
        for (auto& v : a) v = rng.next_gaussian();
        for (auto& v : b) v = rng.next_gaussian();
        const double base = wasserstein2(empirical(a), empirical(b));
        const double shift = 1.25;
        for (auto& v : a) v += shift;
        for (auto& v : b) v += shift;
        REQUIRE(wasserstein2(empirical(a), empirical(b)) == base);
    }
    SECTION("unequal sizes resolved by quantile resampling") {
        // N(0,1)-ish sample vs its own duplicate at doubled size: distance ~ 0
        const EmpiricalMeasure p = empirical({-1.0, 0.0, 1.0});
        const EmpiricalMeasure q = empirical({-1.0, -1.0, 0.0, 0.0, 1.0, 1.0});
        REQUIRE(wasserstein2(p, q) == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("law_flow_distance") {
    const TimeGrid g = build_grid(1.0, 4);

    auto flow_of = [&](std::vector<std::vector<double>> per_knot) {
        LawFlow f;
        f.grid = g;
        for (auto& atoms : per_knot) f.marginals.push_back(empirical(atoms));
        return f;
    };

    SECTION("identical flows") {
        const LawFlow a = flow_of({{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}});
        REQUIRE(law_flow_distance(a, a) == 0.0);
    }
    SECTION("constant shift at every knot") {
        const LawFlow a = flow_of({{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}});
        LawFlow b = a;
        for (auto& m : b.marginals)
            for (auto& atom : m.atoms) atom += 0.7;
        REQUIRE(law_flow_distance(a, b) == Catch::Approx(0.7));
    }
    SECTION("max over knots") {
        const LawFlow a = flow_of({{0}, {0}, {0}, {0}, {0}});
        const LawFlow b = flow_of({{0}, {0}, {0.7}, {0}, {0}});
        REQUIRE(law_flow_distance(a, b) == Catch::Approx(0.7));
    }
    SECTION("grid mismatch rejected") {
        const LawFlow a = flow_of({{0}, {0}, {0}, {0}, {0}});
        LawFlow b = LawFlow::dirac(build_grid(1.0, 2), 0.0);
        REQUIRE_THROWS_AS(law_flow_distance(a, b), std::invalid_argument);
    }
}
