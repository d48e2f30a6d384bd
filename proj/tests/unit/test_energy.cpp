#include <doctest.h>

#include "acord/common.hpp"
#include "acord/energy.hpp"

using namespace acord;

TEST_SUITE("energy") {
  TEST_CASE("communication energy") {
    const EnergyParams p;
    CHECK(comm_energy(1.0, 1.0, p) == doctest::Approx(1.12).epsilon(1e-15));
    CHECK(comm_energy(0.0, 0.0, p) == 0.0);
    CHECK(comm_energy(0.6416, 0.0, p) == doctest::Approx(0.506864).epsilon(1e-12));
    CHECK_THROWS_AS(comm_energy(-1.0, 0.0, p), Error);
    CHECK_THROWS_AS(comm_energy(0.0, -1.0, p), Error);
  }

  TEST_CASE("computation energy") {
    const EnergyParams p;
    CHECK(comp_energy(1000000, QuantLevel::k32, p) == doctest::Approx(6.6).epsilon(1e-12));
    CHECK(comp_energy(1000000, QuantLevel::k8, p) == doctest::Approx(1.4).epsilon(1e-12));
    CHECK(comp_energy(0, QuantLevel::k8, p) == 0.0);
    CHECK_THROWS_AS(comp_energy(-1, QuantLevel::k8, p), Error);
    CHECK(p.inference_energy(QuantLevel::k8) == 1.4e-6);
    CHECK(p.inference_energy(QuantLevel::k32) == 6.6e-6);
  }

  TEST_CASE("parameter validation") {
    EnergyParams p;
    CHECK_NOTHROW(p.validate());
    p.tx_power_w = 0;
    CHECK_THROWS_AS(p.validate(), Error);
    p = EnergyParams{};
    p.budget_j = -1;
    CHECK_THROWS_AS(p.validate(), Error);
  }

  TEST_CASE("ledger accumulates and checks the budget") {
    EnergyLedger l(60.0);
    l.accrue_round(1.12, 0.0);
    l.accrue_round(0.3, 0.2);
    CHECK(l.total_j() == doctest::Approx(1.62));
    REQUIRE(l.records().size() == 2);
    CHECK(l.records()[1].round == 2);
    CHECK(l.records()[1].total_j == doctest::Approx(1.62));
    CHECK(l.remaining_j() == doctest::Approx(58.38));
    CHECK_THROWS_AS(l.accrue_round(-1.0, 0.0), Error);

    EnergyLedger near(60.0);
    near.accrue_round(59.9, 0.0);
    CHECK(near.would_exceed(0.2));
    CHECK_FALSE(near.would_exceed(0.1 - 1e-9));
  }

  TEST_CASE("ledger total is non-decreasing") {
    EnergyLedger l;
    double prev = 0.0;
    for (int i = 0; i < 100; ++i) {
      l.accrue_round(0.01 * (i % 7), 1e-6 * i);
      CHECK(l.total_j() >= prev);
      prev = l.total_j();
    }
    CHECK_FALSE(l.would_exceed(1e300));
  }
}
