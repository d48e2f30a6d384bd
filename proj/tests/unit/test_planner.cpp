#include <doctest.h>

#include <cmath>
#include <vector>

#include "acord/common.hpp"
#include "acord/planner.hpp"
#include "acord/rng.hpp"

using namespace acord;

namespace {

PlanInputs base_inputs() {
  PlanInputs in;
  in.downlink.q32 = SizeModel{-8e5, 1e6, 0.0};
  in.downlink.q8 = SizeModel{-2e5, 3e5, 0.0};
  in.uplink = SizeModel{3200, 1600, 0.0};
  in.estimate.uplink_bps = 1e6;
  in.estimate.downlink_bps = 1e6;
  in.max_window = 200;
  in.pruning_threshold = 0.75;
  return in;
}

std::vector<ScoredLabel> random_scored(Rng& rng, std::size_t n) {
  std::vector<ScoredLabel> s;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = rng.uniform() < 0.3 ? 1 : 0;
    s.push_back({std::clamp(rng.uniform() * 0.7 + 0.3 * label, 0.0, 1.0), label});
  }
  if (std::none_of(s.begin(), s.end(), [](const ScoredLabel& x) { return x.label == 1; })) s[0].label = 1;
  return s;
}

}  // namespace

TEST_SUITE("planner") {
  TEST_CASE("target latencies scale with the remaining budget") {
    PlanInputs in = base_inputs();
    const double tau_dl = 1e6 / 1e6;
    const double tau_ul = (3200.0 * 200 + 1600) / 1e6;
    TargetLatencies t = target_latencies(in);
    CHECK(t.downlink_s == doctest::Approx(tau_dl));
    CHECK(t.uplink_s == doctest::Approx(tau_ul));
    in.budget_j = 30;
    t = target_latencies(in);
    CHECK(t.downlink_s == doctest::Approx(tau_dl / 2));
    CHECK(t.uplink_s == doctest::Approx(tau_ul / 2));
    in.budget_j = 60;
    in.compute_energy_estimate_j = 15;
    CHECK(target_latencies(in).downlink_s == doctest::Approx(0.75 * tau_dl));
    in.compute_energy_estimate_j = 60;
    CHECK_THROWS_AS(target_latencies(in), Error);
  }

  TEST_CASE("pruning solves the fitted line") {
    const SizeModel m{-8e5, 1e6, 0.0};
    CHECK(solve_pruning(m, 6e5) == doctest::Approx(0.5));
    CHECK(solve_pruning(m, 1e6) == 0.0);
    CHECK(solve_pruning(m, 5e6) == 0.0);
    CHECK(solve_pruning(m, -1.0) == 1.0);
    CHECK_THROWS_AS(solve_pruning(SizeModel{0.0, 1e6, 0.0}, 5e5), Error);
  }

  TEST_CASE("downlink branch switches to 8 bits past the threshold") {
    PlanInputs in = base_inputs();
    // 6e5 bits -> P(32) = 0.5 <= 0.75
    DownlinkChoice c = plan_downlink(in, 0.6);
    CHECK(c.quant == QuantLevel::k32);
    CHECK(c.prune_fraction == doctest::Approx(0.5));
    // 2.8e5 bits -> P(32) = 0.9 > 0.75 -> 8 bits at P(8) = (2.8e5 - 3e5) / -2e5 = 0.1
    c = plan_downlink(in, 0.28);
    CHECK(c.quant == QuantLevel::k8);
    CHECK(c.prune_fraction == doctest::Approx(0.1));
    CHECK(c.feasible);
    // Nothing fits.
    c = plan_downlink(in, 1e-3);
    CHECK(c.quant == QuantLevel::k8);
    CHECK(c.prune_fraction == 1.0);
    CHECK_FALSE(c.feasible);
  }

  TEST_CASE("context window inverts the uplink line") {
    PlanInputs in = base_inputs();
    CHECK(plan_uplink(in, 0.6416) == 200);
    CHECK(plan_uplink(in, 0.6416 - 1e-9) == 199);
    CHECK(plan_uplink(in, 0.0016) == 0);
    CHECK(plan_uplink(in, 0.0) == 0);
    CHECK(plan_uplink(in, 1e9) == 200);
    in.uplink.slope = 0.0;
    CHECK_THROWS_AS(plan_uplink(in, 1.0), Error);
  }

  TEST_CASE("pruning threshold equates 32-bit pruned and 8-bit unpruned sizes") {
    const SizeModel q32{-8e5, 1e6, 0.0};
    const SizeModel q8{-2e5, 3e5, 0.0};
    const double p = pruning_threshold(q32, q8);
    CHECK(p == doctest::Approx(0.875));
    CHECK(q32.predict(p) == doctest::Approx(q8.predict(0.0)));
  }

  TEST_CASE("random plans respect the fitted time bounds and ranges") {
    Rng rng(17);
    for (int i = 0; i < 2000; ++i) {
      PlanInputs in;
      in.downlink.q32 = SizeModel{-rng.uniform(1e4, 5e5), rng.uniform(1e5, 6e5), rng.uniform(0, 2e4)};
      in.downlink.q8 = SizeModel{in.downlink.q32.slope / 4, in.downlink.q32.intercept / 4, rng.uniform(0, 5e3)};
      in.uplink = SizeModel{rng.uniform(100, 5000), rng.uniform(0, 5000), rng.uniform(0, 500)};
      in.max_window = 1 + static_cast<int>(rng.below(300));
      in.pruning_threshold = pruning_threshold(in.downlink.q32, in.downlink.q8);
      in.budget_j = rng.uniform(0.5, 100);
      in.compute_energy_estimate_j = rng.uniform(0, in.budget_j * 0.9);
      const double rate = rng.uniform(1e4, 5e6);
      in.estimate.uplink_bps = rate;
      in.estimate.downlink_bps = rate;
      const TargetLatencies t = target_latencies(in);
      const Plan p = plan_round(in, 0.4);
      CHECK(p.prune_fraction >= 0.0);
      CHECK(p.prune_fraction <= 1.0);
      CHECK(p.window >= 0);
      CHECK(p.window <= in.max_window);
      CHECK(p.tau == 0.4);
      // 8 bits iff 32 bits would need more pruning than the threshold.
      const double p32 = solve_pruning(in.downlink.q32, rate * t.downlink_s);
      CHECK((p.quant == QuantLevel::k8) == (p32 > in.pruning_threshold));
      const SizeModel& dl = in.downlink.at(p.quant);
      if (p.prune_fraction < 1.0) {
        CHECK(dl.predict(p.prune_fraction) / rate <= t.downlink_s + dl.residual_max / rate + 1e-9);
      }
      if (p.window > 0) {
        CHECK(in.uplink.predict(p.window) / rate <= t.uplink_s + in.uplink.residual_max / rate + 1e-9);
      }
      if (p.window < in.max_window) CHECK(in.uplink.predict(p.window + 1) / rate > t.uplink_s);
    }
  }

  TEST_CASE("threshold is clamped into [0, 1]") {
    const PlanInputs in = base_inputs();
    CHECK(plan_round(in, -0.3).tau == 0.0);
    CHECK(plan_round(in, 1.7).tau == 1.0);
    CHECK(plan_round(in, 0.0).tau == 0.0);
    CHECK_THROWS_AS(plan_round(in, std::nan("")), Error);
  }

  TEST_CASE("more time never means more pruning at a fixed precision, or a smaller window") {
    const PlanInputs in = base_inputs();
    double prev32 = 2.0, prev8 = 2.0;
    int prev_w = -1;
    bool seen32 = false;
    for (int k = 0; k <= 400; ++k) {
      const double t = 0.005 * k;
      const double p32 = solve_pruning(in.downlink.q32, in.estimate.downlink_bps * t);
      const double p8 = solve_pruning(in.downlink.q8, in.estimate.downlink_bps * t);
      CHECK(p32 <= prev32);
      CHECK(p8 <= prev8);
      prev32 = p32;
      prev8 = p8;
      const DownlinkChoice c = plan_downlink(in, t);
      // Once the 32-bit branch is reachable it stays chosen.
      if (seen32) CHECK(c.quant == QuantLevel::k32);
      seen32 = seen32 || c.quant == QuantLevel::k32;
      const int w = plan_uplink(in, t);
      CHECK(w >= prev_w);
      prev_w = w;
    }
    CHECK(seen32);
  }

  TEST_CASE("threshold grid") {
    const auto g = threshold_grid(0.1);
    REQUIRE(g.size() == 11);
    CHECK(g[3] == 0.3);
    CHECK(g.front() == 0.0);
    CHECK(g.back() == 1.0);
    CHECK(threshold_grid(0.5) == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(threshold_grid(0.3).back() == 1.0);
    CHECK_THROWS_AS(threshold_grid(0.0), Error);
  }

  TEST_CASE("perfect separator selects objective zero") {
    std::vector<ScoredLabel> s{{0.1, 0}, {0.2, 0}, {0.8, 1}, {0.9, 1}};
    const ThresholdChoice c = roc_threshold(s, 0.1);
    CHECK(c.objective == 0.0);
    // Ties go to the largest tau with objective 0.
    CHECK(c.tau == doctest::Approx(0.7));
  }

  TEST_CASE("scores equal to labels on a three-point grid") {
    std::vector<ScoredLabel> s{{0, 0}, {1, 1}, {0, 0}, {1, 1}, {1, 1}};
    const ThresholdChoice c = roc_threshold(s, 0.5);
    CHECK(c.tau == 0.5);
    CHECK(c.objective == 0.0);
    REQUIRE(c.curve.size() == 3);
    CHECK(c.curve[2].tpr == 0.0);
  }

  TEST_CASE("threshold selection matches a brute-force scan") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
      const auto s = random_scored(rng, 20 + rng.below(200));
      const ThresholdChoice c = roc_threshold(s, 0.1);
      double best = kInfinity, best_tau = -1;
      for (int k = 0; k <= 10; ++k) {
        const double tau = k / 10.0;
        double tp = 0, fp = 0, pos = 0, neg = 0;
        for (const auto& x : s) {
          const bool f = x.score > tau;
          (x.label ? pos : neg) += 1;
          (x.label ? tp : fp) += f;
        }
        const double fpr = neg ? fp / neg : 0, tpr = tp / pos;
        const double obj = fpr * fpr + (1 - tpr) * (1 - tpr);
        if (obj <= best) {
          best = obj;
          best_tau = tau;
        }
      }
      CHECK(c.tau == doctest::Approx(best_tau));
      CHECK(c.objective == doctest::Approx(best));
    }
  }

  TEST_CASE("threshold selection without positives signals the caller") {
    std::vector<ScoredLabel> s{{0.2, 0}, {0.6, 0}};
    CHECK_THROWS_AS(roc_threshold(s, 0.1), NoPositivesError);
    CHECK_THROWS_AS(roc_threshold(std::vector<ScoredLabel>{}, 0.1), Error);
  }

  TEST_CASE("AUC") {
    CHECK(roc_auc(std::vector<RocPoint>{}) == doctest::Approx(0.5));
    CHECK(roc_auc(std::vector<RocPoint>{{0.5, 0.0, 1.0}}) == doctest::Approx(1.0));
    CHECK(roc_auc(std::vector<RocPoint>{{0.5, 0.5, 0.5}}) == doctest::Approx(0.5));
    CHECK(roc_auc(std::vector<RocPoint>{{0.5, 0.2, 0.6}}) == doctest::Approx(0.2 * 0.3 + 0.8 * 0.8));
  }

  TEST_CASE("event energy") {
    const EnergyParams p;
    CHECK(event_energy(EventCost{1e6, 1e6, 1e6}, p) == doctest::Approx(1.12));
    CHECK(event_energy(EventCost{641600, 0, 1e6}, p) == doctest::Approx(0.506864));
  }

  TEST_CASE("periodic schedule is the smallest feasible period") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t horizon = 10 + rng.below(5000);
      const double event_j = rng.uniform(0.1, 5.0);
      const double budget = rng.uniform(event_j, 200.0);
      const PeriodicSchedule s = periodic_schedule(budget, horizon, event_j);
      std::size_t want = horizon;
      for (std::size_t p = 1; p <= horizon; ++p) {
        if (static_cast<double>(horizon / p) * event_j <= budget) {
          want = p;
          break;
        }
      }
      CHECK(s.period == want);
      CHECK(s.events == horizon / s.period);
      CHECK(s.projected_j <= budget);
      if (s.period > 1 && s.period * (s.period - 1) >= horizon) CHECK(budget - s.projected_j < event_j);
    }
    CHECK_THROWS_AS(periodic_schedule(0.5, 100, 1.0), Error);
    CHECK_THROWS_AS(periodic_schedule(10, 0, 1.0), Error);
  }

  TEST_CASE("baseline policies") {
    const EnergyParams p;
    const EventCost cost{641600, 269000, 1e6};
    const BaselinePolicy h = baseline_policy(Policy::kHawk, 60, 18000, cost, p);
    CHECK(h.plan == Plan{0.0, QuantLevel::k32, 200, 0.5});
    const BaselinePolicy h0 = baseline_policy(Policy::kHawk, 0.01, 18000, cost, p);
    CHECK(h0.schedule.event_j > 0.01);
    const BaselinePolicy per = baseline_policy(Policy::kPeriodic, 60, 18000, cost, p);
    CHECK(per.plan.window == 200);
    CHECK(per.schedule.projected_j <= 60.0);
    CHECK(60.0 - per.schedule.projected_j < per.schedule.event_j);
    CHECK_THROWS_AS(baseline_policy(Policy::kPeriodic, 0.01, 18000, cost, p), Error);
    CHECK_THROWS_AS(baseline_policy(Policy::kAcord, 60, 18000, cost, p), Error);
  }
}
