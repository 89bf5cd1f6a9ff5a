import math

import numpy as np
import pytest

import oracles
from palcas import rewards
from palcas.errors import ContractViolation
from palcas.rewards import (NeighborGap, RewardBreakdown, RewardWeights,
                            agent_reward, comfort_reward, deadlock_penalty,
                            efficiency_reward, priority_lane_change_reward,
                            safety_reward)
from palcas.rss import RssParams

V_LIM = 33.528


class TestEfficiency:
    def test_zero_at_maximum(self):
        r, _, _ = efficiency_reward(V_LIM, V_LIM, 0.0, V_LIM, V_LIM, 0.0)
        assert r == 0.0

    def test_unit_deviation_halved(self):
        r, _, _ = efficiency_reward(0.0, V_LIM, 0.0, V_LIM, V_LIM, 0.0)
        assert r == pytest.approx(-0.5)

    def test_anchor(self):
        r, _, _ = efficiency_reward(20.0, V_LIM, 0.0, V_LIM, V_LIM, 0.0)
        assert r == pytest.approx(-0.2017, abs=5e-4)

    def test_degenerate_range(self):
        with pytest.raises(ContractViolation):
            efficiency_reward(10.0, 5.0, 5.0, 10.0, 20.0, 0.0)


class TestSafety:
    def test_all_safe_is_zero(self):
        longitudinal = {"lead": NeighborGap(500.0, 30.0, 30.0),
                        "follow": NeighborGap(500.0, 30.0, 30.0)}
        lateral = [NeighborGap(3.2, 0.0, 0.0)] * 4
        r, r_long, r_lat = safety_reward(longitudinal, lateral)
        assert r == r_long == r_lat == 0.0

    def test_half_safe_distance_is_minus_half(self):
        params = RssParams()
        from palcas.rss import longitudinal_safe_distance
        delta = longitudinal_safe_distance(30.0, 20.0, params)
        longitudinal = {"lead": NeighborGap(delta / 2.0, 30.0, 20.0)}
        r, _, _ = safety_reward(longitudinal, [], params)
        assert r == pytest.approx(-0.5)

    def test_missing_neighbors_contribute_nothing(self):
        r, _, _ = safety_reward({}, [])
        assert r == 0.0
        r, _, _ = safety_reward({"lead": None, "follow": None}, [None, None])
        assert r == 0.0

    def test_mixed_violations_match_per_neighbor_oracle(self):
        rng = np.random.default_rng(5)
        params = RssParams()
        for _ in range(200):
            entries = {}
            expected = 0.0
            for role in ("lead", "follow"):
                v1, v2 = rng.uniform(0, 40, 2)
                gap = rng.uniform(0, 60)
                entries[role] = NeighborGap(gap, v1, v2)
                expected += oracles.safety_term(gap, oracles.long_safe(v1, v2))
            lateral = []
            for _ in range(rng.integers(0, 5)):
                v1, v2 = rng.uniform(-3, 3, 2)
                gap = rng.uniform(0, 4)
                lateral.append(NeighborGap(gap, v1, v2))
                expected += oracles.safety_term(gap, oracles.lat_safe(v1, v2))
            r, _, _ = safety_reward(entries, lateral, params)
            assert r == pytest.approx(expected, abs=1e-12)

    def test_never_positive(self):
        rng = np.random.default_rng(6)
        for _ in range(300):
            entries = {"lead": NeighborGap(rng.uniform(0, 100),
                                           rng.uniform(0, 40), rng.uniform(0, 40))}
            lateral = [NeighborGap(rng.uniform(0, 4), rng.uniform(-3, 3), rng.uniform(-3, 3))]
            r, _, _ = safety_reward(entries, lateral)
            assert r <= 0.0


class TestComfort:
    def test_threshold_is_zero(self):
        assert comfort_reward(1.47) == pytest.approx(0.0, abs=1e-15)
        assert comfort_reward(-1.47) == pytest.approx(0.0, abs=1e-15)

    def test_anchors(self):
        assert comfort_reward(2.6) == pytest.approx(-0.5947, abs=5e-5)
        assert comfort_reward(0.0) == pytest.approx(0.7737, abs=5e-5)


class TestPriorityLaneChange:
    def test_imminent_exit_from_far_lane(self):
        # at the junction with every change outstanding: full weight, no staging
        out = priority_lane_change_reward(0.0, 1.0, 4, 5, math.inf)
        assert out.scaling_weight == pytest.approx(1.0)
        assert out.staging_penalty == pytest.approx(0.0)

    def test_urgency_is_half_at_balance(self):
        # pick v and d so that tau_tte == tau_need with p_t == 1 exactly
        weights = RewardWeights()
        p_t = 1.0  # infinite ttc
        n_t = 2
        tau_need = n_t * weights.lane_change_time / (p_t + weights.epsilon)
        v = 20.0
        d = tau_need * (v + weights.epsilon)
        out = priority_lane_change_reward(d, v, n_t, 5, math.inf)
        assert out.urgency == pytest.approx(-0.5, abs=1e-9)

    def test_early_staging_anchor(self):
        out = priority_lane_change_reward(2000.0, 30.0, 0, 5, math.inf)
        assert out.staging_penalty == pytest.approx(-0.7616, abs=5e-5)
        assert out.scaling_weight == 0.0

    def test_slow_near_exit_branch(self):
        params = RssParams()
        # choose a ttc whose feasibility is 0.8, then check u_t == -p_t
        target_p = 0.8
        ttc = params.ttc_threshold + params.ttc_temperature * math.log(target_p / (1 - target_p))
        out = priority_lane_change_reward(40.0, 3.0, 2, 5, ttc, params)
        assert out.feasibility == pytest.approx(target_p, abs=1e-12)
        assert out.urgency == pytest.approx(-0.8, abs=1e-12)

    def test_through_semantics(self):
        # no outstanding changes: urgency weight is zero, staging fires alone
        out = priority_lane_change_reward(2400.0, 33.0, 0, 5, math.inf)
        assert out.urgency * out.scaling_weight == 0.0
        assert out.r_lane_change == pytest.approx(out.staging_penalty)

    def test_component_bounds_random(self):
        rng = np.random.default_rng(12)
        for _ in range(500):
            d = rng.uniform(0, 2500)
            v = rng.uniform(0, 35)
            n = int(rng.integers(0, 5))
            ttc = rng.uniform(0, 20) if rng.random() < 0.8 else math.inf
            out = priority_lane_change_reward(d, v, n, 5, ttc)
            assert -1.0 <= out.urgency <= 0.0
            assert 0.0 <= out.scaling_weight <= 1.0
            assert -1.0 < out.staging_penalty <= 0.0
            assert -2.0 < out.r_lane_change <= 0.0

    def test_weight_decreases_with_distance(self):
        prev = None
        for d in np.linspace(0, 2400, 30):
            w = priority_lane_change_reward(float(d), 20.0, 2, 5, math.inf).scaling_weight
            if prev is not None:
                assert w < prev
            prev = w

    def test_staging_decreases_with_distance(self):
        prev = None
        for d in np.linspace(0, 2400, 30):
            p = priority_lane_change_reward(float(d), 20.0, 1, 5, math.inf).staging_penalty
            if prev is not None:
                assert p < prev
            prev = p

    def test_in_exit_lane_urgency_never_fires(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            out = priority_lane_change_reward(rng.uniform(0, 2400), rng.uniform(0, 35),
                                              0, 5, rng.uniform(0, 30))
            assert out.urgency * out.scaling_weight == 0.0


class TestDeadlock:
    def test_at_lane_end(self):
        assert deadlock_penalty(200.0, 200.0, True) == pytest.approx(-1.0)

    def test_off_lane(self):
        assert deadlock_penalty(50.0, 200.0, False) == 0.0

    def test_at_lane_start(self):
        assert deadlock_penalty(0.0, 200.0, True) == pytest.approx(-math.exp(-20.0), rel=1e-9)

    def test_bounds_and_monotone(self):
        vals = [deadlock_penalty(x, 200.0, True) for x in np.linspace(0, 200, 40)]
        assert all(-1.0 <= v <= 0.0 for v in vals)
        assert all(b < a for a, b in zip(vals, vals[1:]))


class TestAggregate:
    def test_agent_reward_sums(self):
        assert agent_reward([]) == 0.0
        zero = RewardBreakdown()
        assert agent_reward([zero]) == 0.0
        weights = RewardWeights()
        b1 = RewardBreakdown(r_safety=-0.6)        # total -0.3 at zeta=0.5
        b2 = RewardBreakdown(r_efficiency=2.0)     # total 0.1 at iota=0.05
        assert agent_reward([b1, b2], weights) == pytest.approx(-0.2)

    def test_linearity_of_weighting(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            b = RewardBreakdown(
                r_efficiency=rng.normal(), r_safety=-abs(rng.normal()),
                r_comfort=rng.normal(), r_lane_change=-abs(rng.normal()),
                r_deadlock=-abs(rng.normal()))
            w = RewardWeights()
            base = b.total(w)
            import dataclasses
            for name, comp in [("efficiency", b.r_efficiency), ("safety", b.r_safety),
                               ("comfort", b.r_comfort), ("lane_change", b.r_lane_change),
                               ("deadlock", b.r_deadlock)]:
                scaled = dataclasses.replace(w, **{name: getattr(w, name) * 3.0})
                assert b.total(scaled) == pytest.approx(
                    base + 2.0 * getattr(w, name) * comp, abs=1e-12)


def test_full_oracle_agreement_random():
    """Each component equals the independently coded literal expression."""
    rng = np.random.default_rng(42)
    params = RssParams()
    for _ in range(1000):
        v = rng.uniform(0, 40)
        vc = rng.uniform(0, 40)
        got, _, _ = efficiency_reward(v, V_LIM, 0.0, vc, V_LIM, 0.0)
        assert got == pytest.approx(
            oracles.efficiency(v, V_LIM, 0.0, vc, V_LIM, 0.0), abs=1e-12)

        a = rng.uniform(-4.5, 2.6)
        assert comfort_reward(a) == pytest.approx(oracles.comfort(a), abs=1e-12)

        d = rng.uniform(0, 2500)
        n = int(rng.integers(0, 5))
        ttc = rng.uniform(0, 25) if rng.random() < 0.9 else math.inf
        out = priority_lane_change_reward(d, v, n, 5, ttc, params)
        p = oracles.feasibility(ttc)
        assert out.feasibility == pytest.approx(p, abs=1e-12)
        assert out.urgency == pytest.approx(oracles.urgency(d, v, n, p), abs=1e-12)
        assert out.scaling_weight == pytest.approx(oracles.scaling_weight(d, n, 5), abs=1e-12)
        assert out.staging_penalty == pytest.approx(oracles.staging_penalty(d, n, 5), abs=1e-12)
        assert out.r_lane_change == pytest.approx(
            oracles.urgency(d, v, n, p) * oracles.scaling_weight(d, n, 5)
            + oracles.staging_penalty(d, n, 5), abs=1e-12)

        x = rng.uniform(0, 200)
        assert deadlock_penalty(x, 200.0, True) == pytest.approx(
            oracles.deadlock(x, 200.0, True), abs=1e-12)
