import itertools

import numpy as np
import pytest

from orgmarl import env as E
from orgmarl import oracle as O
from orgmarl.env import BALANCE, GROUP, SELF, DomainParams


@pytest.fixture(scope="module")
def params():
    return DomainParams()


@pytest.fixture(scope="module")
def best20(params):
    return O.enumerate_best(params, 20, 0.95)


# --- bonus recursion ----------------------------------------------------------


def test_bonus_spot_values():
    assert O.bonus_accumulate([3, 3, 1, 3], 0.5)[0] == 15.375
    assert O.bonus_accumulate(O.pi1_rewards(4, 3, 9 / 4), 0.5)[0] == 16.5
    assert O.bonus_accumulate(O.pi0_rewards(4, 5), 0.5)[0] == 24.625
    assert O.bonus_accumulate(O.pi1_rewards(4, 5, 9 / 4), 0.5)[0] == 23.75


def test_bonus_closed_form_identity():
    rng = np.random.default_rng(0)
    for _ in range(100):
        beta, r, phi = rng.uniform(1.1, 10), rng.uniform(0.1, 5), rng.uniform(0, 0.99)
        d = rng.uniform(1.01, beta)
        assert O.bonus_accumulate(O.pi0_rewards(4, beta, r), phi)[0] == pytest.approx(
            O.pi0_total_h4(beta, r, phi), abs=1e-12, rel=1e-12)
        assert O.bonus_accumulate(O.pi1_rewards(4, beta, d, r), phi)[0] == pytest.approx(
            O.pi1_total_h4(beta, r, phi, d), abs=1e-12, rel=1e-12)


def test_bonus_phi_zero_is_plain_sum():
    xs = np.random.default_rng(1).normal(size=30)
    total, bonus = O.bonus_accumulate(xs, 0.0)
    assert total == pytest.approx(xs.sum(), abs=1e-12)
    assert not bonus.any()


def test_bonus_weights_match_recursion():
    rng = np.random.default_rng(2)
    for H in range(1, 25):
        xs, phi = rng.normal(size=H), rng.uniform(0, 0.99)
        assert xs @ O.bonus_weights(H, phi) == pytest.approx(O.bonus_accumulate(xs, phi)[0], abs=1e-10)


def test_bonus_rejects_bad_phi():
    with pytest.raises(ValueError):
        O.bonus_accumulate([1, 2], 1.0)


def test_reward_streams():
    np.testing.assert_array_equal(O.pi0_rewards(6, 3), [3, 3, 1, 3, 1, 3])
    np.testing.assert_array_equal(O.pi1_rewards(5, 3, 2.25), [3, 3, 2.25, 2.25, 2.25])


# --- crossover -----------------------------------------------------------------

BETAS = np.round(np.arange(2.3, 10.0001, 0.01), 2)
PHIS = np.round(np.arange(0.01, 0.995, 0.01), 2)


def test_crossover_examples():
    g = O.policy_crossover([3.0, 5.0], [0.5], 4)
    assert g.sign[0, 0] == -1  # pi1 wins at beta 3
    assert g.sign[1, 0] == 1  # pi0 wins at beta 5
    rows = list(g.rows())
    assert rows[0] == (3.0, 0.5, 4, "pi1")


@pytest.mark.parametrize("H", range(4, 21))
def test_phi_flips_winner_every_horizon(H):
    grid = O.policy_crossover(BETAS, PHIS, H)
    assert grid.phi_is_deciding()


def test_crossover_matches_scalar_recursion():
    betas, phis = [2.5, 3.62, 4.0, 7.0], [0.1, 0.5, 0.9]
    for H in (4, 9, 17):
        g = O.policy_crossover(betas, phis, H)
        for bi, b in enumerate(betas):
            for pj, phi in enumerate(phis):
                diff = (O.bonus_accumulate(O.pi0_rewards(H, b), phi)[0]
                        - O.bonus_accumulate(O.pi1_rewards(H, b, 9 / 4), phi)[0])
                assert g.sign[bi, pj] == np.sign(diff)


def test_crossover_needs_h4():
    with pytest.raises(ValueError):
        O.policy_crossover([3], [0.5], 3)


# --- exact evaluation --------------------------------------------------------------


def test_evaluate_always_balance_one_step(params):
    res = O.evaluate_joint([(BALANCE,) * 3] * 2, params, 1)
    np.testing.assert_allclose(res.per_agent, [3.375, 3.375], atol=1e-15)


def test_evaluate_group_from_vl(params):
    res = O.evaluate_joint([(GROUP,) * 3] * 2, params, 1, start="vl")
    np.testing.assert_array_equal(res.per_agent, [2 + params.penalty] * 2)


def test_gamma_zero_is_one_step(params):
    rng = np.random.default_rng(3)
    for _ in range(20):
        pols = [rng.integers(3, size=9) for _ in range(2)]
        for H in (1, 5, 20):
            np.testing.assert_array_equal(O.evaluate_joint(pols, params, H, 0.0).per_agent,
                                          O.evaluate_joint(pols, params, 1).per_agent)


def test_accepts_names_and_window_tables(params):
    a = O.evaluate_joint([("group", "balance", "self")] * 2, params, 6)
    b = O.evaluate_joint([np.tile([GROUP, BALANCE, SELF], (3, 1))] * 2, params, 6)
    assert a.team == b.team


def test_evaluate_rejects_wrong_agent_count(params):
    with pytest.raises(ValueError):
        O.evaluate_joint([(0, 0, 0)], params, 3)


def test_tiny_phi_removes_bonus(params):
    tiny = params.replace(phi=np.nextafter(0.0, 1.0))
    rng = np.random.default_rng(4)
    for _ in range(20):
        tables = [rng.integers(3, size=(3, 3)) for _ in range(2)]
        level = E.level_index(params.start)
        prev = sym = int(E.LEVEL_SYMBOL[level])
        expected = np.zeros(2)
        for t in range(15):
            acts = [int(tab[prev, sym]) for tab in tables]
            base = E.base_rewards(level, acts, params)
            expected += 0.9**t * (base.R0 + base.Ri)
            level = E.transition_level(level, E.resolve_joint(acts))
            prev, sym = sym, int(E.LEVEL_SYMBOL[level])
        np.testing.assert_allclose(O.evaluate_joint(tables, tiny, 15, 0.9).per_agent, expected, rtol=0, atol=1e-12)


def test_noisy_evaluation_matches_monte_carlo():
    params = DomainParams(public_noise=0.3, phi=0.5)
    pols = [np.array([[GROUP, GROUP, SELF], [BALANCE, GROUP, SELF], [GROUP, BALANCE, SELF]]),
            np.array([[GROUP, SELF, SELF], [GROUP, GROUP, BALANCE], [BALANCE, GROUP, SELF]])]
    H, gamma = 4, 0.9
    exact = O.evaluate_joint(pols, params, H, gamma).per_agent
    rng = np.random.default_rng(5)
    n = 40_000
    total = np.zeros((n, 2))
    for k in range(n):
        state = E.reset(params)
        prev = cur = E.observe_level(state.level, params, rng)
        disc = 1.0
        for _ in range(H):
            acts = [int(p[prev, cur]) for p in pols]
            res = E.step(state, acts, params, rng)
            total[k] += disc * res.rewards
            disc *= gamma
            state, prev, cur = res.state, cur, res.public.o_f
    se = total.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(total.mean(axis=0) - exact) < 4 * se)


def test_noisy_horizon_guard():
    with pytest.raises(ValueError):
        O.evaluate_joint([(0, 0, 0)] * 2, DomainParams(public_noise=0.1), 13)


def test_uniform_start_averages_levels(params):
    pols = [(GROUP, BALANCE, SELF)] * 2
    avg = O.evaluate_joint(pols, params, 8, start="uniform").team
    each = [O.evaluate_joint(pols, params, 8, start=lv).team for lv in E.LEVELS]
    assert avg == pytest.approx(np.mean(each), abs=1e-12)


def play_tables(tables, params, H, rng):
    """Run the env with window-table policies; returns realised totals and the action log."""
    state = E.reset(params)
    sym = int(E.LEVEL_SYMBOL[state.level])
    prev = sym
    totals = np.zeros(len(tables))
    log = []
    for _ in range(H):
        acts = [int(t[prev, sym]) for t in tables]
        res = E.step(state, acts, params, rng)
        totals += res.rewards
        log.append(acts)
        state, prev, sym = res.state, sym, res.public.o_f
    return totals, log


def test_env_and_oracle_agree_on_random_rollouts():
    rng = np.random.default_rng(6)
    for k in range(1000):
        n = 2 + k % 3
        params = DomainParams(n_agents=n, start=E.LEVELS[k % 5], phi=rng.uniform(0.05, 0.95),
                              private_noise=0.2)
        tables = [rng.integers(3, size=(3, 3)) for _ in range(n)]
        H = int(rng.integers(1, 25))
        realised, log = play_tables(tables, params, H, rng)
        np.testing.assert_allclose(O.evaluate_joint(tables, params, H, 1.0).per_agent, realised,
                                   rtol=0, atol=1e-9)
        np.testing.assert_allclose(O.replay(log, params), realised, rtol=0, atol=1e-9)


def test_replay_of_scripted_sequence(params):
    # both group at m (R0 = 2), then at vh both self (Ri = 3 each)
    totals = O.replay([["group", "group"], ["self", "self"]], params)
    # step 1: 2 each; step 2: 3 + bonus 0.5 * 2 = 4 each
    np.testing.assert_array_equal(totals, [6.0, 6.0])
    np.testing.assert_array_equal(O.replay([], params), [0.0, 0.0])


# --- enumeration ----------------------------------------------------------------


def test_table_ordering(params, best20):
    v = O.value_triple(params, 20, 0.95, best=best20)
    assert v.optimal > v.balance_only > v.group_only
    assert v.optimal == pytest.approx(186.89836691992417, rel=1e-12)
    assert v.balance_only == pytest.approx(184.93408315923168, rel=1e-12)
    assert v.group_only == pytest.approx(95.02320740037658, rel=1e-12)


def test_calibrated_argmax(best20):
    assert best20.policies == ((BALANCE, SELF, SELF), (BALANCE, SELF, SELF))
    assert best20.evaluated == 27 * 27
    np.testing.assert_array_equal(best20.deviation_gain, [0.0, 0.0])


def test_enumeration_dominates_every_joint_policy(params, best20):
    rng = np.random.default_rng(7)
    for _ in range(50):
        pols = [tuple(rng.integers(3, size=3)) for _ in range(2)]
        assert O.evaluate_joint(pols, params, 20, 0.95).team <= best20.team + 1e-9


def test_one_step_argmax_from_vh(params):
    # at vh both balancing pays 2 * 3.375 = 6.75, both self pays 2 * 3 = 6
    best = O.enumerate_best(params, 1, 0.0, start="vh")
    assert best.policies == ((SELF, SELF, BALANCE), (SELF, SELF, BALANCE))
    assert best.team == pytest.approx(6.75)


def test_lexicographic_ties(params):
    # with one step from vh only the "many" entry matters; the rest resolve to self (index 0)
    best = O.enumerate_best(params, 1, 0.0, start="vh")
    assert best.policies[0][:2] == (SELF, SELF)


def test_relabeling_invariance():
    params = DomainParams(n_agents=3)
    best = O.enumerate_best(params, 8, 0.95)
    for perm in itertools.permutations(range(3)):
        pols = tuple(best.policies[i] for i in perm)
        assert O.evaluate_joint(pols, params, 8, 0.95).team == pytest.approx(best.team, abs=1e-12)


def test_enumeration_refuses_large_teams():
    with pytest.raises(ValueError):
        O.enumerate_best(DomainParams(n_agents=5), 3)


# --- certification ----------------------------------------------------------------


def test_certify_argmax_has_zero_gap(params, best20):
    rep = O.certify(best20.policies, params, 20, 0.95, best=best20)
    assert rep.optimal and rep.gap == 0.0


def test_certify_group_only(params, best20):
    rep = O.certify([(GROUP,) * 3] * 2, params, 20, 0.95, best=best20)
    assert rep.status == "suboptimal"
    v = O.value_triple(params, 20, 0.95, best=best20)
    assert rep.gap == pytest.approx((v.optimal - v.group_only) / v.optimal, abs=1e-15)


def test_certify_gap_nonnegative(params, best20):
    rng = np.random.default_rng(8)
    for _ in range(30):
        rep = O.certify([rng.integers(3, size=9) for _ in range(2)], params, 20, 0.95, best=best20)
        assert rep.gap >= 0
        assert rep.to_dict()["status"] in ("optimal", "suboptimal")


def test_coarsen():
    assert O.coarsen([GROUP, BALANCE, SELF]) == (GROUP, BALANCE, SELF)
    table = np.array([[GROUP, SELF, SELF], [GROUP, BALANCE, SELF], [BALANCE, GROUP, BALANCE]])
    # column "meager": group twice; column "several": three-way split, diagonal wins; "many": self twice
    assert O.coarsen(table) == (GROUP, BALANCE, SELF)
