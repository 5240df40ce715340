from __future__ import annotations

import numpy as np
import pytest

from tnfr import fourrooms as fr
from tnfr import qlearn as ql
from tnfr.mdp import Policy, bellman_residual, evaluate_policy_exact, value_iteration_exact


@pytest.fixture(scope="module")
def env():
    return fr.FourRoomsEnv()


@pytest.fixture(scope="module")
def qstar(env):
    return value_iteration_exact(env.mdp, 1e-13)[0]


# -- layout ------------------------------------------------------------------

def test_layout_invariants(env):
    assert env.grid.shape == (13, 13)  # 11x11 interior plus outer wall
    assert env.n_states == 104
    assert env.rooms() == 4
    assert len(env.gap_cells()) == 4
    assert env.start != env.goal
    assert env.cells[env.start] == (11, 11) and env.cells[env.goal] == (1, 1)


def test_fixture_matches_constant(env):
    assert np.array_equal(fr.load_layout(), env.grid)


def test_fixture_with_custom_codes(tmp_path, env):
    import json

    codes = {"floor": 5, "wall": 6, "start": 7, "goal": 8}
    remap = {0: 5, 1: 6, 2: 7, 3: 8}
    grid = [[remap[int(v)] for v in row] for row in env.grid]
    path = tmp_path / "layout.json"
    path.write_text(json.dumps({"codes": codes, "grid": grid}))
    assert np.array_equal(fr.load_layout(path), env.grid)


def test_unreachable_cell_rejected():
    rows = list(fr.LAYOUT_ROWS)
    rows[6] = "wwwwwww     w"  # close the left gap
    rows[3] = "w     w     w"  # and the top gap: the top-left room is cut off
    with pytest.raises(ValueError, match="unreachable"):
        fr.FourRoomsEnv(fr.layout_from_rows(rows))


# -- env_step ----------------------------------------------------------------

def test_outer_wall_bump(env):
    s = env.start  # bottom-right corner: down and right hit the outer wall
    assert fr.env_step(env, s, fr.DOWN) == (s, 0.0, False)
    assert fr.env_step(env, s, fr.RIGHT) == (s, 0.0, False)


def test_goal_step(env):
    below_goal = env.index[(2, 1)]
    assert fr.env_step(env, below_goal, fr.UP) == (env.goal, 1.0, True)


def test_invalid_cell(env):
    with pytest.raises(ValueError, match="invalid cell"):
        fr.env_step(env, 999, fr.UP)


def test_shortest_path_matches_bfs(env, qstar):
    s, steps = env.start, 0
    greedy = np.argmax(qstar, axis=1)
    while True:
        s, r, term = fr.env_step(env, s, int(greedy[s]))
        steps += 1
        if term:
            break
    assert steps == env.bfs_distances(env.start)[env.goal]
    assert r == 1.0


def test_optimal_return_is_discounted_bfs(env):
    dist = env.bfs_distances(env.start)[env.goal]
    assert fr.optimal_start_value(env) == pytest.approx(env.gamma ** (dist - 1), abs=1e-12)


# -- behavior policy ---------------------------------------------------------

def test_epsilon_one_is_uniform(env):
    pol = fr.behavior_policy(np.zeros((104, 4)), 1.0, seed=0)
    x = env.encode(env.start)
    n = 10_000
    counts = np.bincount([pol(x) for _ in range(n)], minlength=4)
    sigma = np.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(counts - n / 4) < 3 * sigma)


def test_epsilon_zero_is_greedy(env):
    table = np.zeros((104, 4))
    table[:, 2] = 1.0
    pol = fr.behavior_policy(table, 0.0, seed=0)
    assert {pol(env.encode(s)) for s in range(104) for _ in range(3)} == {2}


def test_epsilon_half_greedy_frequency(env):
    q = ql.QApproximator("tabular", 104, 4)
    q.theta.reshape(104, 4)[env.start, 3] = 1.0
    pol = fr.behavior_policy(q, 0.5, seed=1)
    n = 10_000
    hits = sum(pol(env.encode(env.start)) == 3 for _ in range(n))
    p = 0.5 + 0.5 / 4
    assert abs(hits - n * p) < 3 * np.sqrt(n * p * (1 - p))


def test_epsilon_range():
    with pytest.raises(ValueError):
        fr.behavior_policy(np.zeros((1, 4)), 1.5)


def test_tie_break_lowest_index(env):
    pol = fr.behavior_policy(np.zeros((104, 4)), 0.0)
    assert pol(env.encode(5)) == fr.UP


# -- exact oracles -----------------------------------------------------------

def test_true_q_of_optimal_is_optimal(env, qstar):
    assert np.max(np.abs(fr.true_q_of_greedy(env, qstar) - qstar)) < 1e-10


def test_true_q_in_unit_interval(env, rng):
    for _ in range(5):
        q = fr.true_q_of_greedy(env, rng.normal(size=(104, 4)))
        assert q.min() >= 0.0 and q.max() <= 1.0


def test_true_q_residual_random_approximator(env):
    q = ql.QApproximator("mlp1", 104, 4, hidden=16, seed=3)
    table = fr.q_table(env, q)
    qpi = fr.true_q_of_greedy(env, q)
    assert bellman_residual(env.mdp, Policy.greedy(table), qpi) < 1e-10


# -- evaluation --------------------------------------------------------------

def test_evaluate_optimal_greedy_has_zero_regret(env, qstar):
    rep = fr.evaluate(env, qstar, n_episodes=5, epsilon_eval=0.0)
    assert rep.avg_regret == pytest.approx(0.0, abs=1e-12)
    assert rep.max_q_error < 1e-20 and not rep.soft_divergent


def test_evaluate_defaults():
    import inspect

    sig = inspect.signature(fr.evaluate)
    assert sig.parameters["n_episodes"].default == 100
    assert sig.parameters["epsilon_eval"].default == 0.1


def test_evaluate_smoothed_optimal_matches_closed_form(env, qstar):
    n = 2000
    rep = fr.evaluate(env, qstar, n_episodes=n, epsilon_eval=0.1, seed=4)
    smoothed = Policy.greedy(qstar).smoothed(0.1)
    qpi = evaluate_policy_exact(env.mdp, smoothed)
    v_start = float(smoothed.probs[env.start] @ qpi[env.start])
    exact_regret = fr.optimal_start_value(env) - v_start
    returns = np.array([e.ret for e in rep.episodes])
    sigma = returns.std(ddof=1) / np.sqrt(n)
    assert abs(rep.avg_regret - exact_regret) < 3 * sigma


def test_soft_divergence_flag_tracks_error(env, qstar):
    bumped = qstar.copy()
    bumped[env.start, 0] += 1.5
    rep = fr.evaluate(env, bumped, n_episodes=1)
    assert rep.soft_divergent and rep.max_q_error > 1
    assert not fr.evaluate(env, qstar + 0.5, n_episodes=1).soft_divergent


def test_regret_nonnegative_in_expectation(env, rng):
    for _ in range(3):
        rep = fr.evaluate(env, rng.normal(size=(104, 4)), n_episodes=50, seed=int(rng.integers(1000)))
        assert rep.avg_regret >= 0.0


def test_evaluate_needs_episodes(env, qstar):
    with pytest.raises(ValueError):
        fr.evaluate(env, qstar, n_episodes=0)


# -- experiment --------------------------------------------------------------

def small_cfg(**kw):
    base = dict(total_steps=1500, eval_every=500, n_eval_episodes=5, learning_starts=100, hidden=16)
    base.update(kw)
    return fr.ExperimentConfig(**base)


def test_experiment_deterministic(env):
    cfg = small_cfg(agent="fr", epsilon=0.5, kappa=0.5, period=250, seed=3)
    a = fr.results_csv([(cfg, fr.run_experiment(cfg, env))])
    b = fr.results_csv([(cfg, fr.run_experiment(cfg, env))])
    assert a == b
    assert a.splitlines()[0] == "agent,epsilon,kappa,period,seed,eval_step,avg_regret,max_q_error,soft_divergent"
    assert len(a.splitlines()) == 1 + 3


@pytest.mark.parametrize("eps", [0.1, 0.3, 0.5, 0.7, 0.9, 0.95])
def test_epsilon_grid_supported(env, eps):
    rows = fr.run_experiment(small_cfg(epsilon=eps, total_steps=300, eval_every=300, n_eval_episodes=1), env)
    assert len(rows) == 1


@pytest.mark.parametrize("period", [10, 100, 250, 500])
def test_period_grid_supported(env, period):
    rows = fr.run_experiment(small_cfg(agent="tn", period=period, total_steps=300, eval_every=300, n_eval_episodes=1), env)
    assert len(rows) == 1


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        fr.ExperimentConfig(agent="dqn")
    with pytest.raises(ValueError):
        fr.ExperimentConfig(epsilon=2.0)


@pytest.mark.slow
def test_tabular_sanity_anchor(env):
    cfg = fr.ExperimentConfig(
        agent="tn", epsilon=1.0, period=1, approximator="tabular", lr=1.0, optimizer="sgd",
        total_steps=60_000, eval_every=60_000, n_eval_episodes=10, learning_starts=1000, seed=0,
    )
    rows = fr.run_experiment(cfg, env)
    assert rows[-1].max_q_error < 0.05
