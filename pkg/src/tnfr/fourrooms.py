"""Four Rooms gridworld: environment, exact oracles, and the off-policy
Q-learning experiment comparing target networks with functional
regularization.

The layout is the classic 11x11 interior (13x13 with the outer wall): four
rooms, one gap per dividing wall, start bottom-right, goal top-left.  Entering
the goal pays 1 and ends the episode; every other step pays 0.
"""
from __future__ import annotations

import csv
import io
import json
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import qlearn as ql
from .mdp import Mdp, Policy, evaluate_policy_exact, value_iteration_exact

UP, DOWN, LEFT, RIGHT = range(4)
MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}
CODES = {"floor": 0, "wall": 1, "start": 2, "goal": 3}

LAYOUT_ROWS = (
    "wwwwwwwwwwwww",
    "wG    w     w",
    "w     w     w",
    "w           w",
    "w     w     w",
    "w     w     w",
    "ww wwww     w",
    "w     www www",
    "w     w     w",
    "w     w     w",
    "w           w",
    "w     w    Sw",
    "wwwwwwwwwwwww",
)


def layout_from_rows(rows) -> np.ndarray:
    lut = {"w": CODES["wall"], " ": CODES["floor"], "S": CODES["start"], "G": CODES["goal"]}
    return np.array([[lut[ch] for ch in row] for row in rows], dtype=int)


def load_layout(path=None) -> np.ndarray:
    """Grid of codes from a JSON fixture (the bundled one by default)."""
    if path is None:
        text = resources.files("tnfr").joinpath("data/fourrooms.json").read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    codes = doc.get("codes", CODES)
    remap = {codes[k]: CODES[k] for k in CODES}
    return np.vectorize(remap.__getitem__)(np.asarray(doc["grid"], dtype=int))


class FourRoomsEnv:
    def __init__(self, grid=None, gamma: float = 0.99, episode_cap: int = 500):
        grid = layout_from_rows(LAYOUT_ROWS) if grid is None else np.asarray(grid, dtype=int)
        self.grid = grid
        self.gamma = gamma
        self.episode_cap = episode_cap
        self.cells = [tuple(int(v) for v in rc) for rc in np.argwhere(grid != CODES["wall"])]
        self.index = {rc: k for k, rc in enumerate(self.cells)}
        (start,) = [self.index[tuple(rc)] for rc in np.argwhere(grid == CODES["start"])]
        (goal,) = [self.index[tuple(rc)] for rc in np.argwhere(grid == CODES["goal"])]
        if start == goal:
            raise ValueError("start and goal coincide")
        self.start, self.goal = start, goal
        self.n_states = len(self.cells)
        self.n_actions = 4
        self._next = np.array([[self._move(s, a) for a in range(4)] for s in range(self.n_states)])
        unreachable = set(range(self.n_states)) - set(self.bfs_distances(self.start))
        if unreachable:
            raise ValueError(f"cells unreachable from start: {sorted(self.cells[s] for s in unreachable)}")
        self.mdp = self._build_mdp()

    def _move(self, s: int, a: int) -> int:
        r, c = self.cells[s]
        dr, dc = MOVES[a]
        return self.index.get((r + dr, c + dc), s)

    def _build_mdp(self) -> Mdp:
        S = self.n_states
        P = np.zeros((S, 4, S))
        R = np.zeros((S, 4))
        for s in range(S):
            for a in range(4):
                if s == self.goal:
                    P[s, a, s] = 1.0  # absorbing, zero reward
                    continue
                nxt = self._next[s, a]
                P[s, a, nxt] = 1.0
                R[s, a] = 1.0 if nxt == self.goal else 0.0
        mu = np.zeros(S)
        mu[self.start] = 1.0
        return Mdp(P, R, self.gamma, mu)

    def encode(self, s: int) -> np.ndarray:
        x = np.zeros(self.n_states)
        x[s] = 1.0
        return x

    def encodings(self) -> np.ndarray:
        return np.eye(self.n_states)

    def bfs_distances(self, source: int) -> dict:
        dist = {source: 0}
        queue = deque([source])
        while queue:
            s = queue.popleft()
            for nxt in self._next[s]:
                nxt = int(nxt)
                if nxt not in dist:
                    dist[nxt] = dist[s] + 1
                    queue.append(nxt)
        return dist

    def rooms(self) -> int:
        """Connected floor components once the gap cells are walled off."""
        gaps = {s for s in range(self.n_states) if self._is_gap(s)}
        seen, count = set(), 0
        for s0 in range(self.n_states):
            if s0 in gaps or s0 in seen:
                continue
            count += 1
            stack = [s0]
            seen.add(s0)
            while stack:
                s = stack.pop()
                for nxt in self._next[s]:
                    nxt = int(nxt)
                    if nxt not in gaps and nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
        return count

    def gap_cells(self) -> list:
        return [self.cells[s] for s in range(self.n_states) if self._is_gap(s)]

    def _is_gap(self, s: int) -> bool:
        r, c = self.cells[s]
        g = self.grid
        horiz = g[r, c - 1] == CODES["wall"] and g[r, c + 1] == CODES["wall"]
        vert = g[r - 1, c] == CODES["wall"] and g[r + 1, c] == CODES["wall"]
        return bool(horiz or vert)


def env_step(env: FourRoomsEnv, s: int, a: int) -> tuple[int, float, bool]:
    if not 0 <= s < env.n_states:
        raise ValueError(f"invalid cell index {s}")
    if a not in MOVES:
        raise ValueError(f"invalid action {a}")
    nxt = int(env._next[s, a])
    if nxt == env.goal and s != env.goal:
        return nxt, 1.0, True
    return nxt, 0.0, nxt == env.goal


def greedy_actions(qtable: np.ndarray) -> np.ndarray:
    return np.argmax(qtable, axis=1)  # lowest index on ties


class EpsilonGreedy:
    """epsilon-greedy over a Q approximator (or a fixed Q table)."""

    def __init__(self, q, epsilon: float, seed: int = 0):
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        self.q = q
        self.epsilon = epsilon
        self.rng = np.random.default_rng(seed)

    def greedy(self, x) -> int:
        if isinstance(self.q, np.ndarray):
            return int(np.argmax(self.q[int(np.argmax(x))]))
        return int(np.argmax(ql.q_forward(self.q, x)))

    def __call__(self, x) -> int:
        if self.rng.random() < self.epsilon:
            return int(self.rng.integers(0, 4))
        return self.greedy(x)


def behavior_policy(q, epsilon: float, seed: int = 0) -> EpsilonGreedy:
    return EpsilonGreedy(q, epsilon, seed)


def q_table(env: FourRoomsEnv, q: ql.QApproximator) -> np.ndarray:
    return q.forward(env.encodings())


def true_q_of_greedy(env: FourRoomsEnv, q) -> np.ndarray:
    """Exact Q^pi for pi greedy with respect to ``q`` (approximator or table)."""
    table = q if isinstance(q, np.ndarray) else q_table(env, q)
    return evaluate_policy_exact(env.mdp, Policy.greedy(table))


@dataclass
class EpisodeResult:
    ret: float
    length: int
    reached_goal: bool


@dataclass
class EvalReport:
    max_q_error: float
    soft_divergent: bool
    avg_regret: float
    episodes: list = field(default_factory=list, repr=False)


def optimal_start_value(env: FourRoomsEnv) -> float:
    qstar, _ = value_iteration_exact(env.mdp, tol=1e-13)
    return float(np.max(qstar[env.start]))


def rollout(env: FourRoomsEnv, table: np.ndarray, epsilon: float, rng: np.random.Generator) -> EpisodeResult:
    greedy = greedy_actions(table)
    s, ret, disc = env.start, 0.0, 1.0
    for t in range(env.episode_cap):
        a = int(rng.integers(0, 4)) if rng.random() < epsilon else int(greedy[s])
        s, r, term = env_step(env, s, a)
        ret += disc * r
        disc *= env.gamma
        if term:
            return EpisodeResult(ret, t + 1, True)
    return EpisodeResult(ret, env.episode_cap, False)


def max_q_error(env: FourRoomsEnv, table: np.ndarray) -> float:
    """max over non-goal (s, a) of (Q(s,a) - Q^pi(s,a))^2, pi greedy in Q.

    The goal row is excluded: the goal is terminal, so no update ever
    reaches Q(goal, .).
    """
    qpi = true_q_of_greedy(env, table)
    keep = np.arange(env.n_states) != env.goal
    return float(np.max((table[keep] - qpi[keep]) ** 2))


def evaluate(
    env: FourRoomsEnv,
    q,
    n_episodes: int = 100,
    epsilon_eval: float = 0.1,
    seed: int = 0,
    v_star: float | None = None,
) -> EvalReport:
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    table = q if isinstance(q, np.ndarray) else q_table(env, q)
    v_star = optimal_start_value(env) if v_star is None else v_star
    rng = np.random.default_rng(seed)
    episodes = [rollout(env, table, epsilon_eval, rng) for _ in range(n_episodes)]
    regret = float(np.mean([v_star - e.ret for e in episodes]))
    err = max_q_error(env, table)
    return EvalReport(err, err > 1.0, regret, episodes)


@dataclass(frozen=True)
class ExperimentConfig:
    agent: str = "fr"  # tn | fr
    epsilon: float = 0.5
    kappa: float = 0.5
    period: int = 250
    seed: int = 0
    total_steps: int = 30_000
    eval_every: int = 2_000
    n_eval_episodes: int = 100
    epsilon_eval: float = 0.1
    episode_cap: int = 500
    gamma: float = 0.99
    approximator: str = "mlp1"
    hidden: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"
    batch_size: int = 32
    buffer_capacity: int = 50_000
    learning_starts: int = 500

    def __post_init__(self):
        if self.agent not in ("tn", "fr"):
            raise ValueError(f"agent must be tn or fr, got {self.agent!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if self.eval_every < 1 or self.total_steps < 1:
            raise ValueError("total_steps and eval_every must be >= 1")

    def train_config(self) -> ql.TrainConfig:
        return ql.TrainConfig(
            loss=self.agent.upper(),
            kappa=self.kappa if self.agent == "fr" else 0.0,
            target_period=self.period,
            lr=self.lr,
            batch_size=self.batch_size,
            total_steps=self.total_steps,
            gamma=self.gamma,
            seed=self.seed,
            optimizer=self.optimizer,
        )


@dataclass
class EvalRow:
    eval_step: int
    avg_regret: float
    max_q_error: float
    soft_divergent: bool


def run_experiment(cfg: ExperimentConfig, env: FourRoomsEnv | None = None) -> list[EvalRow]:
    """Collect epsilon-greedy data, train, evaluate every ``eval_every`` steps.

    Exploration, replay sampling, initialisation and evaluation each draw
    from their own seeded stream, so evaluation never perturbs training.
    """
    env = FourRoomsEnv(gamma=cfg.gamma, episode_cap=cfg.episode_cap) if env is None else env
    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    init_seed, buf_seed, act_seed, eval_seed = (int(s.generate_state(1)[0]) for s in seeds)
    tcfg = cfg.train_config()
    q = ql.QApproximator(cfg.approximator, env.n_states, 4, hidden=cfg.hidden, seed=init_seed)
    buf = ql.ReplayBuffer(cfg.buffer_capacity, env.n_states, seed=buf_seed)
    opt = ql.make_optimizer(tcfg)
    act = behavior_policy(q, cfg.epsilon, act_seed)
    eval_rng = np.random.default_rng(eval_seed)
    v_star = optimal_start_value(env)
    eye = env.encodings()

    rows = []
    s, t_ep, updates = env.start, 0, 0
    for step in range(1, cfg.total_steps + 1):
        a = act(eye[s])
        nxt, r, term = env_step(env, s, a)
        buf.add(ql.Transition(eye[s], a, r, eye[nxt], term))
        t_ep += 1
        s = nxt
        if term or t_ep >= env.episode_cap:
            s, t_ep = env.start, 0
        if len(buf) >= max(cfg.learning_starts, cfg.batch_size):
            updates += 1
            ql.train_step(q, buf, tcfg, updates, opt)
        if step % cfg.eval_every == 0:
            rep = evaluate(env, q, cfg.n_eval_episodes, cfg.epsilon_eval, int(eval_rng.integers(2**31)), v_star)
            rows.append(EvalRow(step, rep.avg_regret, rep.max_q_error, rep.soft_divergent))
    return rows


RESULT_FIELDS = (
    "agent", "epsilon", "kappa", "period", "seed", "eval_step", "avg_regret", "max_q_error", "soft_divergent",
)


def results_csv(records) -> str:
    """``records`` is an iterable of (ExperimentConfig, list[EvalRow])."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for cfg, rows in records:
        kappa = repr(float(cfg.kappa)) if cfg.agent == "fr" else ""
        for row in rows:
            w.writerow([
                cfg.agent, repr(float(cfg.epsilon)), kappa, cfg.period, cfg.seed, row.eval_step,
                repr(float(row.avg_regret)), repr(float(row.max_q_error)), int(row.soft_divergent),
            ])
    return buf.getvalue()


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)


def _run_one(cfg: ExperimentConfig) -> list[EvalRow]:
    return run_experiment(cfg)


def run_grid(configs, workers: int = 1) -> list[tuple[ExperimentConfig, list[EvalRow]]]:
    """Run independent experiments, in parallel when ``workers > 1``; the
    result order always follows ``configs``."""
    configs = list(configs)
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(configs))) as pool:
            results = list(pool.map(_run_one, configs))
    else:
        results = [_run_one(c) for c in configs]
    return list(zip(configs, results))


# -- summary figure -----------------------------------------------------------

def _label(cfg: ExperimentConfig) -> str:
    return f"FR k={cfg.kappa:g} T={cfg.period}" if cfg.agent == "fr" else f"TN T={cfg.period}"


def summarize(records) -> dict:
    """Final-evaluation statistics per agent setting.

    ``regret``: mean final avg_regret per epsilon.  ``error_box``: quartiles
    of final max_q_error pooled over epsilons and seeds.
    """
    groups: dict[str, dict] = {}
    for cfg, rows in records:
        if not rows:
            continue
        g = groups.setdefault(_label(cfg), {"regret": {}, "errors": []})
        g["regret"].setdefault(cfg.epsilon, []).append(rows[-1].avg_regret)
        g["errors"].append(rows[-1].max_q_error)
    out = {}
    for label, g in groups.items():
        errs = np.asarray(g["errors"])
        q = np.quantile(errs, [0.0, 0.25, 0.5, 0.75, 1.0])
        out[label] = {
            "regret": {repr(float(e)): float(np.mean(v)) for e, v in sorted(g["regret"].items())},
            "error_box": dict(zip(("min", "q1", "median", "q3", "max"), (float(x) for x in q))),
            "soft_divergent_fraction": float(np.mean(errs > 1.0)),
        }
    return out


_PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")


def summary_svg(records) -> str:
    """Two panels: final regret against epsilon, and box plots of the final
    squared Q error on a log scale with the soft-divergence line at 1."""
    stats = summarize(records)
    labels = list(stats)
    W, H, pad = 860, 380, 50
    pw = (W - 3 * pad) / 2
    ph = H - 2 * pad - 40
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
    ]

    # left: regret vs epsilon
    x0, y0 = pad, pad
    out.append(f'<rect x="{x0}" y="{y0}" width="{pw:.1f}" height="{ph:.1f}" fill="none" stroke="black"/>')
    out.append(f'<text x="{x0 + pw / 2:.1f}" y="{y0 - 12}" text-anchor="middle">final regret vs epsilon</text>')
    for t in (0.0, 0.5, 1.0):
        out.append(f'<text x="{x0 + t * pw:.1f}" y="{y0 + ph + 14:.1f}" text-anchor="middle">{t:g}</text>')
        out.append(f'<text x="{x0 - 6}" y="{y0 + (1 - t) * ph + 4:.1f}" text-anchor="end">{t:g}</text>')
    for k, label in enumerate(labels):
        col = _PALETTE[k % len(_PALETTE)]
        pts = [(float(e), min(max(r, 0.0), 1.0)) for e, r in stats[label]["regret"].items()]
        xy = [(x0 + e * pw, y0 + (1 - r) * ph) for e, r in pts]
        if len(xy) > 1:
            path = " ".join(f"{x:.2f},{y:.2f}" for x, y in xy)
            out.append(f'<polyline points="{path}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        for x, y in xy:
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{col}"/>')

    # right: error boxes, log10 scale from 1e-4 to 1e4
    x1 = 2 * pad + pw
    lo, hi = -4.0, 4.0

    def ypos(v: float) -> float:
        lv = np.clip(np.log10(max(v, 1e-300)), lo, hi)
        return y0 + (hi - lv) / (hi - lo) * ph

    out.append(f'<rect x="{x1:.1f}" y="{y0}" width="{pw:.1f}" height="{ph:.1f}" fill="none" stroke="black"/>')
    out.append(f'<text x="{x1 + pw / 2:.1f}" y="{y0 - 12}" text-anchor="middle">final max squared Q error</text>')
    for e in (-4, -2, 0, 2, 4):
        out.append(f'<text x="{x1 - 6:.1f}" y="{ypos(10.0**e) + 4:.1f}" text-anchor="end">1e{e}</text>')
    out.append(
        f'<line id="soft-divergence" x1="{x1:.1f}" x2="{x1 + pw:.1f}" y1="{ypos(1.0):.2f}" y2="{ypos(1.0):.2f}" '
        f'stroke="red" stroke-dasharray="4,3"/>'
    )
    slot = pw / max(len(labels), 1)
    for k, label in enumerate(labels):
        b, col = stats[label]["error_box"], _PALETTE[k % len(_PALETTE)]
        cx = x1 + (k + 0.5) * slot
        half = min(14.0, slot / 3)
        out.append(f'<line x1="{cx:.2f}" x2="{cx:.2f}" y1="{ypos(b["min"]):.2f}" y2="{ypos(b["max"]):.2f}" stroke="{col}"/>')
        top, bot = ypos(b["q3"]), ypos(b["q1"])
        out.append(
            f'<rect x="{cx - half:.2f}" y="{top:.2f}" width="{2 * half:.2f}" height="{max(bot - top, 0.5):.2f}" '
            f'fill="white" stroke="{col}"/>'
        )
        out.append(f'<line x1="{cx - half:.2f}" x2="{cx + half:.2f}" y1="{ypos(b["median"]):.2f}" y2="{ypos(b["median"]):.2f}" stroke="{col}" stroke-width="2"/>')

    # legend
    for k, label in enumerate(labels):
        col = _PALETTE[k % len(_PALETTE)]
        lx, ly = pad + (k % 4) * 200, H - 30 + (k // 4) * 14
        out.append(f'<rect x="{lx}" y="{ly - 8}" width="10" height="10" fill="{col}"/>')
        out.append(f'<text x="{lx + 14}" y="{ly + 1}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
