"""Sample-based Q-learning with a lagging parameter copy.

Two losses over a batch of transitions:

* TN: 1/2 (r + gamma max Q_bar(s') - Q(s,a))^2, target from the lagging copy.
* FR: 1/2 (r + gamma max Q(s') - Q(s,a))^2 + kappa/2 (Q(s,a) - Q_bar(s,a))^2,
  with the bootstrap value held constant (semi-gradient).

Approximators keep their parameters as one flat vector so that the lagging
copy, Polyak averaging and the optimizers all act on plain arrays.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linear_fa import polyak_update

KINDS = ("tabular", "linear", "mlp1")


class QApproximator:
    """Q_theta(s, .) for one of three architectures, plus theta_bar.

    States are encoded as float vectors of length ``n_in`` (one-hot for the
    tabular kind, which reads the hot index).
    """

    def __init__(self, kind: str, n_in: int, n_actions: int, hidden: int = 64, seed: int = 0, init: str = "zeros"):
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
        self.kind = kind
        self.n_in = n_in
        self.n_actions = n_actions
        self.hidden = hidden
        if kind == "mlp1":
            self.shapes = [(hidden, n_in), (hidden,), (n_actions, hidden), (n_actions,)]
        elif kind == "linear":
            self.shapes = [(n_actions, n_in)]
        else:
            self.shapes = [(n_in, n_actions)]
        self.sizes = [int(np.prod(s)) for s in self.shapes]
        self.theta = self._init(np.random.default_rng(seed), init)
        self.theta_bar = self.theta.copy()
        self.target_syncs = 0

    def _init(self, rng, init: str) -> np.ndarray:
        if self.kind != "mlp1":
            if init == "zeros":
                return np.zeros(sum(self.sizes))
            return rng.uniform(-1, 1, size=sum(self.sizes))
        # fan-in scaled uniform
        w1 = rng.uniform(-1, 1, size=self.shapes[0]) / math.sqrt(self.n_in)
        b1 = rng.uniform(-1, 1, size=self.shapes[1]) / math.sqrt(self.n_in)
        w2 = rng.uniform(-1, 1, size=self.shapes[2]) / math.sqrt(self.hidden)
        b2 = rng.uniform(-1, 1, size=self.shapes[3]) / math.sqrt(self.hidden)
        return np.concatenate([w1.ravel(), b1, w2.ravel(), b2])

    def unpack(self, theta: np.ndarray) -> list[np.ndarray]:
        out, k = [], 0
        for shape, size in zip(self.shapes, self.sizes):
            out.append(theta[k : k + size].reshape(shape))
            k += size
        return out

    def copy(self) -> "QApproximator":
        other = object.__new__(QApproximator)
        other.__dict__.update(self.__dict__)
        other.theta = self.theta.copy()
        other.theta_bar = self.theta_bar.copy()
        return other

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected input dimension {self.n_in}, got {x.shape[-1]}")
        return x

    def forward(self, x, theta: np.ndarray | None = None) -> np.ndarray:
        """Q-values for a batch ``x`` of shape (B, n_in) -> (B, n_actions)."""
        x = self._check(x)
        theta = self.theta if theta is None else theta
        if self.kind == "tabular":
            (table,) = self.unpack(theta)
            return table[np.argmax(x, axis=-1)]
        if self.kind == "linear":
            (w,) = self.unpack(theta)
            return x @ w.T
        w1, b1, w2, b2 = self.unpack(theta)
        h = np.maximum(x @ w1.T + b1, 0.0)
        return h @ w2.T + b2

    def backward(self, x, actions, dq, theta: np.ndarray | None = None) -> np.ndarray:
        """Gradient w.r.t. theta of sum_i dq[i] * Q_theta(x_i, actions_i)."""
        x = self._check(x)
        theta = self.theta if theta is None else theta
        actions = np.asarray(actions, dtype=int)
        dq = np.asarray(dq, dtype=float)
        rows = np.arange(len(actions))
        if self.kind == "tabular":
            g = np.zeros((self.n_in, self.n_actions))
            np.add.at(g, (np.argmax(x, axis=-1), actions), dq)
            return g.ravel()
        if self.kind == "linear":
            g = np.zeros((self.n_actions, self.n_in))
            np.add.at(g, actions, dq[:, None] * x)
            return g.ravel()
        w1, b1, w2, b2 = self.unpack(theta)
        pre = x @ w1.T + b1
        h = np.maximum(pre, 0.0)
        dout = np.zeros((len(actions), self.n_actions))
        dout[rows, actions] = dq
        gw2 = dout.T @ h
        gb2 = dout.sum(axis=0)
        dh = (dout @ w2) * (pre > 0)
        gw1 = dh.T @ x
        gb1 = dh.sum(axis=0)
        return np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])


def q_forward(q: QApproximator, s) -> np.ndarray:
    """Q_theta(s, .) for a single state encoding."""
    return q.forward(np.asarray(s, dtype=float)[None, :])[0]


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool


@dataclass
class Transitions:
    """A batch of transitions as parallel arrays."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray

    def __len__(self) -> int:
        return len(self.a)

    @classmethod
    def stack(cls, items) -> "Transitions":
        items = list(items)
        return cls(
            np.array([t.s for t in items], dtype=float),
            np.array([t.a for t in items], dtype=int),
            np.array([t.r for t in items], dtype=float),
            np.array([t.s_next for t in items], dtype=float),
            np.array([t.terminal for t in items], dtype=bool),
        )


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, obs_dim: int, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.s = np.zeros((capacity, obs_dim))
        self.s_next = np.zeros((capacity, obs_dim))
        self.a = np.zeros(capacity, dtype=int)
        self.r = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._next = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self.size

    def add(self, t: Transition) -> None:
        k = self._next
        self.s[k], self.a[k], self.r[k], self.s_next[k], self.terminal[k] = t.s, t.a, t.r, t.s_next, t.terminal
        self._next = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int) -> Transitions:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, self.size, size=batch_size)
        return Transitions(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.terminal[idx])


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "TN"
    kappa: float = 0.0
    target_period: int | None = 100
    polyak_tau: float | None = None
    lr: float = 0.1
    batch_size: int = 32
    total_steps: int = 10_000
    gamma: float = 0.99
    seed: int = 0
    optimizer: str = "sgd"
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.loss not in ("TN", "FR"):
            raise ValueError(f"loss must be TN or FR, got {self.loss!r}")
        if not self.kappa >= 0:
            raise ValueError("kappa must be non-negative")
        if (self.target_period is None) == (self.polyak_tau is None):
            raise ValueError("exactly one of target_period / polyak_tau must be set")
        if self.target_period is not None and self.target_period < 1:
            raise ValueError("target_period must be >= 1")
        if self.polyak_tau is not None and not 0 < self.polyak_tau < 1:
            raise ValueError("polyak_tau must be in (0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")


def td_target(q: QApproximator, t: Transition, gamma: float, use_lagging: bool) -> float:
    if t.terminal:
        return float(t.r)
    theta = q.theta_bar if use_lagging else q.theta
    return float(t.r + gamma * np.max(q.forward(np.asarray(t.s_next, dtype=float)[None, :], theta)[0]))


def td_targets(q: QApproximator, batch: Transitions, gamma: float, use_lagging: bool) -> np.ndarray:
    theta = q.theta_bar if use_lagging else q.theta
    boot = np.max(q.forward(batch.s_next, theta), axis=1)
    return batch.r + np.where(batch.terminal, 0.0, gamma * boot)


def loss_and_grad(q: QApproximator, batch: Transitions, cfg: TrainConfig) -> tuple[float, np.ndarray]:
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    rows = np.arange(n)
    q_sa = q.forward(batch.s)[rows, batch.a]
    y = td_targets(q, batch, cfg.gamma, use_lagging=cfg.loss == "TN")
    err = y - q_sa
    loss = 0.5 * np.mean(err**2)
    dq = -err
    if cfg.loss == "FR" and cfg.kappa > 0:
        qbar_sa = q.forward(batch.s, q.theta_bar)[rows, batch.a]
        diff = q_sa - qbar_sa
        loss += 0.5 * cfg.kappa * np.mean(diff**2)
        dq = dq + cfg.kappa * diff
    return float(loss), q.backward(batch.s, batch.a, dq / n)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return theta - self.lr * grad


class Adam:
    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
            self._buf = np.empty_like(theta)
        self.t += 1
        m, v, buf = self.m, self.v, self._buf
        m *= self.b1
        m += (1 - self.b1) * grad
        np.multiply(grad, grad, out=buf)
        buf *= 1 - self.b2
        v *= self.b2
        v += buf
        # theta - lr * mhat / (sqrt(vhat) + eps), in place
        np.divide(v, 1 - self.b2**self.t, out=buf)
        np.sqrt(buf, out=buf)
        buf += self.eps
        np.divide(m, buf, out=buf)
        buf *= self.lr / (1 - self.b1**self.t)
        return theta - buf


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(cfg.lr, cfg.adam_betas, cfg.adam_eps)
    return SGD(cfg.lr)


def update_on_batch(q: QApproximator, batch: Transitions, cfg: TrainConfig, step_index: int, opt) -> dict:
    """One optimizer step on ``batch`` followed by the lagging-copy update."""
    loss, grad = loss_and_grad(q, batch, cfg)
    q.theta = opt.step(q.theta, grad)
    if cfg.polyak_tau is not None:
        q.theta_bar = polyak_update(q.theta, q.theta_bar, cfg.polyak_tau)
    elif step_index % cfg.target_period == 0:
        q.theta_bar = q.theta.copy()
        q.target_syncs += 1
    return {
        "step": step_index,
        "loss": loss,
        "max_abs_q": float(np.max(np.abs(q.forward(batch.s)))),
        "target_sync_count": q.target_syncs,
    }


def train_step(q: QApproximator, buf: ReplayBuffer, cfg: TrainConfig, step_index: int, opt=None):
    """Sample a batch from ``buf`` and update ``q`` in place.

    Pass the same ``opt`` across calls; a fresh SGD is created otherwise.
    """
    if len(buf) < cfg.batch_size:
        raise ValueError(f"buffer holds {len(buf)} transitions, batch needs {cfg.batch_size}")
    opt = make_optimizer(cfg) if opt is None else opt
    metrics = update_on_batch(q, buf.sample(cfg.batch_size), cfg, step_index, opt)
    return q, metrics


METRIC_FIELDS = ("step", "loss", "max_abs_q", "target_sync_count")


def write_metrics_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for row in rows:
            w.writerow([row["step"], repr(float(row["loss"])), repr(float(row["max_abs_q"])), row["target_sync_count"]])
