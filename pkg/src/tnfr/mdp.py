"""Finite MDPs, policies, and exact (closed-form) evaluation.

Everything lives in state-action space: a Q-vector has ``n_states * n_actions``
entries ordered ``s * n_actions + a``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STOCHASTIC_TOL = 1e-12


class NotIrreducibleError(ArithmeticError):
    """Power iteration for a stationary distribution failed to converge."""


def _check_stochastic(arr: np.ndarray, what: str) -> None:
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite and non-negative")
    sums = arr.sum(axis=-1)
    bad = np.abs(sums - 1.0) > STOCHASTIC_TOL
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"{what} row {idx} sums to {sums[idx]!r}, not 1")


@dataclass(frozen=True)
class Mdp:
    """``transition[s, a, s']``, ``reward[s, a]``, discount and start distribution."""

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    initial: np.ndarray = field(default=None)  # uniform when omitted

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        R = np.array(self.reward, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        if R.shape != P.shape[:2]:
            raise ValueError(f"reward shape {R.shape} does not match (S, A) = {P.shape[:2]}")
        if not np.all(np.isfinite(R)):
            raise ValueError("reward must be finite")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        _check_stochastic(P, "transition")
        mu = np.full(P.shape[0], 1.0 / P.shape[0]) if self.initial is None else np.array(self.initial, dtype=float)
        if mu.shape != (P.shape[0],):
            raise ValueError(f"initial distribution must have length {P.shape[0]}")
        _check_stochastic(mu, "initial distribution")
        for name, arr in (("transition", P), ("reward", R), ("initial", mu)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions

    def reward_vector(self) -> np.ndarray:
        return self.reward.reshape(-1)

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "states": self.n_states,
            "actions": self.n_actions,
            "transition": self.transition.reshape(-1).tolist(),
            "reward": self.reward.tolist(),
            "gamma": self.gamma,
            "initial": self.initial.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Mdp":
        try:
            S, A = int(doc["states"]), int(doc["actions"])
            P = np.asarray(doc["transition"], dtype=float).reshape(S, A, S)
            return cls(P, np.asarray(doc["reward"], dtype=float).reshape(S, A), float(doc["gamma"]), doc.get("initial"))
        except KeyError as exc:
            raise ValueError(f"MDP document is missing key {exc.args[0]!r}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Mdp":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Policy:
    probs: np.ndarray  # (S, A)

    def __post_init__(self):
        pi = np.array(self.probs, dtype=float)
        if pi.ndim != 2:
            raise ValueError("policy table must be 2-D (S, A)")
        _check_stochastic(pi, "policy")
        pi.setflags(write=False)
        object.__setattr__(self, "probs", pi)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "Policy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        return cls(np.eye(n_actions)[actions])

    @classmethod
    def greedy(cls, q) -> "Policy":
        """Argmax policy; ``np.argmax`` already breaks ties to the lowest index."""
        q = np.asarray(q, dtype=float)
        return cls.deterministic(np.argmax(q, axis=1), q.shape[1])

    def smoothed(self, epsilon: float) -> "Policy":
        n_actions = self.probs.shape[1]
        return Policy((1.0 - epsilon) * self.probs + epsilon / n_actions)


def policy_transition(mdp: Mdp, pi: Policy) -> np.ndarray:
    """State-action transition matrix: entry ((s,a),(s',a')) = P[s,a,s'] pi[s',a']."""
    if pi.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy shape {pi.probs.shape} does not match MDP {(mdp.n_states, mdp.n_actions)}")
    S, A = mdp.n_states, mdp.n_actions
    return np.einsum("sat,tb->satb", mdp.transition, pi.probs).reshape(S * A, S * A)


def stationary_distribution(p, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Left fixed point of a row-stochastic matrix by power iteration."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("transition matrix must be square")
    _check_stochastic(p, "transition matrix")
    d = np.full(p.shape[0], 1.0 / p.shape[0])
    for _ in range(max_iter):
        nxt = d @ p
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - d)) < tol:
            return nxt
        d = nxt
    raise NotIrreducibleError("power iteration did not converge: chain is not irreducible or periodic")


def evaluate_policy_exact(mdp: Mdp, pi: Policy) -> np.ndarray:
    """Q^pi = (I - gamma P^pi)^-1 R, returned as an (S, A) table."""
    P = policy_transition(mdp, pi)
    q = np.linalg.solve(np.eye(mdp.n_pairs) - mdp.gamma * P, mdp.reward_vector())
    return q.reshape(mdp.n_states, mdp.n_actions)


def bellman_residual(mdp: Mdp, pi: Policy, q) -> float:
    q = np.asarray(q, dtype=float).reshape(-1)
    P = policy_transition(mdp, pi)
    return float(np.max(np.abs(mdp.reward_vector() + mdp.gamma * P @ q - q)))


def bellman_optimality(mdp: Mdp, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return mdp.reward + mdp.gamma * mdp.transition @ q.max(axis=1)


def value_iteration_exact(mdp: Mdp, tol: float = 1e-12, max_iter: int = 1_000_000) -> tuple[np.ndarray, Policy]:
    """Q* to sup-norm Bellman residual below ``tol`` and its greedy policy."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_iter):
        nxt = bellman_optimality(mdp, q)
        if np.max(np.abs(nxt - q)) < tol:
            q = nxt
            break
        q = nxt
    return q, Policy.greedy(q)
