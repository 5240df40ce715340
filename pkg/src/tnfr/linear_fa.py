"""Linear function approximation: TD(0), target-network and functionally
regularized value iteration as exact linear dynamical systems.

Notation used throughout::

    G   = Phi^T D Phi            (Gram matrix, assumed non-singular)
    H   = Phi^T D P Phi
    c   = Phi^T D R
    A_k = (1 + k) G - gamma H    (A_0 is the TD system matrix)
    U   = G^-1 H                 (projected transition in weight space)

All weight-space matrices are p x p with p small, so they go through
:mod:`tnfr.smallmat`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import smallmat as sm
from ._backend import kernels
from .mdp import Mdp, Policy, policy_transition, stationary_distribution

TD0, TN, FR = "TD0", "TN", "FR"
ALGORITHMS = (TD0, TN, FR)

CONVERGES, DIVERGES, MARGINAL = "converges", "diverges", "marginal"
KINDS = ("td_step", "tn_composed", "fr_composed", "tn_limit", "fr_limit")

# largest condition number of Phi^T D Phi accepted at construction
MAX_GRAM_CONDITION = 1e12


class NoFixedPointError(ArithmeticError):
    pass


class BoundInapplicableError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LinearFaProblem:
    """Feature matrix, off-policy distribution and the policy-induced dynamics.

    ``transition`` is the state-action matrix P^pi and ``reward`` the
    state-action reward vector.  Use :meth:`from_mdp` for the usual route.
    ``check=False`` skips the stochasticity and Gram-invertibility checks;
    it exists for empirical (batch) problems where some pairs are unvisited.
    """

    phi: np.ndarray
    dist: np.ndarray
    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim == 1:
            phi = phi[:, None]
        n = phi.shape[0]
        d = np.array(self.dist, dtype=float).reshape(-1)
        P = np.array(self.transition, dtype=float)
        R = np.array(self.reward, dtype=float).reshape(-1)
        if d.shape != (n,) or P.shape != (n, n) or R.shape != (n,):
            raise ValueError(
                f"shape mismatch: phi {phi.shape}, dist {d.shape}, transition {P.shape}, reward {R.shape}"
            )
        if self.check:
            if np.any(d < 0) or abs(d.sum() - 1.0) > 1e-12:
                raise ValueError("dist must be non-negative and sum to 1")
            if not 0.0 <= self.gamma < 1.0:
                raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        for name, arr in (("phi", phi), ("dist", d), ("transition", P), ("reward", R)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gamma", float(self.gamma))
        if self.check:
            cond = np.linalg.cond(self.G)
            if not cond < MAX_GRAM_CONDITION:
                raise sm.SingularMatrixError(
                    f"Phi^T D Phi is singular or ill-conditioned (condition {cond:.3e})",
                    pivot=float(np.min(np.abs(np.linalg.eigvalsh(self.G)))),
                    condition=cond,
                )

    @classmethod
    def from_mdp(cls, mdp: Mdp, policy: Policy, phi, dist) -> "LinearFaProblem":
        return cls(phi, dist, policy_transition(mdp, policy), mdp.reward_vector(), mdp.gamma)

    @property
    def p(self) -> int:
        return self.phi.shape[1]

    @cached_property
    def G(self) -> np.ndarray:
        return self.phi.T @ (self.dist[:, None] * self.phi)

    @cached_property
    def H(self) -> np.ndarray:
        return self.phi.T @ (self.dist[:, None] * (self.transition @ self.phi))

    @cached_property
    def c(self) -> np.ndarray:
        return self.phi.T @ (self.dist * self.reward)

    @cached_property
    def G_inv(self) -> np.ndarray:
        return _inverse(self.G, "Phi^T D Phi")

    @cached_property
    def upsilon(self) -> np.ndarray:
        return sm.mat_mul(self.G_inv, self.H)

    def a_kappa(self, kappa: float) -> np.ndarray:
        return (1.0 + kappa) * self.G - self.gamma * self.H

    def projected_transition(self) -> np.ndarray:
        """Pi_Phi P in state-action space (D-weighted projection)."""
        proj = self.phi @ self.G_inv @ self.phi.T * self.dist[None, :]
        return proj @ self.transition


def _inverse(a, name: str) -> np.ndarray:
    try:
        return sm.mat_inverse(a)
    except sm.SingularMatrixError as exc:
        raise sm.SingularMatrixError(f"{name}: {exc}", exc.pivot, exc.condition) from None


@dataclass(frozen=True)
class IterationSpec:
    algorithm: str
    eta: float
    period: int = 1
    kappa: float = 0.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if int(self.period) != self.period or self.period < 1:
            raise ValueError(f"period must be an integer >= 1, got {self.period}")
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")
        object.__setattr__(self, "period", int(self.period))


@dataclass(frozen=True)
class SpectralReport:
    kind: str
    spectrum: sm.Spectrum
    classification: str

    @property
    def radius(self) -> float:
        return self.spectrum.radius

    def to_dict(self) -> dict:
        # JSON has no inf/nan: non-finite numbers are written as null
        def num(x):
            return float(x) if math.isfinite(x) else None

        return {
            "kind": self.kind,
            "eigenvalues": [[num(re), num(im)] for re, im in self.spectrum.pairs()],
            "radius": num(self.radius),
            "classification": self.classification,
        }


# -- semi-gradients -----------------------------------------------------------

def td_semigradient(p: LinearFaProblem, w) -> np.ndarray:
    """-Phi^T D (R + gamma P Phi w - Phi w)."""
    w = np.asarray(w, dtype=float)
    phi_w = p.phi @ w
    return -p.phi.T @ (p.dist * (p.reward + p.gamma * p.transition @ phi_w - phi_w))


def tn_semigradient(p: LinearFaProblem, w, wbar) -> np.ndarray:
    """-Phi^T D (R + gamma P Phi wbar - Phi w)."""
    w = np.asarray(w, dtype=float)
    wbar = np.asarray(wbar, dtype=float)
    return -p.phi.T @ (p.dist * (p.reward + p.gamma * p.transition @ (p.phi @ wbar) - p.phi @ w))


def fr_semigradient(p: LinearFaProblem, kappa: float, w, wbar) -> np.ndarray:
    """TD semi-gradient plus kappa G (w - wbar)."""
    w = np.asarray(w, dtype=float)
    return td_semigradient(p, w) + kappa * (p.G @ (w - np.asarray(wbar, dtype=float)))


# -- fixed points -------------------------------------------------------------

def td_fixed_point(p: LinearFaProblem) -> np.ndarray:
    try:
        inv = sm.mat_inverse(p.a_kappa(0.0))
    except sm.SingularMatrixError as exc:
        raise NoFixedPointError(f"no TD fixed point: Phi^T D (I - gamma P) Phi is singular ({exc})") from None
    return inv @ p.c


def tn_inner_fixed_point(p: LinearFaProblem, wbar) -> np.ndarray:
    """w*(wbar) = G^-1 (c + gamma H wbar)."""
    return p.G_inv @ (p.c + p.gamma * p.H @ np.asarray(wbar, dtype=float))


def fr_inner_fixed_point(p: LinearFaProblem, kappa: float, wbar) -> np.ndarray:
    """w_k(wbar) = A_k^-1 (c + kappa G wbar)."""
    inv = _inverse(p.a_kappa(kappa), "A_kappa")
    return inv @ (p.c + kappa * p.G @ np.asarray(wbar, dtype=float))


# -- iteration matrices -------------------------------------------------------

def td_step_matrix(p: LinearFaProblem, eta: float) -> np.ndarray:
    return np.eye(p.p) - eta * p.a_kappa(0.0)


def tn_limit_matrix(p: LinearFaProblem) -> np.ndarray:
    return p.gamma * p.upsilon


def fr_limit_matrix(p: LinearFaProblem, kappa: float) -> np.ndarray:
    if kappa == 0.0:
        return np.zeros((p.p, p.p))
    return kappa * sm.mat_mul(_inverse(p.a_kappa(kappa), "A_kappa"), p.G)


def iteration_matrix(p: LinearFaProblem, spec: IterationSpec) -> np.ndarray:
    """One outer step of error propagation: w_next - w* = M (w - w*).

    May contain non-finite entries when the inner loop blows up; that is a
    divergence signal, not an error.
    """
    eye = np.eye(p.p)
    if spec.algorithm == TD0:
        return td_step_matrix(p, spec.eta)
    if spec.algorithm == TN:
        inner = sm.mat_power(eye - spec.eta * p.G, spec.period)
        limit = tn_limit_matrix(p)
    else:
        inner = sm.mat_power(eye - spec.eta * p.a_kappa(spec.kappa), spec.period)
        limit = fr_limit_matrix(p, spec.kappa)
    with np.errstate(over="ignore", invalid="ignore"):
        return sm.mat_mul(inner, eye - limit) + limit


def classify_radius(radius: float, band: float = sm.POLICY.marginal_band) -> str:
    if radius < 1.0 - band:
        return CONVERGES
    if radius > 1.0 + band:
        return DIVERGES
    return MARGINAL


def report(kind: str, m, band: float = sm.POLICY.marginal_band) -> SpectralReport:
    m = np.asarray(m, dtype=float)
    if sm.is_divergent(m):
        spec = sm.Spectrum(np.full(m.shape[0], complex(np.nan, np.nan)), math.inf)
        return SpectralReport(kind, spec, DIVERGES)
    spec = sm.spectrum(m, name=kind)
    return SpectralReport(kind, spec, classify_radius(spec.radius, band))


def classify(p: LinearFaProblem, spec: IterationSpec, band: float = sm.POLICY.marginal_band) -> SpectralReport:
    kind = {TD0: "td_step", TN: "tn_composed", FR: "fr_composed"}[spec.algorithm]
    return report(kind, iteration_matrix(p, spec), band)


# -- step sizes ---------------------------------------------------------------

def adaptive_eta(p: LinearFaProblem, algorithm: str, kappa: float = 0.0) -> float:
    """Deterministic instance-adaptive step size.

    TN inner loop: 1 / lambda_max(G), so I - eta G has spectrum in [0, 1).
    TD and FR: 1 / max|lambda(A_k)|, shrunk to min Re(lambda)/|lambda|^2
    when the whole spectrum is in the right half plane, and never above the
    TN step.  The shrink makes |1 - eta lambda| < 1 for every eigenvalue, so
    the inner loop contracts whenever it can; the cap keeps eta continuous
    where A_k passes through singularity.
    """
    eta_g = 1.0 / float(np.max(sm.spectrum(p.G, name="Phi^T D Phi").eigenvalues.real))
    if algorithm == TN:
        return eta_g
    a = p.a_kappa(0.0 if algorithm == TD0 else kappa)
    ev = sm.spectrum(a, name="A_kappa").eigenvalues
    mod = np.abs(ev)
    if np.max(mod) == 0.0:
        return eta_g
    eta = min(eta_g, 1.0 / float(np.max(mod)))
    if np.all(ev.real > 0):
        eta = min(eta, float(np.min(ev.real / mod**2)))
    return eta


def adaptive_spec(p: LinearFaProblem, algorithm: str, period: int = 1, kappa: float = 0.0) -> IterationSpec:
    return IterationSpec(algorithm, adaptive_eta(p, algorithm, kappa), period, kappa)


# -- trajectories -------------------------------------------------------------

@dataclass
class Trajectory:
    weights: np.ndarray  # (steps + 1, p), row 0 is w0
    diverged: bool
    diverged_at: int | None = None  # outer step at which the blow-up bound was crossed

    @property
    def final(self) -> np.ndarray:
        return self.weights[-1]

    def to_dict(self) -> dict:
        return {
            "weights": [[float(x) if math.isfinite(x) else None for x in row] for row in self.weights],
            "diverged": self.diverged,
            "diverged_at": self.diverged_at,
        }


def run_iteration(
    p: LinearFaProblem,
    spec: IterationSpec,
    w0,
    outer_steps: int,
    bound: float = sm.POLICY.blowup,
    tol: float | None = None,
) -> Trajectory:
    """Execute the two-timescale loop: freeze wbar, take ``period``
    semi-gradient steps on w, repeat.

    Stops early when ``tol`` is given and an outer step moves w by at most
    ``tol`` in the sup norm.  Divergence (``|w|_inf > bound`` or non-finite)
    ends the run and is reported, never raised.
    """
    if outer_steps < 1:
        raise ValueError("outer_steps must be >= 1")
    w = np.array(w0, dtype=float).reshape(p.p)
    traj = [w.copy()]
    if spec.algorithm == TD0:
        m, inner = np.ascontiguousarray(p.a_kappa(0.0)), 1
    elif spec.algorithm == TN:
        m, inner = np.ascontiguousarray(p.G), spec.period
    else:
        m, inner = np.ascontiguousarray(p.a_kappa(spec.kappa)), spec.period
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(outer_steps):
            wbar = w
            if spec.algorithm == TD0:
                v = p.c
            elif spec.algorithm == TN:
                v = p.c + p.gamma * p.H @ wbar
            else:
                v = p.c + spec.kappa * p.G @ wbar
            w, hit = kernels.affine_iterate(m, np.ascontiguousarray(v, dtype=float), wbar, spec.eta, inner, bound)
            traj.append(w.copy())
            if hit >= 0:
                return Trajectory(np.array(traj), True, k)
            if tol is not None and np.max(np.abs(w - wbar)) <= tol:
                break
    return Trajectory(np.array(traj), False, None)


def contraction_factor(traj: Trajectory, target, window: int | None = None) -> float:
    """Geometric-mean ratio of successive error norms over the trajectory."""
    err = np.linalg.norm(traj.weights - np.asarray(target)[None, :], axis=1)
    if window is not None:
        err = err[: window + 1]
    err = err[err > 0]
    if err.size < 2:
        return 0.0
    return float((err[-1] / err[0]) ** (1.0 / (err.size - 1)))


# -- the K lower bound --------------------------------------------------------

def k_lower_bound(p: LinearFaProblem, eta: float) -> int:
    """Smallest inner period K certifying rho(TN composed matrix) < 1.

    K > log(C / (1 - gamma rho(U))) / log(1 / ||I - eta G||), with
    C = cond(V) ||I - gamma U|| for V the eigenvector matrix of U, all in
    the spectral norm.  Clamped to K >= 1.
    """
    rho_u = sm.spectrum(p.upsilon, name="G^-1 H").radius
    gap = 1.0 - p.gamma * rho_u
    if not gap > 0:
        raise BoundInapplicableError(f"bound inapplicable: gamma * rho(Pi P) = {p.gamma * rho_u:.6g} >= 1")
    contraction = float(np.linalg.norm(np.eye(p.p) - eta * p.G, 2))
    if not contraction < 1:
        raise BoundInapplicableError(f"bound inapplicable: ||I - eta G|| = {contraction:.6g} >= 1")
    _, vecs = np.linalg.eig(p.upsilon)
    C = float(np.linalg.cond(vecs, 2)) * float(np.linalg.norm(np.eye(p.p) - p.gamma * p.upsilon, 2))
    if contraction == 0.0:
        return 1
    bound = math.log(C / gap) / math.log(1.0 / contraction)
    return max(1, math.floor(bound) + 1)


# -- Polyak averaging ---------------------------------------------------------

def polyak_update(theta, theta_bar, tau: float) -> np.ndarray:
    """Minimizer of 1/2 |x - theta|^2 + (1 - tau)/(2 tau) |x - theta_bar|^2,
    i.e. tau * theta + (1 - tau) * theta_bar."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    theta_bar = np.asarray(theta_bar, dtype=float)
    # same value as tau * theta + (1 - tau) * theta_bar, exact when theta == theta_bar
    return theta_bar + tau * (np.asarray(theta, dtype=float) - theta_bar)


def polyak_objective_grad(x, theta, theta_bar, tau: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (x - theta) + (1.0 - tau) / tau * (x - np.asarray(theta_bar, dtype=float))


# -- random instances ---------------------------------------------------------

def random_problem(
    rng: np.random.Generator,
    n_states: int = 3,
    n_actions: int = 2,
    p: int = 2,
    gamma: float = 0.9,
    dist: str = "dirichlet",
    max_cond: float = 1e6,
) -> LinearFaProblem:
    """Seeded random instance.

    Dirichlet(1) rows for P and pi, uniform[-1, 1] rewards and features;
    features are redrawn until cond(Phi^T D Phi) < ``max_cond``.  ``dist``
    is either ``"dirichlet"`` (off-policy) or ``"stationary"`` (on-policy).
    """
    n = n_states * n_actions
    if p > n:
        raise ValueError("more features than state-action pairs")
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    pi = rng.dirichlet(np.ones(n_actions), size=n_states)
    mdp = Mdp(P, rng.uniform(-1, 1, size=(n_states, n_actions)), gamma)
    policy = Policy(pi)
    if dist == "stationary":
        d = stationary_distribution(policy_transition(mdp, policy))
    elif dist == "dirichlet":
        d = rng.dirichlet(np.ones(n))
    else:
        raise ValueError(f"unknown dist {dist!r}")
    for _ in range(1000):
        phi = rng.uniform(-1, 1, size=(n, p))
        G = phi.T @ (d[:, None] * phi)
        if np.linalg.cond(G) < max_cond:
            return LinearFaProblem.from_mdp(mdp, policy, phi, d)
    raise RuntimeError("could not draw a well-conditioned feature matrix")
