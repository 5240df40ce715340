"""Brute-force oracles and seeded property suites.

Each check is a function ``(n, seed) -> CheckResult``.  ``n`` is the number
of random draws (or qualifying instances for the property suites); every
draw comes from ``numpy.random.default_rng`` seeded from ``seed``, so a
check is a pure function of its arguments.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import disk
from . import linear_fa as lf
from . import qlearn as ql
from . import smallmat as sm
from .mdp import Mdp, Policy, bellman_residual, evaluate_policy_exact, value_iteration_exact

LARGE_PERIOD = 10**4
SMALL_KAPPAS = (1e-1, 1e-2, 1e-3, 1e-4)
COROLLARY_KAPPA = 1e-3


@dataclass
class CheckResult:
    name: str
    passed: bool
    n: int  # instances actually judged
    detail: str = ""
    excluded: int = 0  # marginal-band or otherwise ineligible draws
    seconds: float = 0.0
    failures: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f", {self.excluded} excluded" if self.excluded else ""
        return f"{status}  {self.name:<28} n={self.n}{extra}  {self.seconds:6.1f}s  {self.detail}"


# -- oracles -----------------------------------------------------------------

def gelfand_radius(a, squarings: int = 50) -> float:
    """Spectral radius as lim |A^k|^(1/k) (Gelfand), with k = 2^squarings
    reached by normalized repeated squaring.  Needs no eigenvalue gap; the
    error is about log(cond(eigenvectors)) / 2^squarings."""
    b = np.asarray(a, dtype=float)
    nb = np.linalg.norm(b, 2)
    if nb == 0.0:
        return 0.0
    b, log_norm = b / nb, math.log(nb)  # A^(2^j) = exp(log_norm) * b
    for _ in range(squarings):
        b = b @ b
        nb = np.linalg.norm(b, 2)
        if nb == 0.0:
            return 0.0
        b, log_norm = b / nb, 2.0 * log_norm + math.log(nb)
    return math.exp(log_norm / 2.0**squarings)


def finite_difference_grad(q: ql.QApproximator, batch: ql.Transitions, cfg: ql.TrainConfig, h: float = 1e-6):
    """Central differences of the loss with the bootstrap target frozen at
    the current parameters, written independently of ``loss_and_grad``."""
    rows = np.arange(len(batch))
    y = ql.td_targets(q, batch, cfg.gamma, use_lagging=cfg.loss == "TN")
    qbar = q.forward(batch.s, q.theta_bar)[rows, batch.a]

    def loss(theta):
        qsa = q.forward(batch.s, theta)[rows, batch.a]
        val = 0.5 * np.mean((y - qsa) ** 2)
        if cfg.loss == "FR":
            val += 0.5 * cfg.kappa * np.mean((qsa - qbar) ** 2)
        return val

    base = q.theta
    g = np.zeros_like(base)
    for k in range(base.size):
        e = np.zeros_like(base)
        e[k] = h
        g[k] = (loss(base + e) - loss(base - e)) / (2 * h)
    return g


def relative_error(a, b) -> float:
    """Entrywise relative error with the denominator floored at 1e-3 of the
    gradient's sup norm, so entries near zero are judged against
    finite-difference round-off rather than against themselves."""
    floor = 1e-3 * max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def kink_free_batch(q: ql.QApproximator, rng, n: int = 8, margin: float = 1e-4) -> ql.Transitions:
    """Random continuous-input batch with every hidden pre-activation at least
    ``margin`` away from the rectifier kink."""
    w1, b1, _, _ = q.unpack(q.theta)
    for _ in range(1000):
        s, s2 = rng.normal(size=(n, q.n_in)), rng.normal(size=(n, q.n_in))
        pre = np.concatenate([s @ w1.T + b1, s2 @ w1.T + b1])
        if np.min(np.abs(pre)) > margin:
            return ql.Transitions(s, rng.integers(0, q.n_actions, size=n), rng.uniform(-1, 1, size=n), s2, rng.random(n) < 0.2)
    raise RuntimeError("could not avoid rectifier kinks")


def empirical_problem(q: ql.QApproximator, batch: ql.Transitions, gamma: float, use_lagging: bool) -> lf.LinearFaProblem:
    """Linear-FA view of a batch for a linear learner on one-hot states.

    Pairs (s, a) are ordered s * A + a and the weight W[a, s] sits at index
    a * S + s of theta.  D, R and P are the empirical batch frequencies,
    with P bootstrapping through the greedy action of the relevant weights.
    """
    S, A = q.n_in, q.n_actions
    phi = np.zeros((S * A, A * S))
    for s in range(S):
        for a in range(A):
            phi[s * A + a, a * S + s] = 1.0
    theta = q.theta_bar if use_lagging else q.theta
    greedy = np.argmax(q.forward(np.eye(S), theta), axis=1)
    counts, R, P = np.zeros(S * A), np.zeros(S * A), np.zeros((S * A, S * A))
    for s_vec, a, r, s2_vec, term in zip(batch.s, batch.a, batch.r, batch.s_next, batch.terminal):
        i = int(np.argmax(s_vec)) * A + int(a)
        counts[i] += 1
        R[i] += r
        if not term:
            s2 = int(np.argmax(s2_vec))
            P[i, s2 * A + greedy[s2]] += 1
    seen = counts > 0
    R[seen] /= counts[seen]
    P[seen] /= counts[seen][:, None]
    return lf.LinearFaProblem(phi, counts / counts.sum(), P, R, gamma, check=False)


def measured_rate(errors: np.ndarray, floor: float = 1e-8) -> float:
    """Per-outer-step contraction read off a trajectory of error vectors.

    The one-step error map is fitted by least squares to successive snapshot
    pairs (each pair scaled to unit input norm, and only while the error is
    above ``floor``), and its spectral radius taken by the Gelfand limit.
    With one feature this is exactly the ratio of successive error norms;
    with more it stays accurate when the dominant eigenvalues are a slowly
    rotating complex pair, where norm ratios oscillate for hundreds of steps.
    """
    e = np.asarray(errors, dtype=float)
    keep = np.linalg.norm(e, axis=1) > floor
    n = int(np.argmin(keep)) if not keep.all() else len(e)
    if n < 2:
        return float("nan")
    x, y = e[: n - 1], e[1:n]
    scale = np.linalg.norm(x, axis=1)[:, None]
    x, y = x / scale, y / scale
    m = np.linalg.lstsq(x, y, rcond=None)[0].T  # y_k = m x_k
    return gelfand_radius(m)


# -- instance streams --------------------------------------------------------

def _shape(rng) -> tuple[int, int, int]:
    """|S||A| <= 6 and p <= 3."""
    S, A = int(rng.integers(1, 4)), int(rng.integers(1, 3))
    return S, A, int(rng.integers(1, min(3, S * A) + 1))


def _draw(rng, p: int | None = None, dist: str = "dirichlet"):
    S, A, pp = _shape(rng)
    if p is not None:
        pp = p
    gamma = float(rng.choice([0.5, 0.9, 0.99]))
    try:
        return lf.random_problem(rng, S, A, pp, gamma, dist=dist)
    except (RuntimeError, ArithmeticError, ValueError):
        return None


def _radius(m) -> float:
    return sm.spectral_radius(m)


# -- checks ------------------------------------------------------------------

def check_spectral_radius(n: int, seed: int) -> CheckResult:
    """smallmat spectral radius against the Gelfand power limit."""
    rng = np.random.default_rng(seed)
    worst, bad = 0.0, []
    for i in range(n):
        k = int(rng.integers(1, 9))
        a = rng.normal(size=(k, k))
        ref = gelfand_radius(a)
        err = abs(sm.spectral_radius(a) - ref) / max(ref, 1e-300)
        worst = max(worst, err)
        if err > 1e-8:
            bad.append(i)
    return CheckResult("spectral_radius", not bad, n, f"max rel err {worst:.2e}", failures=bad)


def check_matrix_inverse(n: int, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        k = int(rng.integers(1, 9))
        a = rng.normal(size=(k, k)) + k * np.eye(k)
        worst = max(worst, float(np.max(np.abs(sm.mat_mul(a, sm.mat_inverse(a)) - np.eye(k)))))
    return CheckResult("matrix_inverse", worst < 1e-12, n, f"max |A A^-1 - I| {worst:.2e}")


def check_mdp_residuals(n: int, seed: int) -> CheckResult:
    """Exact policy evaluation and value iteration against Bellman residuals."""
    rng = np.random.default_rng(seed)
    worst_pi, worst_opt = 0.0, 0.0
    for _ in range(n):
        S, A = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        mdp = Mdp(rng.dirichlet(np.ones(S), size=(S, A)), rng.uniform(-1, 1, (S, A)), float(rng.uniform(0.1, 0.95)))
        pi = Policy(rng.dirichlet(np.ones(A), size=S))
        worst_pi = max(worst_pi, bellman_residual(mdp, pi, evaluate_policy_exact(mdp, pi)))
        q, greedy = value_iteration_exact(mdp, 1e-12)
        worst_opt = max(worst_opt, bellman_residual(mdp, greedy, q))
    ok = worst_pi < 1e-10 and worst_opt < 1e-10
    return CheckResult("mdp_residuals", ok, n, f"policy {worst_pi:.1e}, optimal {worst_opt:.1e}")


def check_decomposition(n: int, seed: int) -> CheckResult:
    """TN and FR semi-gradients minus TD split into the lag terms."""
    rng = np.random.default_rng(seed)
    worst, used = 0.0, 0
    while used < n:
        p = _draw(rng)
        if p is None:
            continue
        used += 1
        w, wbar, kappa = rng.normal(size=p.p), rng.normal(size=p.p), float(rng.uniform(0, 3))
        td = lf.td_semigradient(p, w)
        e1 = lf.tn_semigradient(p, w, wbar) - td - p.gamma * p.H @ (w - wbar)
        e2 = lf.fr_semigradient(p, kappa, w, wbar) - td - kappa * p.G @ (w - wbar)
        worst = max(worst, float(np.max(np.abs(e1))), float(np.max(np.abs(e2))))
    return CheckResult("decomposition", worst < 1e-12, n, f"max residual {worst:.1e}")


def check_tn_large_period(n: int, seed: int) -> CheckResult:
    """gamma rho(Pi P) < 1 => TN with T = max(K, 10^4) and eta = 1/lambda_max(G) converges."""
    rng = np.random.default_rng(seed)
    judged, excluded, bad = 0, 0, []
    while judged < n:
        p = _draw(rng)
        if p is None or p.gamma * _radius(p.upsilon) >= 1.0:
            continue
        eta = lf.adaptive_eta(p, lf.TN)
        period = max(lf.k_lower_bound(p, eta), LARGE_PERIOD)
        rep = lf.classify(p, lf.IterationSpec(lf.TN, eta, period))
        if rep.classification == lf.MARGINAL:
            excluded += 1
            continue
        judged += 1
        if rep.classification != lf.CONVERGES:
            bad.append((judged, rep.radius))
    return CheckResult("tn_large_period", not bad, judged, f"{len(bad)} counterexamples", excluded, failures=bad)


def check_fr_small_kappa(n: int, seed: int) -> CheckResult:
    """Sp(A_0) in the open right half plane => some small kappa makes FR converge at T = 10^4."""
    rng = np.random.default_rng(seed)
    judged, excluded, bad = 0, 0, []
    while judged < n:
        p = _draw(rng)
        if p is None or not np.all(sm.spectrum(p.a_kappa(0.0)).eigenvalues.real > 0):
            continue
        classes = [lf.classify(p, lf.adaptive_spec(p, lf.FR, LARGE_PERIOD, k)).classification for k in SMALL_KAPPAS]
        if lf.CONVERGES not in classes and lf.MARGINAL in classes:
            excluded += 1
            continue
        judged += 1
        if lf.CONVERGES not in classes:
            bad.append(judged)
    return CheckResult("fr_small_kappa", not bad, judged, f"{len(bad)} counterexamples", excluded, failures=bad)


def check_corollary(n: int, seed: int) -> CheckResult:
    """p = 1: TN converging at T = 10^4 implies FR(kappa=1e-3) converging at T = 10^4."""
    rng = np.random.default_rng(seed)
    judged, excluded, tn_ok, bad = 0, 0, 0, []
    while judged < n:
        p = _draw(rng, p=1)
        if p is None:
            continue
        tn = lf.classify(p, lf.adaptive_spec(p, lf.TN, LARGE_PERIOD)).classification
        fr = lf.classify(p, lf.adaptive_spec(p, lf.FR, LARGE_PERIOD, COROLLARY_KAPPA)).classification
        if lf.MARGINAL in (tn, fr):
            excluded += 1
            continue
        judged += 1
        tn_ok += tn == lf.CONVERGES
        if tn == lf.CONVERGES and fr != lf.CONVERGES:
            bad.append(judged)
    detail = f"{len(bad)} counterexamples, TN converged on {tn_ok}"
    return CheckResult("corollary", not bad, judged, detail, excluded, failures=bad)


def check_fr_kappa_continuity(n: int, seed: int) -> CheckResult:
    """The FR limit-matrix radius drops below 0.5 for small enough kappa."""
    rng = np.random.default_rng(seed)
    judged, bad = 0, []
    while judged < n:
        p = _draw(rng)
        if p is None:
            continue
        try:
            lf.td_fixed_point(p)
        except ArithmeticError:
            continue
        judged += 1
        radius = lambda k: _radius(lf.fr_limit_matrix(p, k))  # noqa: E731
        hi = 1.0
        while radius(hi) >= 0.5 and hi > 1e-18:
            hi /= 2
        if radius(hi) >= 0.5:
            bad.append(judged)
            continue
        lo, hi = hi, 2 * hi
        while hi - lo > 1e-6 * hi:  # bisect the threshold between good lo and bad hi
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if radius(mid) < 0.5 else (lo, mid)
        below = [radius(lo * f) for f in (0.5, 0.1, 1e-6)]
        if max(below) >= 0.5 or below[-1] > 1e-3:
            bad.append(judged)
    return CheckResult("fr_kappa_continuity", not bad, judged, f"{len(bad)} failures", failures=bad)


def check_shared_fixed_point(n: int, seed: int, period: int = 20, kappa: float = 0.5) -> CheckResult:
    """Convergent TN and FR runs land on the TD fixed point, at the rate the
    composed matrix predicts.

    Instances whose composed radius is below 0.01 or above 0.99 for either
    algorithm are skipped: the former reach round-off within a few outer
    steps, leaving too few snapshots to measure, and the latter need more
    outer steps than a check should take.  Runs start 1e6 away from w*
    (far below the blow-up bound) to lengthen the measurable stretch.
    """
    rng = np.random.default_rng(seed)
    judged, skipped, worst_fp, worst_rate, bad = 0, 0, 0.0, 0.0, []
    while judged < n:
        p = _draw(rng, dist=str(rng.choice(["stationary", "dirichlet"])))
        if p is None:
            continue
        try:
            wstar = lf.td_fixed_point(p)
        except ArithmeticError:
            continue
        specs = [lf.adaptive_spec(p, alg, period, kappa) for alg in (lf.TN, lf.FR)]
        reps = [lf.classify(p, s) for s in specs]
        if any(r.classification != lf.CONVERGES for r in reps):
            continue
        if any(not 0.01 <= r.radius <= 0.99 for r in reps):
            skipped += 1
            continue
        judged += 1
        for spec, rep in zip(specs, reps):
            d = rng.normal(size=p.p)
            traj = lf.run_iteration(p, spec, wstar + 1e6 * d / np.linalg.norm(d), 20_000, tol=1e-15)
            fp = float(np.max(np.abs(traj.final - wstar)))
            rate = abs(measured_rate(traj.weights - wstar) / rep.radius - 1.0)
            worst_fp, worst_rate = max(worst_fp, fp), max(worst_rate, rate)
            if traj.diverged or not fp < 1e-6 or not rate <= 0.05:
                bad.append((judged, spec.algorithm, fp, rate))
    detail = f"max |w - w*| {worst_fp:.1e}, max rate rel err {worst_rate:.1e}"
    return CheckResult("shared_fixed_point", not bad, judged, detail, skipped, failures=bad)


def check_k_lower_bound(n: int, seed: int) -> CheckResult:
    """Where the bound applies, T = K already makes TN converge."""
    rng = np.random.default_rng(seed)
    judged, bad = 0, []
    attempts = 0
    while judged < n and attempts < 100 * n:
        attempts += 1
        p = _draw(rng, dist="stationary")
        if p is None:
            continue
        eta = lf.adaptive_eta(p, lf.TN)
        try:
            k = lf.k_lower_bound(p, eta)
        except lf.BoundInapplicableError:
            continue
        judged += 1
        if lf.classify(p, lf.IterationSpec(lf.TN, eta, k)).classification != lf.CONVERGES:
            bad.append((judged, k))
    return CheckResult("k_lower_bound", not bad and judged == n, judged, f"{len(bad)} failures", failures=bad)


def check_polyak(n: int, seed: int) -> CheckResult:
    """polyak_update zeroes the gradient of its proximal objective."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 65))
        theta, theta_bar = rng.normal(size=d), rng.normal(size=d)
        tau = float(rng.uniform(0.05, 0.95))
        x = lf.polyak_update(theta, theta_bar, tau)
        worst = max(worst, float(np.max(np.abs(lf.polyak_objective_grad(x, theta, theta_bar, tau)))))
    return CheckResult("polyak", worst < 1e-12, n, f"max |grad| {worst:.1e}")


def check_mlp_gradient(n: int, seed: int) -> CheckResult:
    """mlp1 backprop against central finite differences, TN and FR alternating."""
    rng = np.random.default_rng(seed)
    worst, bad = 0.0, []
    for i in range(n):
        n_in, n_act, hidden = int(rng.integers(2, 7)), int(rng.integers(2, 5)), int(rng.integers(2, 9))
        q = ql.QApproximator("mlp1", n_in, n_act, hidden=hidden, seed=int(rng.integers(2**31)))
        q.theta_bar = q.theta + 0.1 * rng.normal(size=q.theta.shape)
        cfg = ql.TrainConfig(loss=("TN", "FR")[i % 2], kappa=float(rng.uniform(0, 2)), gamma=0.9)
        batch = kink_free_batch(q, rng)
        err = relative_error(ql.loss_and_grad(q, batch, cfg)[1], finite_difference_grad(q, batch, cfg))
        worst = max(worst, err)
        if err >= 1e-5:
            bad.append((i, err))
    return CheckResult("mlp_gradient", not bad, n, f"max rel err {worst:.1e}", failures=bad)


def check_linear_step(n: int, seed: int) -> CheckResult:
    """A linear one-hot SGD step equals the linear-FA semi-gradient step on
    the batch's empirical D, P, R."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n):
        S, A = int(rng.integers(2, 7)), int(rng.integers(1, 4))
        q = ql.QApproximator("linear", S, A, init="uniform", seed=int(rng.integers(2**31)))
        q.theta_bar = rng.normal(size=q.theta.shape)
        m = int(rng.integers(4, 48))
        batch = ql.Transitions(
            np.eye(S)[rng.integers(0, S, m)], rng.integers(0, A, m), rng.uniform(-1, 1, m),
            np.eye(S)[rng.integers(0, S, m)], rng.random(m) < 0.2,
        )
        loss, kappa, lr, gamma = ("TN", "FR")[i % 2], float(rng.uniform(0, 2)), float(rng.uniform(0.01, 0.5)), 0.9
        p = empirical_problem(q, batch, gamma, use_lagging=loss == "TN")
        if loss == "TN":
            grad = lf.tn_semigradient(p, q.theta, q.theta_bar)
        else:
            grad = lf.fr_semigradient(p, kappa, q.theta, q.theta_bar)
        expected = q.theta - lr * grad
        cfg = ql.TrainConfig(loss=loss, kappa=kappa, lr=lr, gamma=gamma, target_period=10**9)
        ql.update_on_batch(q, batch, cfg, 1, ql.make_optimizer(cfg))
        worst = max(worst, float(np.max(np.abs(q.theta - expected))))
    return CheckResult("linear_step", worst < 1e-10, n, f"max |diff| {worst:.1e}")


def check_scalar_instance(n: int, seed: int) -> CheckResult:
    """Closed-form scalars of the two-state instance d0 = 0.9, Phi = [1, -2]."""
    del n, seed
    prob = disk.two_state_problem(disk.build_two_state_mdp(0.99), 0.9, phi=[1.0, -2.0])
    # hand arithmetic: G = 0.9 + 0.1*4 = 1.3; H = 0.9*(1*-2) + 0.1*(-2)*(0.5*1 + 0.5*-2) = -1.7
    g, h = 1.3, -1.7
    tn_ref = abs(0.99 * h / g)
    a = 1.1 * g - 0.99 * h
    fr_ref = 0.1 * g / a  # limit matrix kappa A_kappa^-1 G
    tn = _radius(lf.tn_limit_matrix(prob))
    fr = _radius(lf.fr_limit_matrix(prob, 0.1))
    ok = abs(tn - 1.2946) < 1e-3 and abs(fr - 0.0418) < 1e-3 and abs(tn - tn_ref) < 1e-12 and abs(fr - fr_ref) < 1e-12
    return CheckResult("scalar_instance", ok, 1, f"rho_tn {tn:.5f}, rho_fr {fr:.5f}")


# name -> (check, default n)
CHECKS = {
    "spectral_radius": (check_spectral_radius, 200),
    "matrix_inverse": (check_matrix_inverse, 200),
    "mdp_residuals": (check_mdp_residuals, 100),
    "decomposition": (check_decomposition, 200),
    "scalar_instance": (check_scalar_instance, 1),
    "tn_large_period": (check_tn_large_period, 200),
    "fr_small_kappa": (check_fr_small_kappa, 200),
    "corollary": (check_corollary, 1000),
    "fr_kappa_continuity": (check_fr_kappa_continuity, 100),
    "shared_fixed_point": (check_shared_fixed_point, 50),
    "k_lower_bound": (check_k_lower_bound, 100),
    "polyak": (check_polyak, 100),
    "mlp_gradient": (check_mlp_gradient, 100),
    "linear_step": (check_linear_step, 100),
}


def select(pattern: str | None = None) -> list[str]:
    names = [k for k in CHECKS if pattern is None or pattern in k]
    if not names:
        raise KeyError(f"no check matches {pattern!r}; known: {', '.join(CHECKS)}")
    return names


def run_check(name: str, n: int | None = None, seed: int = 0) -> CheckResult:
    fn, default_n = CHECKS[name]
    t0 = time.perf_counter()
    try:
        res = fn(default_n if n is None else n, seed)
    except Exception as exc:  # a crashing oracle is a failed check, named
        res = CheckResult(name, False, 0, f"raised {type(exc).__name__}: {exc}")
    res.seconds = time.perf_counter() - t0
    return res


def run_checks(pattern: str | None = None, n: int | None = None, seed: int = 0) -> list[CheckResult]:
    return [run_check(name, n, seed) for name in select(pattern)]
