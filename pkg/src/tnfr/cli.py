"""Command-line interface: ``tnfr {disk,analyze,fourrooms,verify}``.

Every option can also come from a JSON config file (``--config``), keyed by
the long option name with dashes or underscores.  Precedence is flags, then
config file, then built-in defaults; the resolved values are written to
``meta.json`` beside the outputs.  Exit codes: 0 success, 1 runtime or I/O
failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import disk
from . import fourrooms as fr
from . import linear_fa as lf
from . import verify as vf
from .mdp import Mdp, Policy, policy_transition, stationary_distribution

OUTPUT_ROOT_ENV = "TNFR_OUTPUT_ROOT"


class UsageError(Exception):
    """Bad flag or config value; maps to exit code 2."""


# -- value parsers -------------------------------------------------------------

def _floats(text) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, list):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text) -> list[int]:
    if isinstance(text, int):
        return [text]
    if isinstance(text, list):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def _resolution(text) -> tuple[int, int]:
    if isinstance(text, list) and len(text) == 2:
        return int(text[0]), int(text[1])
    parts = str(text).lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"expected NxM, got {text!r}")
    return int(parts[0]), int(parts[1])


# -- option tables -------------------------------------------------------------
# name -> (default, converter, help).  Flags are registered with default None
# so that "not given" can be told apart from "given the default value".

COMMON = {
    "out": (None, str, f"output directory (default: ${OUTPUT_ROOT_ENV}/<command> or out/<command>)"),
    "workers": (None, int, "worker processes (default: available cores)"),
}

OPTIONS = {
    "disk": {
        "gamma": (0.99, float, "discount in (0,1)"),
        "kappa": (0.1, float, "FR regularization weight, >= 0"),
        "period": (10_000, int, "inner-loop length T, >= 1"),
        "res": ("128x256", str, "grid resolution RADIIxANGLES, at least 32x64"),
    },
    "analyze": {
        "instance": (None, str, "built-in instance name (two-state)"),
        "fixture": (None, str, "JSON problem file: mdp, phi, optional policy and dist"),
        "d0": (0.9, float, "two-state: sampling weight of state s0, in (0,1)"),
        "phi": ("1,-2", str, "two-state: comma-separated feature values of s0,s1"),
        "gamma": (0.99, float, "two-state: discount in (0,1)"),
        "eta": (None, float, "step size (default: instance-adaptive per algorithm)"),
        "period": (10_000, int, "inner-loop length T, >= 1"),
        "kappa": (0.1, float, "FR regularization weight, >= 0"),
    },
    "fourrooms": {
        "agent": ("tn", str, "tn or fr"),
        "epsilon": ("0.5", str, "behavior epsilon grid, comma-separated"),
        "kappa": (None, str, "FR kappa grid, comma-separated (required for --agent fr)"),
        "period": ("100", str, "target period grid, comma-separated"),
        "seeds": (10, int, "number of seeds, run as seed-offset .. seed-offset+seeds-1"),
        "seed_offset": (0, int, "first seed"),
        "steps": (fr.ExperimentConfig.total_steps, int, "environment steps per run"),
        "eval_every": (fr.ExperimentConfig.eval_every, int, "steps between evaluations"),
        "eval_episodes": (fr.ExperimentConfig.n_eval_episodes, int, "episodes per evaluation"),
        "epsilon_eval": (fr.ExperimentConfig.epsilon_eval, float, "evaluation epsilon"),
        "approximator": (fr.ExperimentConfig.approximator, str, "tabular, linear or mlp1"),
        "hidden": (fr.ExperimentConfig.hidden, int, "mlp1 hidden width"),
        "lr": (fr.ExperimentConfig.lr, float, "learning rate"),
        "optimizer": (fr.ExperimentConfig.optimizer, str, "sgd or adam"),
        "batch_size": (fr.ExperimentConfig.batch_size, int, "minibatch size"),
        "summary": (False, bool, "also write summary.svg and summary.json"),
    },
    "verify": {
        "filter": (None, str, "run only checks whose name contains this text"),
        "n": (None, int, "draws per check (default: each check's own)"),
        "seed": (0, int, "base seed"),
    },
}

HELP = {
    "disk": "spectral-radius sweep over the two-state disk",
    "analyze": "spectral report for one linear-FA instance",
    "fourrooms": "Four Rooms Q-learning experiment grid",
    "verify": "run the oracle and property-suite checks",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tnfr", description="Target networks vs functional regularization.")
    parser.add_argument("--version", action="version", version=f"tnfr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, table in OPTIONS.items():
        p = sub.add_parser(cmd, help=HELP[cmd], description=HELP[cmd])
        p.add_argument("--config", help="JSON file of option values")
        for name, (default, conv, text) in {**table, **COMMON}.items():
            flag = "--" + name.replace("_", "-")
            shown = f" (default: {default})" if default is not None else ""
            if conv is bool:
                p.add_argument(flag, dest=name, action="store_const", const=True, default=None, help=text)
            else:
                p.add_argument(flag, dest=name, type=conv, default=None, help=text + shown)
    return parser


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(_json_context(path, text, exc)) from None
    if not isinstance(doc, dict):
        raise UsageError(f"config {path}: top level must be an object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def resolve(cmd: str, args: argparse.Namespace) -> dict:
    """Merge defaults < config file < flags."""
    table = {**OPTIONS[cmd], **COMMON}
    resolved = {name: spec[0] for name, spec in table.items()}
    if args.config:
        for key, value in load_config(args.config).items():
            if key not in table:
                raise UsageError(f"config {args.config}: unknown option {key!r} for {cmd}")
            conv = table[key][1]
            try:
                resolved[key] = value if value is None or conv in (str, bool) else conv(value)
            except (TypeError, ValueError):
                raise UsageError(f"config {args.config}: bad value for {key!r}: {value!r}") from None
    for name in table:
        value = getattr(args, name)
        if value is not None:
            resolved[name] = value
    if resolved["workers"] is None:
        resolved["workers"] = os.cpu_count() or 1
    if resolved["workers"] < 1:
        raise UsageError("--workers must be >= 1")
    if resolved["out"] is None:
        root = os.environ.get(OUTPUT_ROOT_ENV, "out")
        resolved["out"] = str(Path(root) / cmd)
    return resolved


# -- shared helpers --------------------------------------------------------------

def _json_context(path, text: str, exc: json.JSONDecodeError) -> str:
    lines = text.splitlines()
    line = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
    return f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line}\n    {' ' * (exc.colno - 1)}^"


def _check(cond: bool, flag: str, message: str) -> None:
    if not cond:
        raise UsageError(f"--{flag.replace('_', '-')}: {message}")


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror}") from exc
    return out


def write_meta(out: Path, cmd: str, cfg: dict, extra: dict | None = None) -> None:
    meta = {"command": cmd, "version": __version__, "config": cfg}
    if extra:
        meta.update(extra)
    _write(out / "meta.json", json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")


# -- disk --------------------------------------------------------------------

def cmd_disk(cfg: dict) -> int:
    _check(0.0 < cfg["gamma"] < 1.0, "gamma", "gamma must be in (0,1)")
    _check(cfg["kappa"] >= 0.0, "kappa", "kappa must be >= 0")
    _check(cfg["period"] >= 1, "period", "period must be >= 1")
    try:
        res = _resolution(cfg["res"])
    except ValueError as exc:
        raise UsageError(f"--res: {exc}") from None
    _check(res[0] >= 32 and res[1] >= 64, "res", "resolution must be at least 32x64")
    cfg["res"] = f"{res[0]}x{res[1]}"

    grid = disk.sweep(cfg["gamma"], cfg["kappa"], cfg["period"], res, workers=cfg["workers"])
    out = _out_dir(cfg)
    disk.render(grid, out / "disk.csv", out / "disk.svg")
    counts = disk.compare_domains(grid)
    write_meta(out, "disk", cfg, {"grid": grid.params, "compare_domains": counts})
    for key, value in counts.items():
        print(f"{key:<16} {value}")
    return 0


# -- analyze -----------------------------------------------------------------

def _fixture_problem(path) -> lf.LinearFaProblem:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read fixture {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(_json_context(path, text, exc)) from None
    try:
        mdp = Mdp.from_dict(doc["mdp"])
        policy = Policy(doc["policy"]) if "policy" in doc else Policy.uniform(mdp.n_states, mdp.n_actions)
        phi = np.asarray(doc["phi"], dtype=float)
        if "dist" in doc:
            dist = np.asarray(doc["dist"], dtype=float)
        else:
            dist = stationary_distribution(policy_transition(mdp, policy))
        return lf.LinearFaProblem.from_mdp(mdp, policy, phi, dist)
    except KeyError as exc:
        raise UsageError(f"{path}: missing key {exc.args[0]!r}") from None
    except (ValueError, TypeError, ArithmeticError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _analyze_problem(cfg: dict) -> lf.LinearFaProblem:
    if (cfg["instance"] is None) == (cfg["fixture"] is None):
        raise UsageError("give exactly one of --instance or --fixture")
    if cfg["fixture"] is not None:
        return _fixture_problem(cfg["fixture"])
    _check(cfg["instance"] == "two-state", "instance", f"unknown instance {cfg['instance']!r} (known: two-state)")
    _check(0.0 < cfg["gamma"] < 1.0, "gamma", "gamma must be in (0,1)")
    _check(0.0 < cfg["d0"] < 1.0, "d0", "d0 must be in (0,1)")
    try:
        phi = _floats(cfg["phi"])
    except ValueError:
        raise UsageError(f"--phi: expected two comma-separated numbers, got {cfg['phi']!r}") from None
    _check(len(phi) == 2, "phi", "expected two comma-separated numbers")
    try:
        return disk.two_state_problem(disk.build_two_state_mdp(cfg["gamma"]), cfg["d0"], phi=phi)
    except (ValueError, ArithmeticError) as exc:
        raise UsageError(f"--phi: {exc}") from None


def _safe(fn):
    try:
        return fn()
    except (ArithmeticError, ValueError) as exc:
        return {"error": str(exc)}


def analyze_report(p: lf.LinearFaProblem, eta, period: int, kappa: float) -> dict:
    def spec(alg):
        if eta is None:
            return lf.adaptive_spec(p, alg, 1 if alg == lf.TD0 else period, kappa)
        return lf.IterationSpec(alg, eta, 1 if alg == lf.TD0 else period, kappa)

    reports = {}
    etas = {}
    for alg in (lf.TD0, lf.TN, lf.FR):
        s = _safe(lambda: spec(alg))
        if isinstance(s, dict):
            reports[alg] = s
            continue
        etas[alg] = s.eta
        reports[alg] = _safe(lambda: lf.classify(p, s).to_dict())
    reports["tn_limit"] = _safe(lambda: lf.report("tn_limit", lf.tn_limit_matrix(p)).to_dict())
    reports["fr_limit"] = _safe(lambda: lf.report("fr_limit", lf.fr_limit_matrix(p, kappa)).to_dict())

    doc = {"eta": etas, "period": period, "kappa": kappa, "reports": reports}
    wstar = _safe(lambda: lf.td_fixed_point(p))
    if isinstance(wstar, dict):
        doc["fixed_point"] = wstar
    else:
        doc["fixed_point"] = wstar.tolist()
        # both inner loops leave w* in place: the shared fixed point
        doc["bias_identities"] = {
            "tn_inner_at_wstar": float(np.max(np.abs(lf.tn_inner_fixed_point(p, wstar) - wstar))),
            "fr_inner_at_wstar": _safe(lambda: float(np.max(np.abs(lf.fr_inner_fixed_point(p, kappa, wstar) - wstar)))),
        }
    eta_tn = etas.get(lf.TN)
    if eta_tn is None:
        doc["k_lower_bound"] = {"error": "no TN step size"}
    else:
        try:
            doc["k_lower_bound"] = lf.k_lower_bound(p, eta_tn)
        except lf.BoundInapplicableError as exc:
            doc["k_lower_bound"] = {"error": str(exc)}
    return doc


def cmd_analyze(cfg: dict) -> int:
    _check(cfg["period"] >= 1, "period", "period must be >= 1")
    _check(cfg["kappa"] >= 0.0, "kappa", "kappa must be >= 0")
    _check(cfg["eta"] is None or cfg["eta"] > 0, "eta", "eta must be > 0")
    p = _analyze_problem(cfg)
    doc = analyze_report(p, cfg["eta"], cfg["period"], cfg["kappa"])
    out = _out_dir(cfg)
    _write(out / "analyze.json", json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    write_meta(out, "analyze", cfg)
    names = {lf.TD0: "TD(0) step", lf.TN: f"TN T={cfg['period']}", lf.FR: f"FR T={cfg['period']} k={cfg['kappa']:g}",
             "tn_limit": "TN T->inf", "fr_limit": f"FR T->inf k={cfg['kappa']:g}"}
    for key, label in names.items():
        rep = doc["reports"][key]
        if "error" in rep:
            print(f"{label:<22} error: {rep['error']}")
        else:
            radius = rep["radius"]
            shown = "inf" if radius is None else f"{radius:.6g}"
            print(f"{label:<22} rho={shown:<12} {rep['classification']}")
    fp = doc["fixed_point"]
    print(f"{'fixed point w*':<22} {fp['error'] if isinstance(fp, dict) else fp}")
    kb = doc["k_lower_bound"]
    print(f"{'K lower bound':<22} {kb['error'] if isinstance(kb, dict) else kb}")
    return 0


# -- fourrooms -----------------------------------------------------------------

def fourrooms_configs(cfg: dict) -> list[fr.ExperimentConfig]:
    _check(cfg["agent"] in ("tn", "fr"), "agent", "agent must be tn or fr")
    try:
        eps = _floats(cfg["epsilon"])
        periods = _ints(cfg["period"])
    except ValueError as exc:
        raise UsageError(f"bad grid value: {exc}") from None
    _check(bool(eps) and all(0.0 <= e <= 1.0 for e in eps), "epsilon", "epsilon values must be in [0,1]")
    _check(bool(periods) and all(t >= 1 for t in periods), "period", "period values must be >= 1")
    if cfg["agent"] == "fr":
        _check(cfg["kappa"] is not None, "kappa", "required with --agent fr")
        try:
            kappas = _floats(cfg["kappa"])
        except ValueError as exc:
            raise UsageError(f"--kappa: {exc}") from None
        _check(bool(kappas) and all(k >= 0 for k in kappas), "kappa", "kappa values must be >= 0")
    else:
        kappas = [0.0]
    _check(cfg["seeds"] >= 1, "seeds", "seeds must be >= 1")
    _check(cfg["steps"] >= 1, "steps", "steps must be >= 1")
    _check(cfg["eval_every"] >= 1, "eval_every", "eval-every must be >= 1")
    _check(cfg["eval_episodes"] >= 1, "eval_episodes", "eval-episodes must be >= 1")
    _check(0.0 <= cfg["epsilon_eval"] <= 1.0, "epsilon_eval", "epsilon-eval must be in [0,1]")
    _check(cfg["approximator"] in ("tabular", "linear", "mlp1"), "approximator", "approximator must be tabular, linear or mlp1")
    _check(cfg["optimizer"] in ("sgd", "adam"), "optimizer", "optimizer must be sgd or adam")
    _check(cfg["lr"] > 0, "lr", "lr must be > 0")
    _check(cfg["hidden"] >= 1, "hidden", "hidden must be >= 1")
    _check(cfg["batch_size"] >= 1, "batch_size", "batch-size must be >= 1")
    return [
        fr.ExperimentConfig(
            agent=cfg["agent"], epsilon=e, kappa=k, period=t, seed=cfg["seed_offset"] + s,
            total_steps=cfg["steps"], eval_every=cfg["eval_every"], n_eval_episodes=cfg["eval_episodes"],
            epsilon_eval=cfg["epsilon_eval"], approximator=cfg["approximator"], hidden=cfg["hidden"],
            lr=cfg["lr"], optimizer=cfg["optimizer"], batch_size=cfg["batch_size"],
        )
        for e in eps for k in kappas for t in periods for s in range(cfg["seeds"])
    ]


def cmd_fourrooms(cfg: dict) -> int:
    configs = fourrooms_configs(cfg)
    records = fr.run_grid(configs, cfg["workers"])
    out = _out_dir(cfg)
    _write(out / "results.csv", fr.results_csv(records))
    write_meta(out, "fourrooms", cfg, {"runs": [fr.config_dict(c) for c in configs]})
    if cfg["summary"]:
        _write(out / "summary.svg", fr.summary_svg(records))
        _write(out / "summary.json", json.dumps(fr.summarize(records), indent=2, sort_keys=True) + "\n")
    for label, stats in fr.summarize(records).items():
        regrets = ", ".join(f"eps={float(e):g}: {r:.3f}" for e, r in stats["regret"].items())
        print(f"{label:<18} final regret {regrets}; soft-divergent {stats['soft_divergent_fraction']:.2f}")
    return 0


# -- verify ------------------------------------------------------------------

def cmd_verify(cfg: dict) -> int:
    _check(cfg["n"] is None or cfg["n"] >= 1, "n", "n must be >= 1")
    try:
        names = vf.select(cfg["filter"])
    except KeyError as exc:
        raise UsageError(f"--filter: {exc.args[0]}") from None
    failed = []
    for name in names:
        res = vf.run_check(name, cfg["n"], cfg["seed"])
        print(res.line(), flush=True)
        if not res.passed:
            failed.append(name)
    if failed:
        print(f"verify: failed invariants: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"verify: all {len(names)} checks passed")
    return 0


COMMANDS = {"disk": cmd_disk, "analyze": cmd_analyze, "fourrooms": cmd_fourrooms, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"tnfr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"tnfr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"tnfr {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
