"""Command-line front end.

Usage::

    discern-lab <command> [--config FILE] [--key value ...]

A run is described by one JSON document with the blocks ``theta``, ``dop``,
``numeric``, ``io`` and a command-specific block named after the command.
Flags override fields of the file, which override built-in defaults.  The
resolved document is hashed and the hash heads every CSV written, so two
runs with the same hash produce identical bytes.

Exit status is 0 on success, 1 for configuration errors and 2 for numeric
failures.  Outputs are only written once every result has been computed.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import os
import sys
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from .dop import (Concept, DistributionOfPlay, SelectionSpec, build_averaged_dop, evaluate,
                  evaluate_many, nash_hull_membership)
from .errors import ConfigError, NumericFailure
from .game import OUTCOMES, IndexPair, Theta
from .identify import (LimitConfig, binned_oracle, exact_oracle, identify, psi_profile)
from .numerics import (SeedStream, quad2d, sample_correlated_normals, std_normal_cdf,
                       std_normal_pdf)
from .probabilities import (MarketDesign, equivalence, lumpsum_noservice, outcome_prob,
                            outcome_prob_mc, policy_lumpsum, policy_targeted, region_polygons,
                            targeted_frontier)

COMMANDS = ("probabilities", "equivalence", "policy-targeted", "policy-lumpsum", "simulate",
            "identify", "discern", "nash-demo")

DEFAULTS: dict[str, Any] = {
    "theta": {"alpha": [[0.0, -1.0], [0.0, -1.0]], "beta": [1.0, 1.0], "rho": 0.0, "eta": None},
    "dop": {"concept": "saa", "selection": None, "weights": None},
    "numeric": {"tol": 1e-10, "L": 8.0, "grid_step": 0.01, "fd_step": 1e-3, "seed": 0, "n": 0},
    "io": {"out": "."},
    "probabilities": {"z1": 0.0, "z2": 0.0, "window": 4.0},
    "equivalence": {"eta": 1.0, "rho": 0.0},
    "policy-targeted": {"eta": 0.8416, "tau": 0.05, "concept": "saa", "rho": 0.0,
                        "frontier": True},
    "policy-lumpsum": {"alpha": 0.0, "eta": 1.0, "tau_hat": 0.0, "h": 1e-5,
                       "curve": [-3.0, 3.0, 121]},
    "simulate": {"n": 1000, "design": "fixed", "z1": 0.0, "z2": 0.0, "low": -8.0, "high": 8.0},
    "identify": {"input": None, "bandwidth": 0.1, "rho": None},
    "discern": {"input": None, "bandwidth": 0.1},
    "nash-demo": {"grid": 20, "hull_tol": 1e-6},
}

# Flags shared by commands that build a distribution of play.
_MODEL_FLAGS = [
    ("--alpha", "theta.alpha", "a10,a11,a20,a21"),
    ("--beta", "theta.beta", "b1,b2"),
    ("--rho", "theta.rho", "shock correlation"),
    ("--eta", "theta.eta", "symmetric entry game with monopoly profit eta (overrides alpha)"),
    ("--concept", "dop.concept", "rationalizable|nash|maxmin|collusion|saa"),
    ("--selection", "dop.selection", "equal_weight_ne|most_profitable_enters|never_enter|fixed_weights|averaged"),
    ("--weights", "dop.weights", "comma-separated selection weights"),
]

_COMMAND_FLAGS: dict[str, list] = {
    "probabilities": _MODEL_FLAGS + [
        ("--z1", "probabilities.z1", "covariate of firm 1"),
        ("--z2", "probabilities.z2", "covariate of firm 2"),
        ("--window", "probabilities.window", "half-width of the region-boundary window"),
        ("--n", "numeric.n", "Monte Carlo draws (0 for exact only)"),
    ],
    "equivalence": [
        ("--eta", "equivalence.eta", "monopoly profit of the ambiguity-averse game"),
        ("--rho", "equivalence.rho", "shock correlation"),
        ("--n", "numeric.n", "Monte Carlo draws for a sampling check (0 to skip)"),
    ],
    "policy-targeted": [
        ("--eta", "policy-targeted.eta", "monopoly profit"),
        ("--tau", "policy-targeted.tau", "subsidy to firm 1 when alone"),
        ("--concept", "policy-targeted.concept", "saa|pne"),
        ("--rho", "policy-targeted.rho", "shock correlation"),
        ("--frontier", "policy-targeted.frontier", "also locate the sign-change frontier (true|false)"),
    ],
    "policy-lumpsum": [
        ("--alpha", "policy-lumpsum.alpha", "duopoly intercept"),
        ("--eta", "policy-lumpsum.eta", "monopoly premium"),
        ("--tau-hat", "policy-lumpsum.tau_hat", "subsidy level"),
        ("--curve", "policy-lumpsum.curve", "lo,hi,count of the tau_hat curve"),
    ],
    "simulate": _MODEL_FLAGS + [
        ("--n", "simulate.n", "number of markets"),
        ("--design", "simulate.design", "fixed|uniform"),
        ("--z1", "simulate.z1", "fixed covariate of firm 1"),
        ("--z2", "simulate.z2", "fixed covariate of firm 2"),
        ("--low", "simulate.low", "lower end of the uniform design"),
        ("--high", "simulate.high", "upper end of the uniform design"),
    ],
    "identify": _MODEL_FLAGS + [
        ("--input", "identify.input", "dataset CSV (z1,z2,y1,y2); omit for an exact oracle"),
        ("--bandwidth", "identify.bandwidth", "kernel bandwidth for datasets"),
        ("--with-rho", "identify.rho", "recover the correlation (true|false)"),
        ("--L", "numeric.L", "index value standing in for infinity"),
    ],
    "discern": _MODEL_FLAGS + [
        ("--input", "discern.input", "dataset CSV (z1,z2,y1,y2); omit for an exact oracle"),
        ("--bandwidth", "discern.bandwidth", "kernel bandwidth for datasets"),
        ("--L", "numeric.L", "index value standing in for infinity"),
    ],
    "nash-demo": [
        ("--grid", "nash-demo.grid", "points per side of the box grid"),
        ("--hull-tol", "nash-demo.hull_tol", "tolerance of the hull test"),
    ],
}

_COMMON_FLAGS = [
    ("--tol", "numeric.tol", "absolute tolerance of exact computations"),
    ("--seed", "numeric.seed", "random seed"),
    ("--out", "io.out", "output directory"),
]


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def _parse_value(text: str) -> Any:
    """Flag text to JSON-like value: JSON if it parses, comma lists of numbers,
    otherwise the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        try:
            return [float(x) for x in text.split(",")]
        except ValueError:
            pass
    return text


def _set_path(cfg: dict, path: str, value: Any) -> None:
    block, key = path.split(".", 1)
    cfg.setdefault(block, {})[key] = value


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in out:
            raise ConfigError(f"unknown config field {where}{k!r}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config field {where}{k!r} must be an object")
            out[k] = _merge(out[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit status 1)."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="discern-lab", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, description=f"run the {name} experiment")
        sp.add_argument("--config", help="JSON configuration file")
        for flag, path, help_ in _COMMAND_FLAGS[name] + _COMMON_FLAGS:
            sp.add_argument(flag, dest=path, default=None, help=help_)
    return p


def resolve_config(argv: list[str]) -> dict:
    """Defaults, then the config file, then flags."""
    args = build_parser().parse_args(argv)
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        cmd = doc.pop("command", args.command)
        if cmd != args.command:
            raise ConfigError(f"config is for command {cmd!r}, not {args.command!r}")
        cfg = _merge(cfg, doc)
    for key, val in vars(args).items():
        if "." in key and val is not None:
            _set_path(cfg, key, _parse_value(val))
    cfg["command"] = args.command
    return cfg


def config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _num(cfg: dict, path: str, kind: Callable = float, positive: bool = False,
         nonneg: bool = False) -> Any:
    block, key = path.split(".", 1)
    val = cfg[block][key]
    try:
        if kind is int and isinstance(val, float) and not val.is_integer():
            raise ValueError
        out = kind(val)
    except (TypeError, ValueError):
        raise ConfigError(f"field {path} must be {kind.__name__}, got {val!r}") from None
    if kind is float and not np.isfinite(out):
        raise ConfigError(f"field {path} must be finite, got {val!r}")
    if positive and not out > 0:
        raise ConfigError(f"field {path} must be positive, got {val!r}")
    if nonneg and out < 0:
        raise ConfigError(f"field {path} must be nonnegative, got {val!r}")
    return out


def _flag(cfg: dict, path: str) -> bool:
    block, key = path.split(".", 1)
    val = cfg[block][key]
    if isinstance(val, bool):
        return val
    if isinstance(val, str) and val.lower() in ("true", "false", "yes", "no"):
        return val.lower() in ("true", "yes")
    raise ConfigError(f"field {path} must be true or false, got {val!r}")


def _cdf(x: float) -> float:
    return float(std_normal_cdf(x))


def _field_error(path: str, exc: Exception) -> ConfigError:
    return ConfigError(f"field {path}: {exc}")


def _theta(cfg: dict) -> Theta:
    t = cfg["theta"]
    rho = _num(cfg, "theta.rho")
    if not -1.0 < rho < 1.0:
        raise ConfigError(f"field theta.rho must lie in (-1, 1), got {rho!r}")
    if t.get("eta") is not None:
        eta = _num(cfg, "theta.eta")
        try:
            return Theta.symmetric_entry(eta, rho)
        except ConfigError as exc:
            raise _field_error("theta.eta", exc) from None
    try:
        alpha = np.asarray(t["alpha"], dtype=float).reshape(2, 2)
    except (TypeError, ValueError):
        raise ConfigError(f"field theta.alpha must hold four numbers, got {t['alpha']!r}") from None
    try:
        beta = tuple(np.asarray(t["beta"], dtype=float).reshape(2))
    except (TypeError, ValueError):
        raise ConfigError(f"field theta.beta must hold two numbers, got {t['beta']!r}") from None
    try:
        return Theta(tuple(map(tuple, alpha)), beta, rho)
    except ConfigError as exc:
        raise _field_error("theta", exc) from None


def _dop(cfg: dict, theta: Theta) -> DistributionOfPlay:
    d = cfg["dop"]
    try:
        concept = Concept(d["concept"])
    except ValueError:
        raise ConfigError(f"field dop.concept: unknown concept {d['concept']!r}") from None
    sel = d.get("selection")
    try:
        if sel is None:
            if concept == Concept.NASH:
                spec = SelectionSpec("equal_weight_ne")
            elif concept == Concept.RATIONALIZABLE:
                raise ConfigError("the rationalizable concept needs a selection")
            else:
                spec = None
        elif sel == "averaged":
            spec = None
        else:
            w = d.get("weights")
            spec = SelectionSpec(sel, None if w is None else tuple(np.atleast_1d(np.asarray(w, dtype=float))))
        base = DistributionOfPlay(theta, concept, spec)
        if sel == "averaged":
            return build_averaged_dop(theta, base, cfg["numeric"]["tol"])
        return base
    except ConfigError as exc:
        raise _field_error("dop.selection" if sel is not None else "dop", exc) from None


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _fmt(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class Table:
    """A CSV document held in memory until the run succeeds."""

    def __init__(self, name: str, header: list[str]):
        self.name = name
        self.header = header
        self.rows: list[list[str]] = []

    def add(self, *values) -> None:
        if len(values) != len(self.header):
            raise ValueError(f"{self.name}: row length {len(values)} != {len(self.header)}")
        self.rows.append([_fmt(v) for v in values])

    def render(self, digest: str) -> str:
        buf = io.StringIO()
        buf.write(f"# config_sha256={digest}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        return buf.getvalue()


def _write_outputs(out_dir: str, files: dict[str, str]) -> None:
    try:
        os.makedirs(out_dir, exist_ok=True)
        staged = []
        for name, text in files.items():
            tmp = os.path.join(out_dir, f".{name}.tmp")
            with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            staged.append((tmp, os.path.join(out_dir, name)))
        for tmp, final in staged:
            os.replace(tmp, final)
    except OSError as exc:
        raise ConfigError(f"field io.out: cannot write outputs: {exc}") from None


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _regions_table(d: DistributionOfPlay, window: float) -> Table:
    tab = Table("regions.csv", ["cell", "label", "vertex", "v1", "v2", "p00", "p01", "p10", "p11"])
    for c, (label, p, verts) in enumerate(region_polygons(d, window)):
        for k, (x, y) in enumerate(verts):
            tab.add(c, label, k, float(x), float(y), *map(float, p))
    return tab


def cmd_probabilities(cfg: dict) -> list[Table]:
    theta = _theta(cfg)
    d = _dop(cfg, theta)
    m = MarketDesign(_num(cfg, "probabilities.z1"), _num(cfg, "probabilities.z2"))
    tol = _num(cfg, "numeric.tol", positive=True)
    n = _num(cfg, "numeric.n", int, nonneg=True)
    rep = outcome_prob(d, m, tol)
    tab = Table("probabilities.csv", ["outcome", "probability", "method", "se"])
    for y in OUTCOMES:
        tab.add(f"{y[0]}{y[1]}", rep.dist[y], rep.method, None)
    if n:
        mc = outcome_prob_mc(d, m, n, SeedStream(_num(cfg, "numeric.seed", int, nonneg=True)))
        for k, y in enumerate(OUTCOMES):
            tab.add(f"{y[0]}{y[1]}", mc.dist[y], mc.method, mc.se[k])
    return [tab, _regions_table(d, _num(cfg, "probabilities.window", positive=True))]


def cmd_equivalence(cfg: dict) -> list[Table]:
    eta = _num(cfg, "equivalence.eta")
    rho = _num(cfg, "equivalence.rho")
    tol = _num(cfg, "numeric.tol", positive=True)
    n = _num(cfg, "numeric.n", int, nonneg=True)
    rep = equivalence(eta, tol, rho)
    tab = Table("equivalence.csv", ["eta", "eta_prime", "outcome", "p_saa", "p_pne", "abs_diff",
                                    "method", "se_saa", "se_pne"])
    for y in OUTCOMES:
        tab.add(eta, rep.eta_prime, f"{y[0]}{y[1]}", rep.saa[y], rep.pne[y],
                abs(rep.saa[y] - rep.pne[y]), "exact", None, None)
    if n:
        seed = _num(cfg, "numeric.seed", int, nonneg=True)
        z0 = MarketDesign(0.0, 0.0)
        saa = DistributionOfPlay(Theta.symmetric_entry(eta, rho), Concept.SAA)
        pne = DistributionOfPlay(Theta.symmetric_entry(rep.eta_prime, rho), Concept.NASH,
                                 SelectionSpec("most_profitable_enters"))
        a = outcome_prob_mc(saa, z0, n, SeedStream(seed, 0))
        b = outcome_prob_mc(pne, z0, n, SeedStream(seed, 1))
        for k, y in enumerate(OUTCOMES):
            tab.add(eta, rep.eta_prime, f"{y[0]}{y[1]}", a.dist[y], b.dist[y],
                    abs(a.dist[y] - b.dist[y]), "monte_carlo", a.se[k], b.se[k])
    return [tab]


def cmd_policy_targeted(cfg: dict) -> list[Table]:
    blk = "policy-targeted"
    eta = _num(cfg, f"{blk}.eta", positive=True)
    tau = _num(cfg, f"{blk}.tau", positive=True)
    concept = cfg[blk]["concept"]
    rho = _num(cfg, f"{blk}.rho")
    try:
        rep = policy_targeted(eta, tau, concept, rho)
    except ConfigError as exc:
        raise _field_error(blk, exc) from None
    tab = Table("policy_targeted.csv", ["concept", "eta", "tau", "p_noservice_baseline",
                                        "p_noservice_policy", "delta", "e_plus", "e_minus"])
    tab.add(concept, eta, tau, rep.p_noservice_baseline, rep.p_noservice_policy, rep.delta,
            rep.e_plus, rep.e_minus)
    out = [tab]
    if _flag(cfg, f"{blk}.frontier"):
        if rho != 0.0:
            raise ConfigError(f"field {blk}.frontier: the frontier is defined for rho = 0")
        tol = _num(cfg, "numeric.tol", positive=True)
        front = Table("policy_frontier.csv", ["tau", "eta", "Phi_eta", "delta_saa", "delta_pne"])
        for e in np.round(np.linspace(0.05, 3.0, 60), 10):
            front.add(tau, float(e), float(_cdf(e)),
                      policy_targeted(float(e), tau, "saa").delta,
                      policy_targeted(float(e), tau, "pne").delta)
        root = targeted_frontier(tau, tol=tol)
        front.add(tau, root, float(_cdf(root)), 0.0, None)
        out.append(front)
    return out


def cmd_policy_lumpsum(cfg: dict) -> list[Table]:
    blk = "policy-lumpsum"
    alpha = _num(cfg, f"{blk}.alpha")
    eta = _num(cfg, f"{blk}.eta", nonneg=True)
    tau_hat = _num(cfg, f"{blk}.tau_hat")
    h = _num(cfg, f"{blk}.h", positive=True)
    try:
        lo, hi, count = cfg[blk]["curve"]
        lo, hi, count = float(lo), float(hi), int(count)
    except (TypeError, ValueError):
        raise ConfigError(f"field {blk}.curve must be [lo, hi, count]") from None
    if not (hi > lo and count >= 2):
        raise ConfigError(f"field {blk}.curve needs hi > lo and count >= 2")
    rep = policy_lumpsum(alpha, eta, tau_hat, h)
    tab = Table("policy_lumpsum.csv", ["alpha", "eta", "tau_hat", "p_noservice_zero",
                                       "p_noservice_policy", "delta", "slope"])
    tab.add(alpha, eta, tau_hat, rep.p_noservice_baseline, rep.p_noservice_policy, rep.delta,
            rep.slope)
    curve = Table("lumpsum_curve.csv", ["tau_hat", "p_noservice", "slope"])
    for t in np.linspace(lo, hi, count):
        s = (lumpsum_noservice(alpha, eta, t + h) - lumpsum_noservice(alpha, eta, t - h)) / (2 * h)
        curve.add(float(t), float(lumpsum_noservice(alpha, eta, t)), float(s))
    return [tab, curve]


def simulate_dataset(d: DistributionOfPlay, n: int, seed: int, design: str,
                     fixed: tuple[float, float] = (0.0, 0.0),
                     bounds: tuple[float, float] = (-8.0, 8.0)) -> tuple[np.ndarray, int]:
    """Draw ``n`` markets: covariates, shocks, then an outcome from the
    distribution of play.  Shock draws that hit an indifference are redrawn.

    Returns
    -------
    data : ndarray of shape (n, 4)
        Columns ``z1, z2, y1, y2``.
    redraws : int
        Number of degenerate shock draws replaced.
    """
    if design == "fixed":
        z = np.tile(np.asarray(fixed, dtype=float), (n, 1))
    elif design == "uniform":
        lo, hi = bounds
        if not hi > lo:
            raise ConfigError("field simulate.high must exceed simulate.low")
        z = SeedStream(seed, 1).generator().uniform(lo, hi, size=(n, 2))
    else:
        raise ConfigError(f"field simulate.design must be 'fixed' or 'uniform', got {design!r}")
    stream = SeedStream(seed, 0)
    e = sample_correlated_normals(d.theta.rho, n, stream)
    m1, m2 = d.theta.index_mean(z[:, 0], z[:, 1])
    probs, degen = evaluate_many(d, m1 - e[:, 0], m2 - e[:, 1])
    redraws, batch = 0, 0
    while degen.any():
        batch += 1
        idx = np.flatnonzero(degen)
        redraws += idx.size
        e_new = sample_correlated_normals(d.theta.rho, idx.size, stream, batch)
        p_new, d_new = evaluate_many(d, m1[idx] - e_new[:, 0], m2[idx] - e_new[:, 1])
        probs[idx] = p_new
        degen = np.zeros(n, dtype=bool)
        degen[idx[d_new]] = True
    u = SeedStream(seed, 2).generator().random(n)
    k = (u[:, None] > np.cumsum(probs, axis=1)[:, :3]).sum(axis=1)
    y = np.array(OUTCOMES)[k]
    return np.column_stack([z, y]), redraws


def cmd_simulate(cfg: dict) -> list[Table]:
    blk = "simulate"
    d = _dop(cfg, _theta(cfg))
    n = _num(cfg, f"{blk}.n", int, positive=True)
    seed = _num(cfg, "numeric.seed", int, nonneg=True)
    data, redraws = simulate_dataset(
        d, n, seed, cfg[blk]["design"],
        (_num(cfg, f"{blk}.z1"), _num(cfg, f"{blk}.z2")),
        (_num(cfg, f"{blk}.low"), _num(cfg, f"{blk}.high")))
    tab = Table("sim.csv", ["z1", "z2", "y1", "y2"])
    z = data[:, :2]
    y = data[:, 2:].astype(int)
    tab.rows = [[repr(float(a)), repr(float(b)), str(c), str(e)]
                for (a, b), (c, e) in zip(z.tolist(), y.tolist())]
    log = Table("sim_log.csv", ["n", "seed", "degenerate_redraws"])
    log.add(n, seed, redraws)
    return [tab, log]


def read_dataset(path: str) -> np.ndarray:
    """Read a ``z1,z2,y1,y2`` CSV; ``#`` lines are comments."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise ConfigError(f"field input: cannot read {path}: {exc}") from None
    if not lines or [h.strip() for h in lines[0].split(",")] != ["z1", "z2", "y1", "y2"]:
        raise ConfigError(f"field input: {path} must start with header z1,z2,y1,y2")
    try:
        data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"field input: malformed row in {path}: {exc}") from None
    if data.shape[0] == 0:
        raise ConfigError(f"field input: {path} has no rows")
    if not np.all(np.isin(data[:, 2:], (0.0, 1.0))):
        raise ConfigError(f"field input: outcomes in {path} must be 0 or 1")
    return data


def _oracle_and_cfg(cfg: dict, blk: str):
    path = cfg[blk]["input"]
    tol = _num(cfg, "numeric.tol", positive=True)
    try:
        if path is None:
            lc = LimitConfig(L=_num(cfg, "numeric.L"), grid_step=_num(cfg, "numeric.grid_step"),
                             fd_step=_num(cfg, "numeric.fd_step"))
            return exact_oracle(_dop(cfg, _theta(cfg)), min(tol, 1e-12)), lc, True
        bw = _num(cfg, f"{blk}.bandwidth", positive=True)
        oracle = binned_oracle(read_dataset(path), bw)
        # kernel estimates are not monotone at the noise level; isotonize silently
        lc = LimitConfig(L=_num(cfg, "numeric.L"), grid_step=max(_num(cfg, "numeric.grid_step"), 0.05),
                         fd_step=0.1, monotone_tol=1.0)
        return oracle, lc, False
    except ConfigError as exc:
        raise _field_error("numeric" if "L " in str(exc) else blk, exc) from None


def cmd_identify(cfg: dict) -> list[Table]:
    oracle, lc, exact = _oracle_and_cfg(cfg, "identify")
    want = cfg["identify"]["rho"]
    want_rho = exact if want is None else _flag(cfg, "identify.rho")
    f_e1 = None
    res = identify(oracle, lc, want_rho=want_rho, f_e1=f_e1,
                   seed=_num(cfg, "numeric.seed", int, nonneg=True))
    tab = Table("identified.csv", ["parameter", "value", "status"])
    for k in (0, 1):
        tab.add(f"beta_{k + 1}", res.beta_hat[k].value, res.beta_hat[k].status)
    for k in (0, 1):
        tab.add(f"location_{k + 1}", res.delta_hat[k].value, res.delta_hat[k].status)
    for a in res.alpha_hats:
        tab.add(a.descriptor, a.value, a.status)
    if res.rho_hat is not None:
        tab.add("rho", res.rho_hat.value, res.rho_hat.status)
    tab.add("t_1", res.t_stats[0], "statistic")
    tab.add("t_2", res.t_stats[1], "statistic")
    tab.add("concept_class", None, res.concept_class)
    cdf = Table("marginal_cdf.csv", ["player", "index", "F"])
    for k in (0, 1):
        m = res.F_hat[k]
        step = max(1, len(m.t) // 400)
        for t, f in zip(m.t[::step], m.F[::step]):
            cdf.add(k + 1, float(t), float(f))
    out = [tab, cdf]
    if want_rho:
        tau, psi = psi_profile(oracle, lc)
        prof = Table("psi_profile.csv", ["tau", "psi"])
        for t, p in zip(tau, psi):
            prof.add(float(t), float(p))
        out.append(prof)
    return out


def cmd_discern(cfg: dict) -> list[Table]:
    oracle, lc, _ = _oracle_and_cfg(cfg, "discern")
    res = identify(oracle, lc, want_rho=False, seed=_num(cfg, "numeric.seed", int, nonneg=True))
    tab = Table("discern.csv", ["t_1", "t_2", "tol_1", "tol_2", "tol_diff", "concept_class"])
    tab.add(res.t_stats[0], res.t_stats[1], *res.t_tol, res.concept_class)
    return [tab]


def nash_demo(grid: int = 20, tol: float = 1e-10, hull_tol: float = 1e-6) -> dict:
    """Compare mixed-equilibrium play on the box of the entry game with its
    box average.

    Returns the per-outcome box integrals of both rules and, on a
    ``grid x grid`` lattice of interior box points, whether each rule's
    prediction lies in the convex hull of the equilibria there.
    """
    theta = Theta(((0.0, -1.0), (0.0, -1.0)))
    h = DistributionOfPlay(theta, Concept.NASH, SelectionSpec("fixed_weights", (0.0, 0.0, 1.0)))
    hp = build_averaged_dop(theta, h, tol)
    box = theta.box()

    def density(x, y):
        return std_normal_pdf(x) * std_normal_pdf(y)

    ints = []
    for rule in (h, hp):
        row = []
        for k in range(4):
            def f(x, y, rule=rule, k=k):
                p, _ = evaluate_many(rule, np.ravel(x), np.ravel(y))
                return (p[:, k] * density(np.ravel(x), np.ravel(y))).reshape(np.shape(x))
            row.append(quad2d(f, box, tol))
        ints.append(row)
    pts = []
    u = (np.arange(grid) + 0.5) / grid
    for a in box.lo1 + (box.hi1 - box.lo1) * u:
        for b in box.lo2 + (box.hi2 - box.lo2) * u:
            v = IndexPair(float(a), float(b))
            acc_h = nash_hull_membership(theta, v, evaluate(h, v), hull_tol)
            acc_hp = nash_hull_membership(theta, v, evaluate(hp, v), hull_tol)
            pts.append((v.v1, v.v2, acc_h, acc_hp))
    return {"integral_h": ints[0], "integral_hprime": ints[1], "points": pts}


def cmd_nash_demo(cfg: dict) -> list[Table]:
    grid = _num(cfg, "nash-demo.grid", int, positive=True)
    res = nash_demo(grid, _num(cfg, "numeric.tol", positive=True),
                    _num(cfg, "nash-demo.hull_tol", positive=True))
    summ = Table("nash_demo.csv", ["outcome", "integral_h", "integral_hprime", "abs_diff"])
    for k, y in enumerate(OUTCOMES):
        a, b = res["integral_h"][k], res["integral_hprime"][k]
        summ.add(f"{y[0]}{y[1]}", a, b, abs(a - b))
    pts = Table("nash_demo_grid.csv", ["v1", "v2", "h_in_hull", "hprime_in_hull"])
    for row in res["points"]:
        pts.add(*row)
    return [summ, pts]


_HANDLERS: dict[str, Callable[[dict], list[Table]]] = {
    "probabilities": cmd_probabilities,
    "equivalence": cmd_equivalence,
    "policy-targeted": cmd_policy_targeted,
    "policy-lumpsum": cmd_policy_lumpsum,
    "simulate": cmd_simulate,
    "identify": cmd_identify,
    "discern": cmd_discern,
    "nash-demo": cmd_nash_demo,
}


def run(cfg: dict) -> dict[str, str]:
    """Execute a resolved configuration and return ``{file name: text}``
    without touching the file system."""
    digest = config_hash(cfg)
    tables = _HANDLERS[cfg["command"]](cfg)
    return {t.name: t.render(digest) for t in tables}


def main(argv: Optional[list[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = resolve_config(argv)
        files = run(cfg)
        _write_outputs(str(cfg["io"]["out"]), files)
    except ConfigError as exc:
        print(f"discern-lab: config error: {exc}", file=sys.stderr)
        return 1
    except NumericFailure as exc:
        print(f"discern-lab: numeric failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 2
    for name in files:
        print(os.path.join(str(cfg["io"]["out"]), name))
    return 0


if __name__ == "__main__":
    sys.exit(main())
