"""Command-line front end.

Subcommands: solve, verify, profit-curve, optimize-fee, simulate.
Exit codes: 0 success, 2 input/validation error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import exchange, oracle
from .equilibrium import solve
from .errors import ConfigurationError, ImpactEqError, OptimalityViolation, ValidationError
from .exchange import TargetPrior
from .model import MarketSpec, TargetPair, deviations, validate
from .simulate import DEFAULT_STEPS, simulate, turnover_path

DEFAULT_SEED = 12345
EXIT_OK, EXIT_INPUT, EXIT_VERIFY = 0, 2, 3

PAIR_COMMANDS = ("solve", "verify", "simulate")


@dataclass
class RunConfig:
    spec: MarketSpec
    targets: Optional[TargetPair] = None
    prior: Optional[TargetPrior] = None
    lam: Optional[float] = None
    search: Optional[Tuple[float, float]] = None
    seed: int = DEFAULT_SEED
    out: Optional[str] = None
    grid: Optional[int] = None
    samples: int = 100_000
    method: str = "quadrature"
    trials: int = 1000
    steps: int = DEFAULT_STEPS
    threads: int = 1
    c1_values: Optional[Tuple[float, ...]] = None

    def to_dict(self) -> dict:
        d = self.spec.to_dict()
        if self.targets is not None:
            d["targets"] = {"a1": self.targets.a1, "a2": self.targets.a2}
        elif self.prior is not None:
            d["targets"] = {"distribution": self.prior.to_dict()}
        fee = {}
        if self.lam is not None:
            fee["lambda"] = self.lam
        if self.search is not None:
            fee["search"] = {"lo": self.search[0], "hi": self.search[1]}
        d["fee"] = fee
        d["rng"] = {"seed": self.seed}
        run = {
            "samples": self.samples,
            "method": self.method,
            "trials": self.trials,
            "steps": self.steps,
            "threads": self.threads,
        }
        if self.grid is not None:
            run["grid"] = self.grid
        if self.out is not None:
            run["out"] = self.out
        if self.c1_values is not None:
            run["c1_values"] = list(self.c1_values)
        d["run"] = run
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            spec = MarketSpec.from_dict(d)
            t = d.get("targets", {}) or {}
            targets = prior = None
            if "distribution" in t:
                prior = TargetPrior.from_dict(t["distribution"])
            elif "a1" in t or "a2" in t:
                targets = TargetPair(float(t["a1"]), float(t["a2"]))
            fee = d.get("fee", {}) or {}
            search = fee.get("search")
            run = d.get("run", {}) or {}
            c1s = run.get("c1_values")
            return cls(
                spec=spec,
                targets=targets,
                prior=prior,
                lam=float(fee["lambda"]) if fee.get("lambda") is not None else None,
                search=(float(search["lo"]), float(search["hi"])) if search else None,
                seed=int((d.get("rng", {}) or {}).get("seed", DEFAULT_SEED)),
                out=run.get("out"),
                grid=int(run["grid"]) if run.get("grid") is not None else None,
                samples=int(run.get("samples", 100_000)),
                method=str(run.get("method", "quadrature")),
                trials=int(run.get("trials", 1000)),
                steps=int(run.get("steps", DEFAULT_STEPS)),
                threads=int(run.get("threads", 1)),
                c1_values=tuple(float(c) for c in c1s) if c1s is not None else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ImpactEqError):
                raise
            raise ConfigurationError(f"malformed config: {exc!r}") from exc


def load_config(path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        return yaml.safe_load(text)
    return json.loads(text)


def _fmt(x: float) -> str:
    if isinstance(x, float) and not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(float(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(float(x)) for x in row])
    return buf.getvalue()


def _emit(cfg: RunConfig, name: str, text: str, stdout: bool = True):
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        Path(cfg.out, name).write_text(text if text.endswith("\n") else text + "\n")
    if stdout:
        print(text)


def _need_pair(cfg: RunConfig, cmd: str):
    if cfg.targets is None:
        raise ConfigurationError(f"'{cmd}' needs point targets (targets.a1, targets.a2)")
    if cfg.lam is None:
        raise ConfigurationError(f"'{cmd}' needs a fee rate (fee.lambda or --lambda)")
    return deviations(cfg.targets)


def _need_prior(cfg: RunConfig, cmd: str) -> TargetPrior:
    if cfg.prior is not None:
        return cfg.prior
    if cfg.targets is not None:
        return TargetPrior(exchange.point(cfg.targets.a1), exchange.point(cfg.targets.a2))
    raise ConfigurationError(f"'{cmd}' needs targets.distribution")


def cmd_solve(cfg: RunConfig, args) -> int:
    dev = _need_pair(cfg, "solve")
    sol = solve(cfg.spec, dev, cfg.lam)
    summary = {"a1": dev.a1, "a2": dev.a2, "A1": dev.A1, **sol.summary()}
    _emit(cfg, "summary.json", dumps(summary))
    if cfg.out:
        times = np.linspace(0.0, cfg.spec.T, (cfg.grid or 1024) + 1)
        rows = [(t, *sol.holdings(t), sol.gamma_tilde(t)) for t in times]
        _emit(cfg, "holdings.csv", _csv(["t", "theta1", "theta2", "gamma_tilde"], rows), stdout=False)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    dev = _need_pair(cfg, "verify")
    spec, lam = cfg.spec, cfg.lam
    sol = solve(spec, dev, lam)
    if getattr(args, "inject_fault", False):
        sol = oracle.CorruptedSolution.from_solution(sol, shift=max(1.0, abs(dev.A1)))
    n = spec.n
    N = cfg.grid or 64
    checks = []

    def check(name, value, limit):
        checks.append({"check": name, "value": value, "limit": limit, "passed": bool(value <= limit)})

    for i in (1, 2):
        try:
            rep = oracle.verify_optimality(
                spec, dev, lam, i=i, N=N, trials=cfg.trials, seed=cfg.seed, solution=sol
            )
        except OptimalityViolation as exc:
            rep = exc.report
        check(f"optimality_agent{i}_worst_gap", rep.worst_gap, rep.tol)
        check(f"optimality_agent{i}_ascent_gain", rep.ascent_gain, rep.tol)
    check("clearing", oracle.verify_clearing(sol, 1024), 1e-12 * n)
    check("drift_consistency", oracle.verify_drift_consistency(sol, 1024), 1e-10)
    ratio, pinned = oracle.verify_adjoint(sol, 256)
    check("adjoint_bound", ratio, 1.0 + 1e-12)
    check("adjoint_pinned", pinned, 1e-10)

    bundle = simulate(spec, dev, lam, cfg.steps, cfg.seed, solution=sol)
    money, cons = oracle.verify_walras(bundle)
    scale = n * max(1.0, float(np.max(np.abs(bundle.S_hat))))
    check("walras_money", money, 1e-10 * scale)
    check("walras_consumption", cons, 1e-10 * scale)
    check("terminal_price_is_dividend", abs(bundle.S_hat[-1] - bundle.dividend), 0.0)

    ok = all(c["passed"] for c in checks)
    _emit(cfg, "verify.json", dumps({"passed": ok, "checks": checks}))
    return EXIT_OK if ok else EXIT_VERIFY


def _fee_grid(cfg: RunConfig, spec: MarketSpec, prior: TargetPrior):
    lo, hi = cfg.search if cfg.search is not None else exchange.auto_range(spec, prior, cfg.seed)
    return np.linspace(lo, hi, cfg.grid or 200)


def _c1_specs(cfg: RunConfig):
    if cfg.c1_values is None:
        return [cfg.spec]
    return [validate(replace(cfg.spec, c1=c)) for c in cfg.c1_values]


def cmd_profit_curve(cfg: RunConfig, args) -> int:
    prior = _need_prior(cfg, "profit-curve")
    rows = []
    for spec in _c1_specs(cfg):
        lams = _fee_grid(cfg, spec, prior)
        curve = exchange.profit_curve(spec, prior, lams, cfg.method, cfg.seed, cfg.samples, cfg.threads)
        rows.extend(((spec.c1,) if cfg.c1_values is not None else ()) + r for r in curve.rows())
    header = (["c1"] if cfg.c1_values is not None else []) + ["lambda", "expected_profit", "stderr"]
    _emit(cfg, "profit_curve.csv", _csv(header, rows))
    return EXIT_OK


def cmd_optimize_fee(cfg: RunConfig, args) -> int:
    prior = _need_prior(cfg, "optimize-fee")
    results = []
    for spec in _c1_specs(cfg):
        opt = exchange.optimal_fee(
            spec, prior, cfg.search, cfg.method, cfg.seed, cfg.samples, coarse_points=cfg.grid or 200
        )
        results.append({"c1": spec.c1, **opt.to_dict()})
    _emit(cfg, "fee_optimum.json", dumps(results[0] if cfg.c1_values is None else results))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    dev = _need_pair(cfg, "simulate")
    bundle = simulate(cfg.spec, dev, cfg.lam, cfg.steps, cfg.seed)
    _emit(cfg, "paths.csv", bundle.to_csv(), stdout=not cfg.out)
    if cfg.out:
        to1, to2 = turnover_path(bundle)
        print(dumps({"dividend": bundle.dividend, "S_hat_0": bundle.S_hat[0],
                     "turnover1": to1[-1], "turnover2": to2[-1], "seed": cfg.seed}))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "profit-curve": cmd_profit_curve,
    "optimize-fee": cmd_optimize_fee,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON or YAML run configuration")
    common.add_argument("--seed", type=int, help=f"RNG seed (default {DEFAULT_SEED})")
    common.add_argument("--out", help="directory for JSON/CSV outputs")
    common.add_argument("--lambda", dest="lam", type=float, help="fee rate per share traded")
    common.add_argument("--grid", type=int, help="grid size (verify cells, fee grid points, holdings rows)")
    common.add_argument("--samples", type=int, help="Monte Carlo sample count")
    common.add_argument("--method", choices=("mc", "quadrature"))
    common.add_argument("--trials", type=int, help="random challengers per agent in verify")
    common.add_argument("--steps", type=int, help="simulation time steps")
    common.add_argument("--threads", type=int, help="worker threads for fee-grid evaluation")
    common.add_argument("--c1", type=float, nargs="+", dest="c1_values", help="price-impact levels to sweep")
    common.add_argument("--lambda-range", type=float, nargs=2, metavar=("LO", "HI"), dest="search")
    common.add_argument("--dump-config", action="store_true", help="print the effective config and exit")

    parser = argparse.ArgumentParser(prog="impacteq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "verify":
            p.add_argument("--inject-fault", action="store_true", help="corrupt agent 1 holdings (testing)")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.from_dict(load_config(args.config))
    overrides = {}
    for key in ("seed", "out", "lam", "grid", "samples", "method", "trials", "steps", "threads"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    if args.c1_values is not None:
        overrides["c1_values"] = tuple(args.c1_values)
    if args.search is not None:
        overrides["search"] = tuple(args.search)
    return replace(cfg, **overrides)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.dump_config:
            print(dumps(cfg.to_dict()))
            return EXIT_OK
        validate(cfg.spec)
        return COMMANDS[args.command](cfg, args)
    except ValidationError as exc:
        print(dumps({"error": "validation", "violations": exc.violations}), file=sys.stderr)
        return EXIT_INPUT
    except (ConfigurationError, OSError, json.JSONDecodeError) as exc:
        print(dumps({"error": "input", "message": str(exc)}), file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
