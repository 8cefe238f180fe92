"""Command-line front end: ``kmt <command> ...``.

Exit codes: 0 success, 1 computation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .special import DomainError, QuadratureError

DEFAULT_SEED = 20240601


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    parameters: dict
    artifacts: list[str] = field(default_factory=list)
    seed: int | None = None
    version: str = __version__
    wall_clock: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, S) -> None:
    p.add_argument("--json", action="store_true", default=S(False), help="emit JSON on stdout")
    p.add_argument("--threads", type=int, default=S(None), help="worker cap (falls back to KMT_THREADS)")
    p.add_argument("--config", default=S(None), help="JSON file whose keys mirror flag names")
    p.add_argument("--manifest", default=S(None), help="write a run manifest here")


def build_parser(suppress: bool = False) -> argparse.ArgumentParser:
    """With ``suppress`` every default is hidden, which reveals the flags given explicitly."""
    S = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    top = argparse.ArgumentParser(prog="kmt", description="Computable KMT coupling thresholds and applications.")
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("thresholds", help="coupling threshold schedule")
    p.add_argument("--n", type=int, default=S(None))
    p.add_argument("--R", type=float, default=S(1.0))
    p.add_argument("--sigma", type=float, default=S(0.25))
    p.add_argument("--alpha", type=float, default=S(0.05))
    p.add_argument("--kind", choices=["bridge", "sum"], default=S("sum"))
    p.add_argument("--variant-beta", type=float, default=S(None), help="level weights C_l = beta^l")
    p.add_argument("--no-zeta", action="store_true", default=S(False))
    p.add_argument("--out", default=S(None))
    _common(p, S)

    p = sub.add_parser("empirical", help="unknown-sigma thresholds from a stream")
    p.add_argument("--n", type=int, default=S(None))
    p.add_argument("--R", type=float, default=S(1.0))
    p.add_argument("--alpha", type=float, default=S(0.05))
    p.add_argument("--rho", type=float, default=S(0.5))
    p.add_argument("--kind", choices=["bridge", "sum"], default=S("bridge"))
    p.add_argument("--input", default=S("-"), help="numbers, one per line or comma separated; '-' for stdin")
    p.add_argument("--out", default=S(None))
    _common(p, S)

    p = sub.add_parser("changepoint", help="online change-point detection")
    cp = p.add_subparsers(dest="action", required=True)
    q = cp.add_parser("run")
    q.add_argument("--R", type=float, default=S(1.0))
    q.add_argument("--delta", type=float, default=S(0.05))
    q.add_argument("--delta1", type=float, default=S(0.01))
    q.add_argument("--delta2", type=float, default=S(0.01))
    q.add_argument("--beta", type=float, default=S(2.0))
    q.add_argument("--grid", default=S(None), help="comma separated L_i; default i+5 up to the stream length")
    q.add_argument("--exhaustive", action="store_true", default=S(False))
    q.add_argument("--input", default=S("-"))
    _common(q, S)
    q = cp.add_parser("simulate")
    q.add_argument("--shift", default=S("0.0"), help="one shift or a comma separated list")
    q.add_argument("--ell", type=int, default=S(30))
    q.add_argument("--trials", type=int, default=S(100))
    q.add_argument("--horizon", type=int, default=S(4096))
    q.add_argument("--T-cp", dest="T_cp", type=int, default=S(2000))
    q.add_argument("--seed", type=int, default=S(None))
    q.add_argument("--estimated-sigma", action="store_true", default=S(False),
                   help="use the default variance confidence sequence instead of the known sigma")
    q.add_argument("--out", default=S(None))
    _common(q, S)

    p = sub.add_parser("hitting", help="hitting-time bounds")
    hp = p.add_subparsers(dest="action", required=True)
    q = hp.add_parser("bound")
    q.add_argument("--N", type=int, default=S(None))
    q.add_argument("--mu", type=float, default=S(None), help="drift mu_N")
    q.add_argument("--sigma", type=float, default=S(0.5))
    q.add_argument("--R", type=float, default=S(1.0))
    q.add_argument("--g", type=float, default=S(10.0))
    q.add_argument("--alpha", type=float, default=S(None), help="default 1/N")
    q.add_argument("--paths", type=int, default=S(100_000))
    q.add_argument("--seed", type=int, default=S(None))
    _common(q, S)
    q = hp.add_parser("min-n")
    q.add_argument("--mu", type=float, default=S(None), help="mu, with mu_N = mu/sqrt(N)")
    q.add_argument("--g", type=float, default=S(None))
    q.add_argument("--sigma", type=float, default=S(0.5))
    q.add_argument("--R", type=float, default=S(1.0))
    q.add_argument("--paths", type=int, default=S(100_000))
    q.add_argument("--seed", type=int, default=S(None))
    q.add_argument("--j-max", dest="j_max", type=int, default=S(24))
    q.add_argument("--out", default=S(None))
    _common(q, S)

    p = sub.add_parser("validate", help="oracle checks")
    vp = p.add_subparsers(dest="action", required=True)
    q = vp.add_parser("wasserstein")
    q.add_argument("--alphabet", default=S(None), help="comma separated support values")
    q.add_argument("--probs", default=S(None), help="comma separated probabilities (default uniform)")
    q.add_argument("--n", type=int, default=S(4))
    q.add_argument("--k", type=int, default=S(None), help="conditional index; omit for the marginal S_n")
    q.add_argument("--p", type=float, default=S(2.0))
    _common(q, S)
    q = vp.add_parser("coverage")
    q.add_argument("--n", type=int, default=S(256))
    q.add_argument("--alpha", type=float, default=S(0.1))
    q.add_argument("--trials", type=int, default=S(2000))
    q.add_argument("--seed", type=int, default=S(None))
    q.add_argument("--success-prob", dest="success_prob", type=float, default=S(0.5))
    q.add_argument("--R", type=float, default=S(1.0))
    _common(q, S)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return top


def _resolve(argv: list[str]) -> argparse.Namespace:
    """Flags > config file > defaults."""
    args = build_parser().parse_args(argv)
    if getattr(args, "config", None):
        explicit = vars(build_parser(suppress=True).parse_args(argv))
        with open(args.config) as fh:
            conf = json.load(fh)
        if not isinstance(conf, dict):
            raise UsageError("config file must hold a JSON object")
        for key, val in conf.items():
            key = key.replace("-", "_")
            if not hasattr(args, key):
                raise UsageError(f"unknown config key {key!r}")
            if key not in explicit:
                setattr(args, key, val)
    missing = [k for k, v in vars(args).items() if k in _REQUIRED.get(_cmd(args), ()) and v is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + m for m in missing)}")
    return args


_REQUIRED = {
    "thresholds": ("n",),
    "empirical": ("n",),
    "hitting bound": ("N", "mu"),
    "hitting min-n": ("mu", "g"),
    "validate wasserstein": ("alphabet",),
}


def _cmd(args) -> str:
    a = getattr(args, "action", None)
    return args.command + (f" {a}" if a else "")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _threads(args) -> int:
    t = getattr(args, "threads", None)
    if t is None:
        t = int(os.environ.get("KMT_THREADS", "1") or 1)
    if t < 1:
        raise UsageError("--threads must be positive")
    return t


def _seed(args) -> int:
    s = getattr(args, "seed", None)
    if s is None:
        s = DEFAULT_SEED
        print(f"# seed: {s}", file=sys.stderr)
    args.seed = s
    return s


def _read_numbers(path: str) -> list[float]:
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        for tok in line.split(","):
            tok = tok.strip()
            if tok:
                out.append(float(tok))
    return out


def _write(path: str | None, text: str, artifacts: list[str]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).write_text(text)
    artifacts.append(str(path))


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _floats(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


# ---------------------------------------------------------------------------
# commands


def cmd_thresholds(args, art):
    from .schedule import VariantConfig, build_bridge_schedule, build_sum_schedule
    from .wasserstein import BoundedModel

    model = BoundedModel(args.R, args.sigma)
    variant = None
    if args.variant_beta is not None or args.no_zeta:
        variant = VariantConfig(beta=args.variant_beta, zeta_enabled=not args.no_zeta)
    if args.kind == "bridge":
        s = build_bridge_schedule(args.n, model, args.alpha, variant=variant)
    else:
        s = build_sum_schedule(args.n, model, args.alpha, variant=variant)
    if args.out:
        _write(args.out, s.to_csv(), art)
    if args.json:
        print(json.dumps(_jsonable(s.to_dict())))
    elif not args.out:
        sys.stdout.write(s.to_csv())


def cmd_empirical(args, art):
    from .empirical import default_variance_cs, empirical_bridge_thresholds, empirical_sum_thresholds

    ys = _read_numbers(args.input)
    cs = default_variance_cs(args.R, args.rho * args.alpha)
    fn = empirical_bridge_thresholds if args.kind == "bridge" else empirical_sum_thresholds
    out = fn(ys, cs, args.alpha, args.rho, args.n)
    if args.json:
        print(json.dumps({"alpha": args.alpha, "rho": args.rho, "n": args.n, "kind": args.kind,
                          "rows": [asdict(r) for r in out.rows]}))
    else:
        _write(args.out, out.to_csv(), art)


def cmd_changepoint(args, art):
    from .changepoint import BlockGrid, Detector, DetectorConfig, detection_curve_csv, run_detection_experiment

    if args.action == "run":
        ys = _read_numbers(args.input)
        grid = BlockGrid(tuple(int(x) for x in args.grid.split(","))) if args.grid else BlockGrid.default(max(len(ys), 1))
        cfg = DetectorConfig(args.delta, args.delta1, args.delta2, args.beta, args.R, grid,
                             scan="exhaustive" if args.exhaustive else "geometric")
        det = Detector(cfg)
        alarm = det.run(ys[: grid.horizon])
        rec = {"alarm": alarm is not None, "s": alarm[0] if alarm else None, "t": alarm[1] if alarm else None,
               "observed": det.t}
        if args.json:
            print(json.dumps(rec))
        else:
            print(_csv(["alarm", "s", "t", "observed"], [[int(rec["alarm"]), rec["s"] or "", rec["t"] or "", det.t]]), end="")
        return
    seed = _seed(args)
    shifts = _floats(args.shift)
    sums = []
    for i, sh in enumerate(shifts):
        sums.append(run_detection_experiment(sh, args.ell, args.T_cp, args.horizon, trials=args.trials,
                                             seed=seed + i, oracle_sigma=not args.estimated_sigma))
    if args.json:
        print(json.dumps(_jsonable([{"shift": s.shift, "detection_rate": s.detection_rate, "mean_delay": s.mean_delay,
                                     "false_alarm_rate": s.false_alarm_rate, "trials": s.trials} for s in sums])))
    else:
        _write(args.out, detection_curve_csv(sums), art)


def cmd_hitting(args, art):
    from .hitting import HittingTimeProblem, hitting_bound, min_nontrivial_N

    seed = _seed(args)
    th = _threads(args)
    if args.action == "bound":
        alpha = args.alpha if args.alpha is not None else 1.0 / args.N
        prob = HittingTimeProblem(args.N, args.R, args.mu, args.sigma, args.g, alpha)
        hb = hitting_bound(prob, args.paths, seed, threads=th)
        rec = {"N": args.N, "mu_N": args.mu, "sigma": args.sigma, "R": args.R, "g": args.g, "alpha": alpha,
               "bound": hb.bound, "crossing": hb.crossing.point, "ci_halfwidth": hb.crossing.ci_halfwidth,
               "paths": args.paths, "seed": seed, "trivial": hb.trivial}
        if args.json:
            print(json.dumps(_jsonable(rec)))
        else:
            print(_csv(list(rec), [list(rec.values())]), end="")
        return
    res = min_nontrivial_N(args.mu, args.g, args.R, args.sigma, args.paths, seed, j_max=args.j_max, threads=th)
    if args.out:
        _write(args.out, _csv(["mu", "g", "min_N"], [[args.mu, args.g, res.N if res.found else ""]]), art)
    if args.json:
        print(json.dumps({"mu": args.mu, "g": args.g, "min_N": res.N, "found": res.found}))
    else:
        print(res.describe(args.j_max))


def cmd_validate(args, art):
    from .oracles import (FiniteDistribution, aggregated_conditional_wp, brute_force_marginal_wp,
                          coverage_experiment)
    from .wasserstein import BoundedModel, marginal_bound, omega_conditional

    if args.action == "wasserstein":
        vals = _floats(args.alphabet)
        probs = _floats(args.probs) if args.probs else [1 / len(vals)] * len(vals)
        dist = FiniteDistribution(vals, probs)
        lo = min(vals)
        R = max(vals) - lo
        if R <= 0:
            raise DomainError("alphabet needs at least two values")
        model = BoundedModel(R, dist.std)
        p = args.p
        if args.k is None:
            brute = brute_force_marginal_wp(dist, args.n, p)
            bound = marginal_bound(args.n, int(p), model)
        else:
            brute = aggregated_conditional_wp(dist, args.n, args.k, p)
            bound = omega_conditional(args.n, args.k, int(p), model).value
        rec = {"n": args.n, "k": args.k, "p": p, "brute_force": brute, "bound": bound, "dominated": brute <= bound}
        print(json.dumps(_jsonable(rec)))
        return
    seed = _seed(args)
    rep = coverage_experiment(args.n, args.alpha, args.trials, seed, args.success_prob, args.R)
    rec = asdict(rep)
    rec.update(exceedance_rate=rep.exceedance_rate, passed=rep.passed)
    print(json.dumps(_jsonable(rec)))


COMMANDS = {
    "thresholds": cmd_thresholds,
    "empirical": cmd_empirical,
    "changepoint": cmd_changepoint,
    "hitting": cmd_hitting,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if argv[:1] == ["replay"]:
            ns = build_parser().parse_args(argv)
            man = RunManifest.from_json(Path(ns.manifest).read_text())
            return main(man.argv)
        args = _resolve(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        print(f"kmt: usage error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"kmt: usage error: {e}", file=sys.stderr)
        return 2
    t0 = time.time()
    art: list[str] = []
    try:
        _threads(args)
        COMMANDS[args.command](args, art)
    except UsageError as e:
        print(f"kmt: usage error: {e}", file=sys.stderr)
        return 2
    except (DomainError, QuadratureError, RuntimeError, ValueError, TypeError, OSError) as e:
        print(f"kmt: error: {e}", file=sys.stderr)
        return 1
    if getattr(args, "manifest", None):
        params = {k: v for k, v in vars(args).items() if k not in ("manifest",)}
        man = RunManifest(_cmd(args), argv, _jsonable(params), art, getattr(args, "seed", None),
                          wall_clock=time.time() - t0)
        Path(args.manifest).write_text(man.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
