"""Command line front-end.

    jackson-dynamics validate --config net.cfg
    jackson-dynamics theory   --config net.cfg --out theory.csv
    jackson-dynamics oracle   --config net.cfg --out oracle.csv
    jackson-dynamics simulate --config net.cfg --out sim.csv [--workers 4]
    jackson-dynamics compare  theory.csv sim.csv --config net.cfg
    jackson-dynamics collapse sim.csv --config net.cfg

Exit codes: 0 success, 1 validation or statistical failure, 2 usage error
(bad flags or an unparseable config file).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analytics
from .config import COLLAPSE_HEADER, HEADER, RunConfig, fmt, load_config, read_rows, write_rows
from .errors import JacksonError, KeyMismatch, ParseError
from .network import validate
from .operators import CorrelationOracle, TruncationSpec
from .simulator import SimConfig, run

PRIORITY = {"sim": 3, "oracle": 2, "theory1": 1, "theory0": 0}
COMPARE_HEADER = HEADER + ["theory", "difference", "zscore", "subtracted", "norm1", "norm2"]


class UsageError(Exception):
    pass


def _require_probe(cfg: RunConfig):
    if not cfg.omegas:
        raise UsageError("no omega values (config 'omega' or --omega)")
    if not cfg.pairs:
        raise UsageError("no pairs (config 'pair')")


def cmd_validate(cfg: RunConfig, out) -> int:
    spec = cfg.network_unchecked()
    derived = "gamma" if cfg.rho is not None else "rho"
    print(f"n = {spec.n}", file=out)
    print(f"{derived} = " + " ".join(fmt(v) for v in getattr(spec, derived)), file=out)
    report = validate(spec)
    if report.ok:
        print("valid: all invariants hold", file=out)
        return 0
    for v in report:
        print(f"violation {v}", file=out)
    return 1


def theory_rows(cfg: RunConfig) -> list[dict]:
    _require_probe(cfg)
    spec = cfg.network()
    rows = []
    for a, b in cfg.pairs:
        for curve in analytics.theory_curves(spec, a, b, cfg.omegas):
            source = "theory0" if curve.provenance == "theory-order0" else "theory1"
            for w, v in zip(curve.omega, curve.value):
                rows.append(dict(source=source, alpha=a, beta=b, omega=w, value=v))
    return rows


def oracle_rows(cfg: RunConfig) -> list[dict]:
    _require_probe(cfg)
    spec = cfg.network()
    trunc = TruncationSpec(tuple(cfg.cutoffs), "blocking") if cfg.cutoffs else TruncationSpec.for_spec(spec)
    oracle = CorrelationOracle(spec, trunc)
    return [
        dict(source="oracle", alpha=a, beta=b, omega=w, value=oracle.value(a, b, w))
        for a, b in cfg.pairs
        for w in cfg.omegas
    ]


def sim_rows(cfg: RunConfig, workers: int = 1) -> list[dict]:
    _require_probe(cfg)
    if cfg.duration is None:
        raise UsageError("simulate needs a duration (config 'duration' or --duration)")
    sim = SimConfig(
        spec=cfg.network(),
        duration=cfg.duration,
        seed=cfg.seed,
        omegas=cfg.omegas,
        pairs=cfg.pairs,
        subrun_length=cfg.subrun_length,
        warmup=cfg.warmup,
        chains=cfg.chains,
    )
    result = run(sim, workers=workers)
    est, err = result.correlation()
    rows = []
    for p, (a, b) in enumerate(sim.pairs):
        for k, w in enumerate(sim.omegas):
            rows.append(dict(source="sim", alpha=a, beta=b, omega=w, value=est[p, k], stderr=err[p, k]))
    return rows


def collapse_columns(spec, row) -> dict:
    """Subtracted value and both collapse normalizations for an off-diagonal row."""
    a, b, w = row["alpha"], row["beta"], row["omega"]
    subtracted = row["value"] - spec.rho[a] * spec.rho[b] / w
    dL = spec.routing[b, a] * spec.mu[b]
    response = analytics.coupling_response(spec.mu[a], spec.rho[a], spec.mu[b], spec.rho[b], w)
    return dict(
        subtracted=subtracted,
        norm1=subtracted / dL if dL != 0 else None,
        norm2=subtracted / response,
    )


def best_rows(rows) -> dict:
    best = {}
    for row in rows:
        key = (row["alpha"], row["beta"], row["omega"])
        if key not in best or PRIORITY[row["source"]] > PRIORITY[best[key]["source"]]:
            best[key] = row
    return best


def compare_rows(cfg: RunConfig, theory: list[dict], other: list[dict]) -> list[dict]:
    spec = cfg.network()
    ref, got = best_rows(theory), best_rows(other)
    if set(ref) != set(got):
        missing = sorted(set(ref) ^ set(got))[:3]
        raise KeyMismatch(f"(alpha, beta, omega) keys differ, e.g. {missing}")
    out = []
    for key in sorted(got):
        row = dict(got[key])
        diff = row["value"] - ref[key]["value"]
        row["theory"] = ref[key]["value"]
        row["difference"] = diff
        err = row.get("stderr")
        row["zscore"] = diff / err if err else None
        if row["alpha"] != row["beta"]:
            row.update(collapse_columns(spec, row))
        out.append(row)
    return out


def collapse_rows(cfg: RunConfig, rows: list[dict]) -> list[dict]:
    spec = cfg.network()
    out = []
    for row in rows:
        if row["alpha"] == row["beta"]:
            continue
        out.append({**row, **collapse_columns(spec, row)})
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jackson-dynamics", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, csv_inputs=0):
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, help="write CSV here instead of stdout")
        p.add_argument("--seed", type=int)
        p.add_argument("--duration", type=float)
        p.add_argument("--omega", help='comma separated, e.g. "0.1,1,10"')
        return p

    common(sub.add_parser("validate", help="check a network and print derived rates"))
    common(sub.add_parser("theory", help="closed-form correlation curves"))
    common(sub.add_parser("oracle", help="exact truncated-chain correlations"))
    p = common(sub.add_parser("simulate", help="event-driven simulation"))
    p.add_argument("--workers", type=int, default=1)
    p = common(sub.add_parser("compare", help="compare a CSV with theory"))
    p.add_argument("theory_csv", type=Path)
    p.add_argument("other_csv", type=Path)
    p.add_argument("--z-max", type=float, default=3.0)
    p.add_argument("--min-pass", type=float, default=0.95,
                   help="fraction of rows with |z| <= z-max required for exit 0")
    p = common(sub.add_parser("collapse", help="type-1 / type-2 collapse of a CSV"))
    p.add_argument("input_csv", type=Path)
    return parser


def _emit(text: str, path: Path | None):
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        omegas = None
        if args.omega:
            try:
                omegas = [float(w) for w in args.omega.split(",") if w.strip()]
            except ValueError:
                raise UsageError(f"bad --omega {args.omega!r}") from None
        cfg = cfg.with_overrides(seed=args.seed, duration=args.duration, omegas=omegas)

        if args.command == "validate":
            return cmd_validate(cfg, sys.stdout)
        if args.command == "theory":
            _emit(write_rows(theory_rows(cfg)), args.out)
        elif args.command == "oracle":
            _emit(write_rows(oracle_rows(cfg)), args.out)
        elif args.command == "simulate":
            _emit(write_rows(sim_rows(cfg, args.workers)), args.out)
        elif args.command == "collapse":
            rows = read_rows(args.input_csv.read_text())
            _emit(write_rows(collapse_rows(cfg, rows), COLLAPSE_HEADER), args.out)
        elif args.command == "compare":
            theory = read_rows(args.theory_csv.read_text())
            other = read_rows(args.other_csv.read_text())
            rows = compare_rows(cfg, theory, other)
            _emit(write_rows(rows, COMPARE_HEADER), args.out)
            z = np.array([r["zscore"] for r in rows if r["zscore"] is not None])
            if z.size:
                passed = float(np.mean(np.abs(z) <= args.z_max))
                print(f"{passed:.1%} of {z.size} rows within |z| <= {args.z_max}", file=sys.stderr)
                if passed < args.min_pass:
                    return 1
        return 0
    except (UsageError, ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except JacksonError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
