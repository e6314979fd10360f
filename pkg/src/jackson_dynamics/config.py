"""Run configuration files and result CSVs.

Config files are flat ``key = value`` lines; ``#`` starts a comment and
``[section]`` headers are accepted as decoration only.  List values are
separated by whitespace or commas.  Queue numbers in config files and CSVs
are 1-based; everything in the Python API is 0-based.

Recognized keys::

    n, mu, routing_row (one line per queue), gamma | rho
    duration, warmup, seed, subrun_length, chains
    omega, pair (one line per pair: "alpha beta")
    cutoffs, boundary_mode
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ParseError
from .network import NetworkSpec

SCALAR_KEYS = {"n", "duration", "warmup", "seed", "subrun_length", "chains", "boundary_mode"}
LIST_KEYS = {"mu", "gamma", "rho", "omega", "cutoffs"}

HEADER = ["source", "alpha", "beta", "omega", "value", "stderr"]
COLLAPSE_HEADER = HEADER + ["subtracted", "norm1", "norm2"]
SOURCES = ("theory0", "theory1", "oracle", "sim")


@dataclass
class RunConfig:
    n: int
    mu: list[float]
    routing: list[list[float]]
    gamma: list[float] | None = None
    rho: list[float] | None = None
    duration: float | None = None
    warmup: float | None = None
    seed: int = 0
    subrun_length: float = 10_000.0
    chains: int = 1
    omegas: list[float] = field(default_factory=list)
    pairs: list[tuple[int, int]] = field(default_factory=list)  # 0-based
    cutoffs: list[int] | None = None
    boundary_mode: str = "blocking"

    def network(self) -> NetworkSpec:
        """The network, with the missing one of gamma / rho solved for."""
        if self.rho is not None:
            return NetworkSpec.from_rho(self.mu, self.routing, self.rho)
        return NetworkSpec.from_gamma(self.mu, self.routing, self.gamma)

    def network_unchecked(self) -> NetworkSpec:
        """Like :meth:`network` but never raises on infeasible values, so that
        :func:`jackson_dynamics.network.validate` can report them."""
        mu = np.asarray(self.mu, dtype=float)
        r = np.asarray(self.routing, dtype=float)
        if self.rho is not None:
            rho = np.asarray(self.rho, dtype=float)
            gamma = mu * rho - r.T @ (mu * rho)
        else:
            gamma = np.asarray(self.gamma, dtype=float)
            try:
                rho = np.linalg.solve(((np.eye(self.n) - r) * mu[:, None]).T, gamma)
            except np.linalg.LinAlgError:
                rho = np.full(self.n, np.nan)
        return NetworkSpec(mu=mu, routing=r, gamma=gamma, rho=rho)

    def with_overrides(self, seed=None, duration=None, omegas=None) -> "RunConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if duration is not None:
            changes["duration"] = float(duration)
        if omegas is not None:
            changes["omegas"] = sorted(float(w) for w in omegas)
        return replace(self, **changes)


def _numbers(text: str, line: int, key: str, kind=float) -> list:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    try:
        return [kind(p) for p in parts]
    except ValueError:
        raise ParseError(f"expected numbers, got {text.strip()!r}", line, key) from None


def parse_config(text: str) -> RunConfig:
    values: dict[str, tuple[int, str]] = {}
    routing: list[tuple[int, str]] = []
    pairs: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "routing_row":
            routing.append((lineno, value))
        elif key == "pair":
            pairs.append((lineno, value))
        elif key in SCALAR_KEYS | LIST_KEYS:
            if key in values:
                raise ParseError("duplicate key", lineno, key)
            values[key] = (lineno, value)
        else:
            raise ParseError("unknown key", lineno, key)

    def scalar(key, kind, default=None):
        if key not in values:
            if default is None:
                raise ParseError("missing required key", None, key)
            return default
        lineno, value = values[key]
        try:
            return kind(value)
        except ValueError:
            raise ParseError(f"bad value {value!r}", lineno, key) from None

    def numbers(key, kind=float):
        if key not in values:
            return None
        lineno, value = values[key]
        return _numbers(value, lineno, key, kind)

    n = scalar("n", int)
    if n < 1:
        raise ParseError("n must be >= 1", values["n"][0], "n")

    def check_len(key, seq, lineno):
        if seq is not None and len(seq) != n:
            raise ParseError(f"expected {n} entries, got {len(seq)}", lineno, key)

    mu = numbers("mu")
    if mu is None:
        raise ParseError("missing required key", None, "mu")
    check_len("mu", mu, values["mu"][0])
    gamma, rho = numbers("gamma"), numbers("rho")
    if gamma is not None and rho is not None:
        raise ParseError("give exactly one of gamma and rho, not both", values["rho"][0], "rho")
    if gamma is None and rho is None:
        raise ParseError("one of gamma or rho is required", None, "gamma")
    if gamma is not None:
        check_len("gamma", gamma, values["gamma"][0])
    if rho is not None:
        check_len("rho", rho, values["rho"][0])

    if not routing:
        raise ParseError("missing routing_row entries", None, "routing_row")
    if len(routing) != n:
        raise ParseError(f"expected {n} routing_row lines, got {len(routing)}", routing[-1][0], "routing_row")
    rows = []
    for lineno, value in routing:
        row = _numbers(value, lineno, "routing_row")
        if len(row) != n:
            raise ParseError(f"expected {n} entries, got {len(row)}", lineno, "routing_row")
        rows.append(row)

    pair_list = []
    for lineno, value in pairs:
        ab = _numbers(value, lineno, "pair", int)
        if len(ab) != 2 or not all(1 <= q <= n for q in ab):
            raise ParseError(f"pair needs two queue numbers in 1..{n}", lineno, "pair")
        pair_list.append((ab[0] - 1, ab[1] - 1))

    cutoffs = numbers("cutoffs", int)
    if cutoffs is not None:
        check_len("cutoffs", cutoffs, values["cutoffs"][0])
    boundary_mode = scalar("boundary_mode", str, "blocking")
    if boundary_mode not in ("blocking", "leaky"):
        raise ParseError("must be 'blocking' or 'leaky'", values["boundary_mode"][0], "boundary_mode")

    omegas = numbers("omega") or []
    return RunConfig(
        n=n,
        mu=mu,
        routing=rows,
        gamma=gamma,
        rho=rho,
        duration=scalar("duration", float, 0.0) or None,
        warmup=scalar("warmup", float, -1.0) if "warmup" in values else None,
        seed=scalar("seed", int, 0),
        subrun_length=scalar("subrun_length", float, 10_000.0),
        chains=scalar("chains", int, 1),
        omegas=sorted(omegas),
        pairs=pair_list,
        cutoffs=cutoffs,
        boundary_mode=boundary_mode,
    )


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def fmt(value) -> str:
    """17 significant digits; empty for missing values."""
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    return f"{float(value):.17g}"


def _sort_key(row):
    return (row["source"], int(row["alpha"]), int(row["beta"]), float(row["omega"]))


def write_rows(rows, header=HEADER) -> str:
    """Serialize result rows (dicts with 0-based ``alpha``/``beta``) to CSV text."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in sorted(rows, key=_sort_key):
        cells = []
        for col in header:
            v = row.get(col)
            if col == "source":
                cells.append(v)
            elif col in ("alpha", "beta"):
                cells.append(str(int(v) + 1))
            else:
                cells.append(fmt(v))
        writer.writerow(cells)
    return out.getvalue()


def read_rows(text: str) -> list[dict]:
    """Parse a result CSV back into rows with 0-based queue indices."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or reader.fieldnames[: len(HEADER)] != HEADER:
        raise ParseError(f"CSV header must start with {','.join(HEADER)}", 1)
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if rec["source"] not in SOURCES:
            raise ParseError(f"unknown source {rec['source']!r}", lineno, "source")
        try:
            row = {
                "source": rec["source"],
                "alpha": int(rec["alpha"]) - 1,
                "beta": int(rec["beta"]) - 1,
                "omega": float(rec["omega"]),
                "value": float(rec["value"]),
                "stderr": float(rec["stderr"]) if rec["stderr"] else None,
            }
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        rows.append(row)
    return rows
