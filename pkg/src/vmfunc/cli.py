"""Command-line experiment runner.

Subcommands mirror the experiment kinds one to one:

    vmfunc deriv-check --config cfg.toml [--seed N] [--threads N] [--out DIR]
    vmfunc clt-run     --config cfg.toml ...
    vmfunc enumerate   --config cfg.toml ...
    vmfunc bounds      --config cfg.toml ...

Each run writes <name>.csv and <name>.json under the output directory.
CSV is a deterministic projection of the JSON run record: UTF-8, comma
separator, LF line endings, full round-trip float formatting, so the same
config and seed reproduce identical bytes.  Exit codes: 0 success, 1 usage
or config error, 2 a failed bound or tolerance.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (
    BoundMargin,
    clt_experiment,
    enumerate_arithmetic,
    frequency_bounds_check,
    ibp_bound_2d,
    law_sup_distance,
    remainder_bound_trend,
    simulate_arithmetic,
    weighted_deviation_check,
)
from .collectives import CollectiveSequence, Repartition, draw_experiment
from .config import (
    BoundsConfig,
    CltRunConfig,
    DerivCheckConfig,
    EnumerateConfig,
    FrequencySpec,
    IbpSpec,
    TrendSpec,
    WeightedDeviationSpec,
    parse_config,
)
from .errors import ConfigError, VmfuncError
from .streams import StreamId
from .vmcalc import derivative_consistency

DERIV_TOLERANCES = {1: 1e-6, 2: 1e-5}

CLT_COLUMNS = ("n", "replications", "ks_distance", "mean_abs_remainder",
               "h_n", "s_n_sq", "var_B_n")


@dataclass
class RunRecord:
    """Everything a run produced; the JSON sidecar serializes this."""

    schema: str
    kind: str
    name: str
    config_path: str
    config_digest: str
    library_version: str
    seed: int
    threads: int
    columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    failed: bool = False
    wall_clock_s: float = 0.0


# ---------------------------------------------------------------------------
# emission


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_bytes(columns, rows) -> bytes:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_format_cell(row[c]) for c in columns))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (str, int, bool)) or obj is None:
        return obj
    return str(obj)


def emit_report(record: RunRecord, out_dir: Path) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{record.name}.csv"
    json_path = out_dir / f"{record.name}.json"
    csv_path.write_bytes(csv_bytes(record.columns, record.rows))
    payload = {
        "schema": record.schema,
        "kind": record.kind,
        "name": record.name,
        "config_path": record.config_path,
        "config_digest": record.config_digest,
        "library_version": record.library_version,
        "seed": record.seed,
        "threads": record.threads,
        "columns": list(record.columns),
        "rows": _jsonable(record.rows),
        "diagnostics": _jsonable(record.diagnostics),
        "failed": record.failed,
        "wall_clock_s": record.wall_clock_s,
    }
    json_path.write_bytes(
        (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")
    )
    return csv_path, json_path


def _margin_row(m: BoundMargin, check_type: str) -> dict:
    return {
        "name": m.name,
        "type": check_type,
        "lhs": m.lhs,
        "rhs": m.rhs,
        "std_error": m.std_error,
        "passed": m.passed,
        "note": m.note,
    }


# ---------------------------------------------------------------------------
# runners


def _run_deriv(cfg: DerivCheckConfig, record: RunRecord):
    rows = derivative_consistency(
        pairs=cfg.pairs,
        stream=StreamId(cfg.seed),
        atom_range=(cfg.atom_low, cfg.atom_high),
    )
    for r in rows:
        tol = DERIV_TOLERANCES[r.order]
        record.rows.append({
            "functional": r.functional,
            "order": r.order,
            "pairs": r.pairs,
            "max_rel_error": r.max_rel_error,
            "tolerance": tol,
            "passed": r.max_rel_error <= tol,
        })
    record.failed = any(not row["passed"] for row in record.rows)
    record.diagnostics["worst_by_order"] = {
        str(order): max(r.max_rel_error for r in rows if r.order == order)
        for order in sorted({r.order for r in rows})
    }


def _normalizer_summary(norm) -> dict:
    return {
        "h_n": norm.h_n,
        "s_n_sq": norm.s_n_sq,
        "epsilon": norm.epsilon,
        "lyapunov_ratio": norm.lyapunov_ratio,
        "lyapunov_classic": norm.lyapunov_classic,
        "methods": sorted({p.method for p in norm.per_collective}),
    }


def _run_clt(cfg: CltRunConfig, record: RunRecord):
    grid = None
    if cfg.u_grid is not None:
        grid = np.linspace(cfg.u_grid.lo, cfg.u_grid.hi, cfg.u_grid.points)
    reports = []
    for n in cfg.schedule:
        rep = clt_experiment(
            cfg.functional, cfg.sequence, n, cfg.replications,
            StreamId(cfg.seed), centering=cfg.centering, epsilon=cfg.epsilon,
            budget=cfg.budget, u_grid=grid, workers=record.threads,
        )
        reports.append(rep)
        record.rows.append({
            "n": rep.n,
            "replications": rep.replications,
            "ks_distance": rep.ks_distance,
            "mean_abs_remainder": rep.mean_abs_remainder,
            "h_n": rep.normalizer.h_n,
            "s_n_sq": rep.normalizer.s_n_sq,
            "var_B_n": rep.var_b_n,
        })
    record.diagnostics["per_n"] = [
        {
            "n": rep.n,
            "center": rep.center,
            "u_grid": list(rep.u_grid),
            "ecdf": list(rep.ecdf),
            "normalizer": _normalizer_summary(rep.normalizer),
            "bound_margins": [_margin_row(m, "clt") for m in rep.bound_margins],
        }
        for rep in reports
    ]
    record.failed = any(rep.failed for rep in reports)


def _run_enumerate(cfg: EnumerateConfig, record: RunRecord):
    enum = enumerate_arithmetic(cfg.cell_probs, f=cfg.f)
    margins = list(frequency_bounds_check(enum))
    for cell in range(enum.cells):
        var_bound = enum.p_bar[cell] * (1 - enum.p_bar[cell]) / enum.n
        record.rows.append({
            "cell": cell,
            "p_bar": float(enum.p_bar[cell]),
            "rho_mean": float(enum.rho_mean[cell]),
            "rho_var": float(enum.rho_var[cell]),
            "var_bound": float(var_bound),
            "bound_holds": enum.rho_var[cell] <= var_bound,
        })
    record.diagnostics["exact"] = {
        "n": enum.n,
        "cells": enum.cells,
        "p_bar": [str(x) for x in enum.p_bar],
        "rho_mean": [str(x) for x in enum.rho_mean],
        "rho_var": [str(x) for x in enum.rho_var],
        "mean_sq_deviation": str(enum.mean_sq_deviation),
        "support_size": len(enum.counts),
    }
    if enum.f_values is not None:
        record.diagnostics["f_law"] = {
            "values": list(enum.f_values),
            "probabilities": list(enum.f_probs),
        }
    if cfg.mc_replications > 0:
        sample = simulate_arithmetic(
            [[float(p) for p in row] for row in cfg.cell_probs],
            cfg.f, cfg.mc_replications, StreamId(cfg.seed),
        )
        sup = law_sup_distance(sample, enum.f_values, enum.f_probs)
        tol = 4.0 * math.sqrt(math.log(2000.0) / (2.0 * cfg.mc_replications))
        margins.append(BoundMargin(
            name="mc-law-sup-distance",
            lhs=sup,
            rhs=tol,
            std_error=0.0,
            passed=sup <= tol,
            note=f"band 4 sqrt(ln 2000 / 2R) at R = {cfg.mc_replications}",
        ))
    record.diagnostics["margins"] = [_margin_row(m, "frequency") for m in margins]
    record.failed = any(not m.passed for m in margins)


def _run_bounds(cfg: BoundsConfig, record: RunRecord):
    stream = StreamId(cfg.seed)
    margins: list[tuple[BoundMargin, str]] = []
    trends = []
    for idx, check in enumerate(cfg.checks):
        sub = stream.child(idx)
        if isinstance(check, WeightedDeviationSpec):
            m = weighted_deviation_check(
                check.psi, check.sequence, check.n, check.replications,
                sub, check.grid, name=check.name,
            )
            margins.append((m, "weighted-deviation"))
        elif isinstance(check, IbpSpec):
            drawn = draw_experiment(
                CollectiveSequence.iid(check.model), check.sample_n, sub
            )
            m = ibp_bound_2d(
                check.alpha, Repartition(drawn.points), check.model,
                check.grid, name=check.name,
            )
            margins.append((m, "ibp"))
        elif isinstance(check, FrequencySpec):
            enum = enumerate_arithmetic(check.cell_probs)
            for m in frequency_bounds_check(enum):
                margins.append((
                    BoundMargin(f"{check.name}:{m.name}", m.lhs, m.rhs,
                                m.std_error, m.passed, m.note),
                    "frequency",
                ))
        else:
            assert isinstance(check, TrendSpec)
            rows = remainder_bound_trend(
                check.psi, check.functional, check.sequence, check.schedule,
                check.grid, epsilon=cfg.epsilon, budget=cfg.budget,
                stream=sub,
            )
            trends.append({"name": check.name, "rows": rows})
    for m, ctype in margins:
        record.rows.append(_margin_row(m, ctype))
    if trends:
        record.diagnostics["trends"] = trends
    record.failed = any(not m.passed for m, _ in margins)


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="vmfunc",
        description="Statistical functional calculus experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, help_text in (
        ("deriv-check", "influence derivatives against the numeric oracle"),
        ("clt-run", "asymptotic normality replication experiment"),
        ("enumerate", "exact law of cell frequencies and functions of them"),
        ("bounds", "deviation, integration-by-parts and frequency bounds"),
    ):
        p = sub.add_parser(cmd, help=help_text)
        p.add_argument("--config", required=True, help="TOML config path")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--threads", type=int,
                       help="worker processes for replication loops")
        p.add_argument("--out", help="override the output directory")
    return parser


def _resolve_threads(flag: int | None, cfg_threads: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("VMFUNC_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"VMFUNC_THREADS must be an integer, got {env!r}") from exc
    if cfg_threads is not None:
        return cfg_threads
    return os.cpu_count() or 1


def _resolve_out(flag: str | None, cfg_dir: str) -> Path:
    if flag is not None:
        return Path(flag)
    env = os.environ.get("VMFUNC_OUT")
    if env:
        return Path(env)
    return Path(cfg_dir)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"vmfunc: {exc}", file=sys.stderr)
        return 1
    started = time.perf_counter()
    try:
        cfg = parse_config(args.config, expected_kind=args.command)
        seed = args.seed if args.seed is not None else cfg.seed
        threads = _resolve_threads(args.threads, cfg.threads)
        out_dir = _resolve_out(args.out, cfg.out_dir)
        if args.seed is not None:
            cfg = type(cfg)(**{**cfg.__dict__, "seed": seed})
        columns = {
            "deriv-check": ("functional", "order", "pairs", "max_rel_error",
                            "tolerance", "passed"),
            "clt-run": CLT_COLUMNS,
            "enumerate": ("cell", "p_bar", "rho_mean", "rho_var", "var_bound",
                          "bound_holds"),
            "bounds": ("name", "type", "lhs", "rhs", "std_error", "passed", "note"),
        }[args.command]
        record = RunRecord(
            schema="v1",
            kind=args.command,
            name=cfg.name,
            config_path=str(args.config),
            config_digest=hashlib.sha256(Path(args.config).read_bytes()).hexdigest(),
            library_version=__version__,
            seed=seed,
            threads=threads,
            columns=columns,
        )
        runner = {
            "deriv-check": _run_deriv,
            "clt-run": _run_clt,
            "enumerate": _run_enumerate,
            "bounds": _run_bounds,
        }[args.command]
        runner(cfg, record)
        record.wall_clock_s = time.perf_counter() - started
        csv_path, json_path = emit_report(record, out_dir)
    except (ConfigError, VmfuncError, OSError) as exc:
        print(f"vmfunc: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {csv_path} and {json_path}")
    if record.failed:
        failed_rows = [r for r in record.rows if r.get("passed") is False]
        for row in failed_rows:
            label = row.get("name") or row.get("functional") or row.get("cell")
            print(f"FAILED: {label}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
