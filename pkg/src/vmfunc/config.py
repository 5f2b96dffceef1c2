"""Experiment configuration: schema v1 parsing, validation, object building.

Configs are TOML.  Validation is strict: unknown keys are errors that name
the key and its section, so a typo never silently changes an experiment.
The builders return plain library objects (functionals, sequences, grid
specs); nothing in here performs computation.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

try:
    import tomllib
except ImportError:  # python 3.10
    import tomli as tomllib

from .asymptotics import Alpha2D, ConstantWeight, GridSpec, RadialMajorant
from .collectives import (
    CollectiveSequence,
    DiscreteCells,
    DistributionModel,
    Exponential,
    FgmCopula2D,
    Gaussian,
    IndependentProduct,
    StudentT,
    Uniform,
)
from .errors import ConfigError, VmfuncError
from .functionals import (
    ArithmeticFunction,
    CentralMoment,
    Correlation,
    DoubleIntegral,
    Functional,
    Linear,
    PairPolynomial,
    RawMoment,
    linear_arithmetic,
    quadratic_arithmetic,
)
from .polynomials import Polynomial

SCHEMA_VERSION = "v1"
KINDS = ("deriv-check", "clt-run", "enumerate", "bounds")

__all__ = [
    "SCHEMA_VERSION",
    "KINDS",
    "UGrid",
    "DerivCheckConfig",
    "CltRunConfig",
    "EnumerateConfig",
    "BoundsConfig",
    "WeightedDeviationSpec",
    "IbpSpec",
    "FrequencySpec",
    "TrendSpec",
    "parse_config",
]


# ---------------------------------------------------------------------------
# validation helpers


def _check_keys(table: dict, section: str, allowed: set[str]):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in [{section}]")


def _need(table: dict, section: str, key: str):
    if key not in table:
        raise ConfigError(f"missing required key '{key}' in [{section}]")
    return table[key]


def _as_int(value, section: str, key: str, minimum: int | None = None) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"key '{key}' in [{section}] must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"key '{key}' in [{section}] must be >= {minimum}")
    return value


def _as_float(value, section: str, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"key '{key}' in [{section}] must be a number")
    return float(value)


def _as_str(value, section: str, key: str, choices: tuple[str, ...] | None = None) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"key '{key}' in [{section}] must be a string")
    if choices is not None and value not in choices:
        raise ConfigError(
            f"key '{key}' in [{section}] must be one of {', '.join(choices)}"
        )
    return value


def _as_table(value, section: str, key: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"key '{key}' in [{section}] must be a table")
    return value


def _int_list(value, section: str, key: str, minimum: int = 1) -> tuple[int, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"key '{key}' in [{section}] must be a nonempty list")
    return tuple(_as_int(v, section, key, minimum) for v in value)


# ---------------------------------------------------------------------------
# config dataclasses


@dataclass(frozen=True)
class UGrid:
    lo: float
    hi: float
    points: int


@dataclass(frozen=True)
class DerivCheckConfig:
    name: str
    seed: int
    out_dir: str
    threads: int | None
    pairs: int
    atom_low: int
    atom_high: int


@dataclass(frozen=True)
class CltRunConfig:
    name: str
    seed: int
    out_dir: str
    threads: int | None
    functional: Functional
    sequence: CollectiveSequence
    schedule: tuple[int, ...]
    replications: int
    epsilon: float
    budget: int
    centering: float | None
    u_grid: UGrid | None


@dataclass(frozen=True)
class EnumerateConfig:
    name: str
    seed: int
    out_dir: str
    threads: int | None
    cell_probs: tuple[tuple[Fraction, ...], ...]
    f: ArithmeticFunction | None
    mc_replications: int


@dataclass(frozen=True)
class WeightedDeviationSpec:
    name: str
    psi: object
    n: int
    replications: int
    grid: GridSpec
    sequence: CollectiveSequence


@dataclass(frozen=True)
class IbpSpec:
    name: str
    alpha: Alpha2D
    sample_n: int
    grid: GridSpec
    model: DistributionModel


@dataclass(frozen=True)
class FrequencySpec:
    name: str
    cell_probs: tuple[tuple[Fraction, ...], ...]


@dataclass(frozen=True)
class TrendSpec:
    name: str
    psi: object
    functional: Functional
    sequence: CollectiveSequence
    schedule: tuple[int, ...]
    grid: GridSpec


@dataclass(frozen=True)
class BoundsConfig:
    name: str
    seed: int
    out_dir: str
    threads: int | None
    epsilon: float
    budget: int
    checks: tuple[object, ...]


# ---------------------------------------------------------------------------
# object builders


_MARGINAL_KEYS = {
    "uniform": {"family", "lower", "upper"},
    "gaussian": {"family", "mean", "stddev"},
    "exponential": {"family", "rate"},
    "student-t": {"family", "df"},
}


def _build_marginal(tbl: dict, section: str):
    family = _as_str(_need(tbl, section, "family"), section, "family",
                     tuple(_MARGINAL_KEYS))
    _check_keys(tbl, section, _MARGINAL_KEYS[family])
    try:
        if family == "uniform":
            return Uniform(_as_float(_need(tbl, section, "lower"), section, "lower"),
                           _as_float(_need(tbl, section, "upper"), section, "upper"))
        if family == "gaussian":
            return Gaussian(_as_float(_need(tbl, section, "mean"), section, "mean"),
                            _as_float(_need(tbl, section, "stddev"), section, "stddev"))
        if family == "exponential":
            return Exponential(_as_float(_need(tbl, section, "rate"), section, "rate"))
        return StudentT(_as_float(_need(tbl, section, "df"), section, "df"))
    except (VmfuncError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"in [{section}]: {exc}") from exc


def _build_model(tbl: dict, section: str) -> DistributionModel:
    model = _as_str(_need(tbl, section, "model"), section, "model",
                    ("independent", "fgm", "cells"))
    try:
        if model == "independent":
            _check_keys(tbl, section, {"model", "marginals"})
            margs = _need(tbl, section, "marginals")
            if not isinstance(margs, list) or not margs:
                raise ConfigError(f"key 'marginals' in [{section}] must be a nonempty list")
            return IndependentProduct(tuple(
                _build_marginal(_as_table(m, section, "marginals"), f"{section}.marginals")
                for m in margs
            ))
        if model == "fgm":
            _check_keys(tbl, section, {"model", "marginals", "theta"})
            margs = _need(tbl, section, "marginals")
            if not isinstance(margs, list) or len(margs) != 2:
                raise ConfigError(
                    f"key 'marginals' in [{section}] must list exactly two marginals"
                )
            x = _build_marginal(_as_table(margs[0], section, "marginals"), f"{section}.marginals")
            y = _build_marginal(_as_table(margs[1], section, "marginals"), f"{section}.marginals")
            return FgmCopula2D(x, y, _as_float(_need(tbl, section, "theta"), section, "theta"))
        _check_keys(tbl, section, {"model", "points", "probs"})
        return DiscreteCells(points=_need(tbl, section, "points"),
                             probs=_need(tbl, section, "probs"))
    except (VmfuncError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"in [{section}]: {exc}") from exc


def _build_sequence(tbl: dict, section: str) -> CollectiveSequence:
    model = _as_str(_need(tbl, section, "model"), section, "model",
                    ("independent", "fgm", "cells", "explicit"))
    if model != "explicit":
        return CollectiveSequence.iid(_build_model(tbl, section))
    _check_keys(tbl, section, {"model", "collectives"})
    entries = _need(tbl, section, "collectives")
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"key 'collectives' in [{section}] must be a nonempty list")
    models = []
    for i, entry in enumerate(entries):
        entry = dict(_as_table(entry, section, "collectives"))
        sub = f"{section}.collectives[{i}]"
        repeat = _as_int(entry.pop("repeat", 1), sub, "repeat", 1)
        models.extend([_build_model(entry, sub)] * repeat)
    try:
        return CollectiveSequence.explicit(tuple(models))
    except (VmfuncError, ValueError) as exc:
        raise ConfigError(f"in [{section}]: {exc}") from exc


def _build_polynomial(terms, dim: int, section: str, key: str) -> Polynomial:
    if not isinstance(terms, list) or not terms:
        raise ConfigError(f"key '{key}' in [{section}] must be a nonempty list of terms")
    out: dict[tuple[int, ...], float] = {}
    for row in terms:
        if not isinstance(row, list) or len(row) != dim + 1:
            raise ConfigError(
                f"each term in '{key}' of [{section}] must be [coefficient, "
                f"{dim} exponent{'s' if dim != 1 else ''}]"
            )
        coef = _as_float(row[0], section, key)
        exps = tuple(_as_int(e, section, key, 0) for e in row[1:])
        out[exps] = out.get(exps, 0.0) + coef
    return Polynomial(dim, out)


def _build_functional(tbl: dict, section: str) -> Functional:
    kind = _as_str(_need(tbl, section, "kind"), section, "kind",
                   ("linear", "raw-moment", "central-moment", "correlation",
                    "double-integral"))
    try:
        if kind == "linear":
            _check_keys(tbl, section, {"kind", "dim", "terms"})
            dim = _as_int(_need(tbl, section, "dim"), section, "dim", 1)
            return Linear(_build_polynomial(_need(tbl, section, "terms"), dim, section, "terms"))
        if kind in ("raw-moment", "central-moment"):
            _check_keys(tbl, section, {"kind", "exponents"})
            exps = _int_list(_need(tbl, section, "exponents"), section, "exponents", 0)
            cls = RawMoment if kind == "raw-moment" else CentralMoment
            return cls(exps)
        if kind == "correlation":
            _check_keys(tbl, section, {"kind"})
            return Correlation()
        _check_keys(tbl, section, {"kind", "dim", "terms"})
        dim = _as_int(_need(tbl, section, "dim"), section, "dim", 1)
        poly = _build_polynomial(_need(tbl, section, "terms"), 2 * dim, section, "terms")
        return DoubleIntegral(PairPolynomial(poly, dim), dim)
    except (VmfuncError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"in [{section}]: {exc}") from exc


def _build_psi(tbl: dict, section: str):
    kind = _as_str(_need(tbl, section, "kind"), section, "kind", ("constant", "radial"))
    _check_keys(tbl, section, {"kind", "c"})
    c = _as_float(tbl.get("c", 1.0), section, "c")
    return ConstantWeight(c) if kind == "constant" else RadialMajorant(c)


def _build_grid(tbl: dict, section: str) -> GridSpec:
    box = _need(tbl, section, "box")
    if not isinstance(box, list) or not box or not all(
        isinstance(b, list) and len(b) == 2 for b in box
    ):
        raise ConfigError(f"key 'box' in [{section}] must be a list of [low, high] pairs")
    nodes = _as_int(tbl.get("nodes", 101), section, "nodes", 4)
    try:
        return GridSpec(tuple((float(b[0]), float(b[1])) for b in box), nodes)
    except ValueError as exc:
        raise ConfigError(f"in [{section}]: {exc}") from exc


def _build_cell_probs(tbl: dict, section: str) -> tuple[tuple[Fraction, ...], ...]:
    plain = tbl.get("cell_probs")
    rational = tbl.get("cell_probs_rational")
    if (plain is None) == (rational is None):
        raise ConfigError(
            f"[{section}] needs exactly one of 'cell_probs' or 'cell_probs_rational'"
        )
    rows = plain if plain is not None else rational
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ConfigError(f"cell probabilities in [{section}] must be a list of rows")
    out = []
    for r in rows:
        if plain is not None:
            out.append(tuple(Fraction(_as_float(x, section, "cell_probs")) for x in r))
        else:
            try:
                out.append(tuple(Fraction(str(x)) for x in r))
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(
                    f"bad rational in 'cell_probs_rational' of [{section}]: {exc}"
                ) from exc
    return tuple(out)


def _build_arithmetic(tbl: dict, section: str) -> ArithmeticFunction | None:
    lin = tbl.get("f_linear")
    quad = tbl.get("f_quadratic")
    if lin is not None and quad is not None:
        raise ConfigError(f"[{section}] allows at most one of 'f_linear' and 'f_quadratic'")
    if lin is not None:
        if not isinstance(lin, list) or not lin:
            raise ConfigError(f"key 'f_linear' in [{section}] must be a nonempty list")
        return linear_arithmetic([_as_float(x, section, "f_linear") for x in lin])
    if quad is not None:
        if not isinstance(quad, list) or not quad:
            raise ConfigError(f"key 'f_quadratic' in [{section}] must be a nonempty list")
        return quadratic_arithmetic([_as_float(x, section, "f_quadratic") for x in quad])
    return None


# ---------------------------------------------------------------------------
# per-kind assembly


_RUN_KEYS = {
    "deriv-check": {"seed", "threads"},
    "clt-run": {"seed", "threads", "replications", "schedule", "epsilon",
                "budget", "centering", "u_grid"},
    "enumerate": {"seed", "threads"},
    "bounds": {"seed", "threads", "epsilon", "budget"},
}

_TOP_KEYS = {
    "deriv-check": {"schema", "kind", "name", "output", "run", "deriv"},
    "clt-run": {"schema", "kind", "name", "output", "run", "functional", "sequence"},
    "enumerate": {"schema", "kind", "name", "output", "run", "enumerate"},
    "bounds": {"schema", "kind", "name", "output", "run", "checks"},
}


def _common(raw: dict, kind: str, default_name: str):
    _check_keys(raw, "top level", _TOP_KEYS[kind])
    name = raw.get("name", default_name)
    if not isinstance(name, str) or not name:
        raise ConfigError("key 'name' in [top level] must be a nonempty string")
    out_tbl = _as_table(raw.get("output", {}), "top level", "output")
    _check_keys(out_tbl, "output", {"dir"})
    out_dir = out_tbl.get("dir", "results")
    if not isinstance(out_dir, str):
        raise ConfigError("key 'dir' in [output] must be a string")
    run = _as_table(raw.get("run", {}), "top level", "run")
    _check_keys(run, "run", _RUN_KEYS[kind])
    seed = _as_int(_need(run, "run", "seed"), "run", "seed", 0)
    threads = run.get("threads")
    if threads is not None:
        threads = _as_int(threads, "run", "threads", 1)
    return name, seed, out_dir, threads, run


def _parse_deriv(raw: dict, default_name: str) -> DerivCheckConfig:
    name, seed, out_dir, threads, _ = _common(raw, "deriv-check", default_name)
    tbl = _as_table(raw.get("deriv", {}), "top level", "deriv")
    _check_keys(tbl, "deriv", {"pairs", "atom_low", "atom_high"})
    pairs = _as_int(tbl.get("pairs", 50), "deriv", "pairs", 1)
    lo = _as_int(tbl.get("atom_low", 3), "deriv", "atom_low", 1)
    hi = _as_int(tbl.get("atom_high", 7), "deriv", "atom_high", lo)
    return DerivCheckConfig(name, seed, out_dir, threads, pairs, lo, hi)


def _parse_clt(raw: dict, default_name: str) -> CltRunConfig:
    name, seed, out_dir, threads, run = _common(raw, "clt-run", default_name)
    functional = _build_functional(
        _as_table(_need(raw, "top level", "functional"), "top level", "functional"),
        "functional",
    )
    sequence = _build_sequence(
        _as_table(_need(raw, "top level", "sequence"), "top level", "sequence"),
        "sequence",
    )
    if functional.dim != sequence.dim:
        raise ConfigError(
            f"functional dimension {functional.dim} does not match "
            f"sequence dimension {sequence.dim}"
        )
    schedule = _int_list(_need(run, "run", "schedule"), "run", "schedule", 2)
    replications = _as_int(_need(run, "run", "replications"), "run", "replications", 2)
    epsilon = _as_float(run.get("epsilon", 1.0), "run", "epsilon")
    budget = _as_int(run.get("budget", 0), "run", "budget", 0)
    centering = run.get("centering")
    if centering is not None:
        centering = _as_float(centering, "run", "centering")
    u_grid = None
    if "u_grid" in run:
        g = _as_table(run["u_grid"], "run", "u_grid")
        _check_keys(g, "run.u_grid", {"min", "max", "points"})
        u_grid = UGrid(
            _as_float(_need(g, "run.u_grid", "min"), "run.u_grid", "min"),
            _as_float(_need(g, "run.u_grid", "max"), "run.u_grid", "max"),
            _as_int(_need(g, "run.u_grid", "points"), "run.u_grid", "points", 2),
        )
        if not u_grid.lo < u_grid.hi:
            raise ConfigError("in [run.u_grid]: min must be below max")
    return CltRunConfig(name, seed, out_dir, threads, functional, sequence,
                        schedule, replications, epsilon, budget, centering, u_grid)


def _parse_enumerate(raw: dict, default_name: str) -> EnumerateConfig:
    name, seed, out_dir, threads, _ = _common(raw, "enumerate", default_name)
    tbl = _as_table(_need(raw, "top level", "enumerate"), "top level", "enumerate")
    _check_keys(tbl, "enumerate", {"cell_probs", "cell_probs_rational", "f_linear",
                                   "f_quadratic", "mc_replications"})
    cell_probs = _build_cell_probs(tbl, "enumerate")
    f = _build_arithmetic(tbl, "enumerate")
    mc = _as_int(tbl.get("mc_replications", 0), "enumerate", "mc_replications", 0)
    if mc > 0 and f is None:
        raise ConfigError(
            "[enumerate] asks for a Monte Carlo comparison but defines no function; "
            "add 'f_linear' or 'f_quadratic'"
        )
    return EnumerateConfig(name, seed, out_dir, threads, cell_probs, f, mc)


def _parse_bounds(raw: dict, default_name: str) -> BoundsConfig:
    name, seed, out_dir, threads, run = _common(raw, "bounds", default_name)
    epsilon = _as_float(run.get("epsilon", 1.0), "run", "epsilon")
    budget = _as_int(run.get("budget", 0), "run", "budget", 0)
    entries = _need(raw, "top level", "checks")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("key 'checks' in [top level] must be a nonempty list of tables")
    checks = []
    seen_names = set()
    for i, entry in enumerate(entries):
        section = f"checks[{i}]"
        entry = _as_table(entry, "top level", "checks")
        ctype = _as_str(_need(entry, section, "type"), section, "type",
                        ("weighted-deviation", "ibp", "frequency", "trend"))
        cname = _as_str(_need(entry, section, "name"), section, "name")
        if cname in seen_names:
            raise ConfigError(f"duplicate check name '{cname}' in [{section}]")
        seen_names.add(cname)
        if ctype == "weighted-deviation":
            _check_keys(entry, section, {"type", "name", "psi", "n", "replications",
                                         "box", "nodes", "sequence"})
            checks.append(WeightedDeviationSpec(
                name=cname,
                psi=_build_psi(_as_table(_need(entry, section, "psi"), section, "psi"),
                               f"{section}.psi"),
                n=_as_int(_need(entry, section, "n"), section, "n", 1),
                replications=_as_int(_need(entry, section, "replications"),
                                     section, "replications", 2),
                grid=_build_grid(entry, section),
                sequence=_build_sequence(
                    _as_table(_need(entry, section, "sequence"), section, "sequence"),
                    f"{section}.sequence",
                ),
            ))
        elif ctype == "ibp":
            _check_keys(entry, section, {"type", "name", "alpha", "sample_n",
                                         "box", "nodes", "model"})
            poly = _build_polynomial(_need(entry, section, "alpha"), 2, section, "alpha")
            checks.append(IbpSpec(
                name=cname,
                alpha=Alpha2D.from_polynomial(poly),
                sample_n=_as_int(_need(entry, section, "sample_n"), section, "sample_n", 1),
                grid=_build_grid(entry, section),
                model=_build_model(
                    _as_table(_need(entry, section, "model"), section, "model"),
                    f"{section}.model",
                ),
            ))
        elif ctype == "frequency":
            _check_keys(entry, section, {"type", "name", "cell_probs",
                                         "cell_probs_rational"})
            checks.append(FrequencySpec(cname, _build_cell_probs(entry, section)))
        else:
            _check_keys(entry, section, {"type", "name", "psi", "functional",
                                         "sequence", "schedule", "box", "nodes"})
            checks.append(TrendSpec(
                name=cname,
                psi=_build_psi(_as_table(_need(entry, section, "psi"), section, "psi"),
                               f"{section}.psi"),
                functional=_build_functional(
                    _as_table(_need(entry, section, "functional"), section, "functional"),
                    f"{section}.functional",
                ),
                sequence=_build_sequence(
                    _as_table(_need(entry, section, "sequence"), section, "sequence"),
                    f"{section}.sequence",
                ),
                schedule=_int_list(_need(entry, section, "schedule"), section, "schedule", 1),
                grid=_build_grid(entry, section),
            ))
    return BoundsConfig(name, seed, out_dir, threads, epsilon, budget, tuple(checks))


def parse_config(path, expected_kind: str | None = None):
    """Parse and validate a TOML experiment config into a typed config.

    ``expected_kind`` (the CLI subcommand) must match the config's own
    ``kind``.  Raises ConfigError on any syntax, schema, or type problem.
    """
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML parse error: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    schema = raw.get("schema")
    if schema != SCHEMA_VERSION:
        raise ConfigError(
            f"config schema {schema!r} is not supported; expected '{SCHEMA_VERSION}'"
        )
    kind = _as_str(_need(raw, "top level", "kind"), "top level", "kind", KINDS)
    if expected_kind is not None and kind != expected_kind:
        raise ConfigError(
            f"config kind '{kind}' does not match subcommand '{expected_kind}'"
        )
    parser = {
        "deriv-check": _parse_deriv,
        "clt-run": _parse_clt,
        "enumerate": _parse_enumerate,
        "bounds": _parse_bounds,
    }[kind]
    return parser(raw, path.stem)
