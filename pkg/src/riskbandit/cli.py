"""Command-line front end.

    riskbandit run --config exp.json --out-dir results [--seed N] [--threads N]
    riskbandit oracle --config exp.json

The configuration is a single strict JSON document (unknown keys are
errors); see the README for the schema.  ``run`` writes a per-step trace CSV
and a per-horizon regret-curve CSV and prints a summary table; ``oracle``
prints the ground-truth risks and constants of the arm set.

In CSV files and printed output, replications, steps and arms are numbered
from 1.  Numbers are written with 12 significant digits and '.' as decimal
separator, independent of the locale.
"""

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .arm_models import (
    ArmModel,
    Deterministic,
    ScaledBernoulli,
    ScaledBeta,
    Uniform,
    fill_bounds,
    optimal_arm,
    oracle_constants,
)
from .errors import (
    AssumptionViolated,
    ConfigError,
    NonUniqueOptimum,
    ParseError,
    RiskBanditError,
    ValidationError,
)
from .losses import KINDS as LOSS_KINDS
from .losses import LossFunction
from .regret_lab import curve_from_simulation, loglog_slope, simulate
from .risk_measures import (
    MD_RADIUS_VARIANTS,
    BoundInputs,
    CVaR,
    Mean,
    MeanDeviation,
    RiskSpec,
    Shortfall,
)
from .rng import MASK64

THREADS_ENV = "RISKBANDIT_THREADS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_MODEL = 4

DEFAULT_DELTA = 0.1
DEFAULT_REPLICATIONS = 100
DEFAULT_TRACE = "trace.csv"
DEFAULT_CURVE = "curve.csv"

TRACE_HEADER = ("replication", "t", "arm", "cost")
CURVE_HEADER = ("n", "regret_mean", "regret_se", "bound", "decay_exponent_so_far")

# family name -> (class, required fields, optional fields)
FAMILIES = {
    "deterministic": (Deterministic, ("c",), ()),
    "uniform": (Uniform, ("a", "b"), ()),
    "scaled_beta": (ScaledBeta, ("shape1", "shape2"), ("scale",)),
    "scaled_bernoulli": (ScaledBernoulli, ("p",), ("scale",)),
}
FAMILY_NAMES = {cls: name for name, (cls, _, _) in FAMILIES.items()}

# risk kind -> (required parameters, optional parameters)
RISK_KINDS = {
    "cvar": (("alpha",), ()),
    "md": (("gamma",), ("p",)),
    "shortfall": (("loss",), ()),
    "mean": ((), ()),
}
CONSTANT_NAMES = ("M", "m_alpha", "M_l", "M_G")
TOP_KEYS = {
    "arms",
    "support_bound",
    "risk",
    "delta",
    "horizons",
    "replications",
    "seed",
    "outputs",
    "md_radius_variant",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment; ``spec`` carries delta and every bound constant."""

    arms: tuple
    spec: RiskSpec
    horizons: tuple
    replications: int = DEFAULT_REPLICATIONS
    seed: int = 0
    trace_path: str = DEFAULT_TRACE
    curve_path: str = DEFAULT_CURVE

    @property
    def delta(self):
        return self.spec.delta

    @property
    def support_bound(self):
        return self.arms[0].support_bound


# ---------------------------------------------------------------------------
# parsing


def _reject_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise ParseError(f"duplicate key {key!r}")
        out[key] = value
    return out


def _reject_constant(name):
    raise ParseError(f"non-finite number {name} is not valid JSON")


def _load_json(text):
    try:
        return json.loads(
            text, object_pairs_hook=_reject_duplicates, parse_constant=_reject_constant
        )
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None


def _expect_object(value, field):
    if not isinstance(value, dict):
        raise ValidationError(field, "expected an object")
    return value


def _check_keys(obj, field, allowed):
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        prefix = f"{field}." if field else ""
        raise ValidationError(prefix + unknown[0], "unknown key")


def _number(value, field):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(field, f"expected a number, got {value!r}")
    return float(value)


def _integer(value, field, low=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(field, f"expected an integer, got {value!r}")
    if low is not None and value < low:
        raise ValidationError(field, f"must be >= {low}, got {value}")
    return value


def _required(obj, key, field):
    if key not in obj:
        raise ValidationError(field, "missing required key")
    return obj[key]


def _parse_arm(obj, i, M):
    field = f"arms[{i}]"
    obj = _expect_object(obj, field)
    name = _required(obj, "family", f"{field}.family")
    if name not in FAMILIES:
        raise ValidationError(f"{field}.family", f"unknown family {name!r}")
    cls, required, optional = FAMILIES[name]
    _check_keys(obj, field, ("family",) + required + optional)
    params = {
        key: _number(_required(obj, key, f"{field}.{key}"), f"{field}.{key}") for key in required
    }
    params.update({k: _number(obj[k], f"{field}.{k}") for k in optional if k in obj})
    try:
        return ArmModel(cls(**params), M)
    except ValueError as exc:
        raise ValidationError(field, str(exc)) from None


def _parse_loss(value, field):
    if isinstance(value, str):
        value = {"kind": value}
    obj = _expect_object(value, field)
    kind = _required(obj, "kind", f"{field}.kind")
    if kind not in LOSS_KINDS:
        raise ValidationError(f"{field}.kind", f"unknown loss {kind!r}")
    if kind != "piecewise_linear":
        _check_keys(obj, field, ("kind",))
        return LossFunction(kind)
    _check_keys(obj, field, ("kind", "breakpoints", "slopes"))
    lists = {}
    for key in ("breakpoints", "slopes"):
        items = _required(obj, key, f"{field}.{key}")
        if not isinstance(items, list):
            raise ValidationError(f"{field}.{key}", "expected a list")
        lists[key] = [_number(x, f"{field}.{key}[{j}]") for j, x in enumerate(items)]
    try:
        return LossFunction.piecewise_linear(lists["breakpoints"], lists["slopes"])
    except ValueError as exc:
        raise ValidationError(field, str(exc)) from None


def _parse_measure(obj):
    kind = _required(obj, "kind", "risk.kind")
    if kind not in RISK_KINDS:
        raise ValidationError("risk.kind", f"unknown risk kind {kind!r}")
    required, optional = RISK_KINDS[kind]
    _check_keys(obj, "risk", ("kind", "constants") + required + optional)
    for key in required:
        _required(obj, key, f"risk.{key}")
    if kind == "cvar":
        alpha = _number(obj["alpha"], "risk.alpha")
        if not 0.0 <= alpha < 1.0:
            raise ValidationError("risk.alpha", f"must lie in [0, 1), got {alpha}")
        return CVaR(alpha)
    if kind == "md":
        gamma = _number(obj["gamma"], "risk.gamma")
        if not gamma >= 0.0:
            raise ValidationError("risk.gamma", f"must be >= 0, got {gamma}")
        p = _number(obj.get("p", 1.0), "risk.p")
        if not (p >= 1.0 and math.isfinite(p)):
            raise ValidationError("risk.p", f"must be a finite number >= 1, got {p}")
        return MeanDeviation(gamma, p)
    if kind == "shortfall":
        return Shortfall(_parse_loss(obj["loss"], "risk.loss"))
    return Mean()


def _parse_constants(obj):
    obj = _expect_object(obj, "risk.constants")
    _check_keys(obj, "risk.constants", CONSTANT_NAMES)
    out = {}
    for name, value in obj.items():
        value = _number(value, f"risk.constants.{name}")
        if not (value > 0 and math.isfinite(value)):
            raise ValidationError(f"risk.constants.{name}", f"must be finite and > 0, got {value}")
        out[name] = value
    return out


def config_from_dict(doc):
    """Validate a decoded JSON document and fill missing constants from the oracles."""
    doc = _expect_object(doc, "<root>")
    _check_keys(doc, "", TOP_KEYS)

    M = _number(doc.get("support_bound", 1.0), "support_bound")
    if not (M > 0 and math.isfinite(M)):
        raise ValidationError("support_bound", f"must be finite and > 0, got {M}")
    arms = _required(doc, "arms", "arms")
    if not isinstance(arms, list) or len(arms) < 2:
        raise ValidationError("arms", "expected a list of at least 2 arms")
    arms = tuple(_parse_arm(a, i, M) for i, a in enumerate(arms))

    risk = _expect_object(_required(doc, "risk", "risk"), "risk")
    measure = _parse_measure(risk)
    constants = _parse_constants(risk.get("constants", {}))

    delta = _number(doc.get("delta", DEFAULT_DELTA), "delta")
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta", f"must lie in (0, 1), got {delta}")
    variant = doc.get("md_radius_variant", "sum")
    if variant not in MD_RADIUS_VARIANTS:
        raise ValidationError("md_radius_variant", f"must be one of {MD_RADIUS_VARIANTS}")

    horizons = _required(doc, "horizons", "horizons")
    if not isinstance(horizons, list) or not horizons:
        raise ValidationError("horizons", "expected a non-empty list of integers")
    horizons = tuple(
        _integer(n, f"horizons[{i}]", low=len(arms)) for i, n in enumerate(horizons)
    )
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValidationError("horizons", "must be strictly increasing")

    replications = _integer(doc.get("replications", DEFAULT_REPLICATIONS), "replications", 1)
    seed = _integer(doc.get("seed", 0), "seed", 0)
    if seed > MASK64:
        raise ValidationError("seed", "must fit in 64 unsigned bits")

    outputs = _expect_object(doc.get("outputs", {}), "outputs")
    _check_keys(outputs, "outputs", ("trace", "curve"))
    paths = {}
    for key, default in (("trace", DEFAULT_TRACE), ("curve", DEFAULT_CURVE)):
        value = outputs.get(key, default)
        if not isinstance(value, str) or not value:
            raise ValidationError(f"outputs.{key}", "expected a non-empty path string")
        paths[key] = value

    spec = RiskSpec(measure, BoundInputs(delta=delta, **constants), variant)
    spec = fill_bounds(spec, arms)
    return ExperimentConfig(
        arms, spec, horizons, replications, seed, paths["trace"], paths["curve"]
    )


def parse_config(text):
    """Parse and validate a JSON experiment description.

    Raises :class:`ParseError` (with the line number) for malformed JSON and
    :class:`ValidationError` naming the offending field for bad values.
    Constants not given under ``risk.constants`` are filled from the arm
    oracles, so the returned config is fully resolved.
    """
    return config_from_dict(_load_json(text))


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _arm_dict(arm):
    f = arm.family
    out = {"family": FAMILY_NAMES[type(f)]}
    out.update({k: v for k, v in vars(f).items()})
    return out


def _risk_dict(spec):
    m, b = spec.measure, spec.bounds
    out = {"kind": spec.kind}
    if isinstance(m, CVaR):
        out["alpha"] = m.alpha
    elif isinstance(m, MeanDeviation):
        out.update(gamma=m.gamma, p=m.p)
    elif isinstance(m, Shortfall):
        loss = m.loss
        if loss.kind == "piecewise_linear":
            out["loss"] = {
                "kind": loss.kind,
                "breakpoints": list(loss.breakpoints),
                "slopes": list(loss.slopes),
            }
        else:
            out["loss"] = loss.kind
    constants = {name: getattr(b, name) for name in CONSTANT_NAMES if getattr(b, name) is not None}
    if constants:
        out["constants"] = constants
    return out


def config_to_dict(cfg):
    return {
        "arms": [_arm_dict(a) for a in cfg.arms],
        "support_bound": cfg.support_bound,
        "risk": _risk_dict(cfg.spec),
        "delta": cfg.delta,
        "horizons": list(cfg.horizons),
        "replications": cfg.replications,
        "seed": cfg.seed,
        "outputs": {"trace": cfg.trace_path, "curve": cfg.curve_path},
        "md_radius_variant": cfg.spec.md_radius_variant,
    }


def serialize_config(cfg):
    """JSON text that :func:`parse_config` maps back to an equal config."""
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


# ---------------------------------------------------------------------------
# output


def fmt(x):
    """Locale-independent fixed 12-significant-digit rendering."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def _csv_text(header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_atomic(path, text):
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_rows(traces):
    for r, trace in enumerate(traces, start=1):
        for t, (arm, cost) in enumerate(zip(trace.arms.tolist(), trace.costs.tolist()), start=1):
            yield r, t, arm + 1, cost


def decay_so_far(grid, regret_mean):
    """Log-log slope over the first i grid points; NaN until it is defined."""
    out = []
    for i in range(1, len(grid) + 1):
        values = regret_mean[:i]
        if i < 3 or np.any(values <= 0):
            out.append(float("nan"))
        else:
            out.append(loglog_slope(grid[:i], values))
    return out


def curve_rows(curve):
    slopes = decay_so_far(curve.grid, curve.regret_mean)
    return zip(curve.grid.tolist(), curve.regret_mean, curve.regret_se, curve.bound, slopes)


def _table(header, rows):
    cells = [list(header)] + [[fmt(v) if not isinstance(v, str) else v for v in r] for r in rows]
    widths = [max(len(row[j]) for row in cells) for j in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells)


# ---------------------------------------------------------------------------
# commands


def cmd_run(cfg, out_dir, threads=1, stream=None):
    """Run the experiment, write both CSVs under ``out_dir`` and print a summary.

    Returns 0 on success; raises ``OSError`` if an output cannot be written.
    """
    stream = sys.stdout if stream is None else stream
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim = simulate(
        cfg.arms,
        cfg.spec,
        cfg.delta,
        cfg.horizons,
        cfg.replications,
        cfg.seed,
        workers=threads,
        keep_traces=True,
    )
    curve = curve_from_simulation(list(cfg.arms), cfg.spec, cfg.delta, sim)
    rows = list(curve_rows(curve))
    write_atomic(out_dir / cfg.trace_path, _csv_text(TRACE_HEADER, trace_rows(sim.traces)))
    write_atomic(out_dir / cfg.curve_path, _csv_text(CURVE_HEADER, rows))
    print(
        f"{cfg.spec.kind} risk, K={len(cfg.arms)}, delta={fmt(cfg.delta)}, "
        f"R={cfg.replications}, seed={cfg.seed}",
        file=stream,
    )
    print(_table(CURVE_HEADER, rows), file=stream)
    return EXIT_OK


def cmd_oracle(cfg, stream=None):
    """Print true risks, gaps, derived constants and the optimal arm."""
    stream = sys.stdout if stream is None else stream
    arms, spec = list(cfg.arms), cfg.spec
    consts = oracle_constants(arms, spec)
    k_star = optimal_arm(arms, spec)
    rows = [
        (str(k + 1), FAMILY_NAMES[type(a.family)], c.true_risk, c.gap)
        for k, (a, c) in enumerate(zip(arms, consts))
    ]
    print(f"{spec.kind} risk, support bound M={fmt(cfg.support_bound)}", file=stream)
    print(_table(("arm", "family", "true_risk", "gap"), rows), file=stream)
    b, m = spec.bounds, spec.measure
    if isinstance(m, CVaR):
        print(f"m(alpha) = {fmt(b.m_alpha)}", file=stream)
    if isinstance(m, Shortfall):
        lc = m.loss.constants(b.M)
        print(f"M_G = {fmt(b.M_G)}", file=stream)
        print(f"M_l = {fmt(b.M_l)}", file=stream)
        print(f"m_l = {fmt(lc.derivative_floor)}", file=stream)
        print(f"C_l = {fmt(lc.lipschitz)}", file=stream)
    print(f"optimal arm k* = {k_star + 1}", file=stream)
    return EXIT_OK


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get(THREADS_ENV)
    if not env:
        return 1
    try:
        value = int(env)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="riskbandit", description="Risk-averse bandit experiments."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="simulate and write trace / curve CSVs")
    run.add_argument("--config", required=True)
    run.add_argument("--out-dir", required=True)
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument(
        "--threads",
        type=_positive_int,
        default=None,
        help=f"worker processes (default: ${THREADS_ENV} or 1)",
    )
    oracle = sub.add_parser("oracle", help="print ground-truth risks and constants")
    oracle.add_argument("--config", required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "oracle":
            return cmd_oracle(cfg)
        if args.seed is not None:
            if not 0 <= args.seed <= MASK64:
                raise ValidationError("seed", "must fit in 64 unsigned bits")
            cfg = replace(cfg, seed=args.seed)
        return cmd_run(cfg, args.out_dir, _threads(args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AssumptionViolated as exc:
        print(f"AssumptionViolated: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except NonUniqueOptimum as exc:
        print(f"NonUniqueOptimum: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except RiskBanditError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
