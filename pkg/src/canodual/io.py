"""Problem files (JSON) and solution reports.

A problem file is one JSON object::

    {
      "n": 2,
      "f": [2, 1],
      "terms": [
        {"kind": "exponential", "alpha": 6, "D": [[2, 0], [0, 3]]},
        {"kind": "quartic", "beta": 8, "lambda": 1, "D": [[4, 0], [0, 5]]}
      ],
      "solver": {"box": [-10, 10], "grid_steps": 201}
    }

Only ``description`` and the ``solver`` block are optional.  Unknown keys are
errors reported with their JSON path.
"""
from __future__ import annotations

import json
import numbers
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .dual import SolverTolerances
from .exceptions import ProblemFileError
from .problem import FixedPointProblem
from .terms import ExponentialTerm, LogQuadraticTerm, QuarticTerm

_TERM_KEYS = {
    "exponential": ("alpha",),
    "quartic": ("beta", "lambda"),
    "log_quadratic": ("c1", "c2"),
}
_SOLVER_KEYS = {"box", "grid_steps", "tolerances", "seed", "oracle_box", "oracle_starts"}
_TOL_KEYS = set(SolverTolerances.__dataclass_fields__)

BUNDLED = ("example1", "example2", "example3")


@dataclass
class SolverSettings:
    """The optional ``solver`` block of a problem file."""

    box: list | None = None
    grid_steps: int | None = None
    tolerances: SolverTolerances = field(default_factory=SolverTolerances)
    seed: int = 0
    oracle_box: list | None = None
    oracle_starts: int = 2000


@dataclass
class ProblemFile:
    problem: FixedPointProblem
    solver: SolverSettings
    description: str = ""


def _number(value, loc):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ProblemFileError(f"expected a number, got {value!r}", loc)
    return float(value)


def _integer(value, loc):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProblemFileError(f"expected an integer, got {value!r}", loc)
    return value


def _vector(value, loc):
    if not isinstance(value, list) or not value:
        raise ProblemFileError("expected a non-empty array of numbers", loc)
    return [_number(v, f"{loc}[{i}]") for i, v in enumerate(value)]


def _matrix(value, loc):
    if not isinstance(value, list) or not value:
        raise ProblemFileError("expected a non-empty 2-D array", loc)
    rows = [_vector(r, f"{loc}[{i}]") for i, r in enumerate(value)]
    if len({len(r) for r in rows}) != 1:
        raise ProblemFileError("rows have different lengths", loc)
    return rows


def _reject_unknown(obj, allowed, loc):
    for key in obj:
        if key not in allowed:
            where = f"{loc}.{key}" if loc else key
            raise ProblemFileError(f"unknown key {key!r}", where)


def _require(obj, key, loc):
    if key not in obj:
        raise ProblemFileError(f"missing required key {key!r}", loc or "<root>")
    return obj[key]


def _box(value, loc):
    if isinstance(value, list) and len(value) == 2 and all(not isinstance(v, list) for v in value):
        pairs = [_vector(value, loc)]
    elif not isinstance(value, list) or not value:
        raise ProblemFileError("expected [lo, hi] or a list of [lo, hi] pairs", loc)
    else:
        pairs = [_vector(v, f"{loc}[{i}]") for i, v in enumerate(value)]
    if any(len(pr) != 2 or pr[0] >= pr[1] for pr in pairs):
        raise ProblemFileError("every interval needs lo < hi", loc)
    return pairs


def _parse_term(obj, n, loc):
    if not isinstance(obj, dict):
        raise ProblemFileError("expected an object", loc)
    kind = _require(obj, "kind", loc)
    if kind not in _TERM_KEYS:
        raise ProblemFileError(f"unknown kind {kind!r}; expected one of {sorted(_TERM_KEYS)}", f"{loc}.kind")
    _reject_unknown(obj, {"kind", "D", *_TERM_KEYS[kind]}, loc)
    D = _matrix(_require(obj, "D", loc), f"{loc}.D")
    if len(D[0]) != n:
        raise ProblemFileError(f"D has {len(D[0])} columns but n={n}", f"{loc}.D")
    vals = {k: _number(_require(obj, k, loc), f"{loc}.{k}") for k in _TERM_KEYS[kind]}
    try:
        if kind == "exponential":
            return ExponentialTerm(D, vals["alpha"])
        if kind == "quartic":
            return QuarticTerm(D, vals["beta"], vals["lambda"])
        return LogQuadraticTerm(D, vals["c1"], vals["c2"])
    except ValueError as exc:
        raise ProblemFileError(str(exc), loc) from None


def _parse_solver(obj, loc="solver"):
    if not isinstance(obj, dict):
        raise ProblemFileError("expected an object", loc)
    _reject_unknown(obj, _SOLVER_KEYS, loc)
    s = SolverSettings()
    if "box" in obj:
        s.box = _box(obj["box"], f"{loc}.box")
    if "grid_steps" in obj:
        s.grid_steps = _integer(obj["grid_steps"], f"{loc}.grid_steps")
        if s.grid_steps < 2:
            raise ProblemFileError("grid_steps must be at least 2", f"{loc}.grid_steps")
    if "tolerances" in obj:
        tol = obj["tolerances"]
        if not isinstance(tol, dict):
            raise ProblemFileError("expected an object", f"{loc}.tolerances")
        _reject_unknown(tol, _TOL_KEYS, f"{loc}.tolerances")
        vals = {}
        for k, v in tol.items():
            vals[k] = _integer(v, f"{loc}.tolerances.{k}") if k == "max_iter" else _number(v, f"{loc}.tolerances.{k}")
        s.tolerances = SolverTolerances(**vals)
    if "seed" in obj:
        s.seed = _integer(obj["seed"], f"{loc}.seed")
    if "oracle_box" in obj:
        s.oracle_box = _box(obj["oracle_box"], f"{loc}.oracle_box")
    if "oracle_starts" in obj:
        s.oracle_starts = _integer(obj["oracle_starts"], f"{loc}.oracle_starts")
    return s


def parse_problem(data):
    """Validate a decoded problem document and build the problem."""
    if not isinstance(data, dict):
        raise ProblemFileError("top level must be an object", "<root>")
    _reject_unknown(data, {"n", "f", "terms", "solver", "description"}, "")
    n = _integer(_require(data, "n", ""), "n")
    if n < 1:
        raise ProblemFileError("n must be positive", "n")
    f = _vector(_require(data, "f", ""), "f")
    if len(f) != n:
        raise ProblemFileError(f"f has length {len(f)} but n={n}", "f")
    raw_terms = _require(data, "terms", "")
    if not isinstance(raw_terms, list) or not raw_terms:
        raise ProblemFileError("expected a non-empty array of terms", "terms")
    terms = [_parse_term(t, n, f"terms[{i}]") for i, t in enumerate(raw_terms)]
    solver = _parse_solver(data["solver"]) if "solver" in data else SolverSettings()
    description = data.get("description", "")
    if not isinstance(description, str):
        raise ProblemFileError("expected a string", "description")
    return ProblemFile(FixedPointProblem(f=f, terms=terms), solver, description)


def loads_problem(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    return parse_problem(data)


def resolve_path(path):
    """A filesystem path, or the bundled example of that name (``example1``...)."""
    p = Path(path)
    if p.exists():
        return p
    name = p.name[:-5] if p.name.endswith(".json") else p.name
    if name in BUNDLED:
        return resources.files("canodual") / "data" / f"{name}.json"
    return p


def load_problem(path):
    """Read a problem file; bundled example names are accepted too."""
    p = resolve_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read problem file: {exc.strerror or exc}", str(path)) from None
    return loads_problem(text)


def load_example(name):
    """Bundled example problem (``"example1"`` to ``"example3"``)."""
    if name not in BUNDLED:
        raise ValueError(f"unknown example {name!r}; choose from {BUNDLED}")
    return load_problem(name).problem


def problem_to_dict(p):
    return {"n": p.n, "f": p.f.tolist(), "terms": [t.to_dict() for t in p.terms]}


def fmt(value):
    """Six significant digits, as printed in reports."""
    return f"{value:.6g}"


def _fmt_vec(values):
    return "(" + ", ".join(fmt(v) for v in values) + ")"


TABLE_COLUMNS = ("#", "sigma", "x", "Pi", "Pi_d", "gap", "residual", "G", "stability", "source", "triality", "fallback")


def table_rows(records):
    """Table cells from record dictionaries (as stored in the JSON report)."""
    rows = []
    for i, r in enumerate(records, 1):
        rows.append([
            str(i),
            _fmt_vec(r["sigma"]),
            _fmt_vec(r["x"]),
            fmt(r["pi_value"]),
            fmt(r["pid_value"]),
            fmt(r["gap"]),
            fmt(r["fp_residual"]),
            r["g_class"],
            r["stability"],
            r["stability_source"],
            r["triality_verdict"],
            r["fallback_verdict"] + (" (!)" if r["disagreement"] else ""),
        ])
    return rows


def format_table(records):
    rows = [list(TABLE_COLUMNS), *table_rows(records)]
    widths = [max(len(row[c]) for row in rows) for c in range(len(TABLE_COLUMNS))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines)
