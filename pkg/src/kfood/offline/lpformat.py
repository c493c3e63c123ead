"""LP-format export and plain-text solution files for external solvers."""

from __future__ import annotations

import math
import re

import numpy as np

from ..errors import ParseError, ResidualTooLarge, UnknownVariable
from .model import MilpModel
from .solution import Solution, Status, objective_of
from .verify import residuals

TERMS_PER_LINE = 8
RESIDUAL_TOL = 1e-6


def _num(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _expr(pairs) -> list[str]:
    """Render ``(coef, name)`` pairs as wrapped LP-format expression lines."""
    tokens = []
    for coef, name in pairs:
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = name if mag == 1 else f"{_num(mag)} {name}"
        tokens.append(f"{sign} {body}")
    lines = []
    for i in range(0, len(tokens), TERMS_PER_LINE):
        lines.append(" ".join(tokens[i:i + TERMS_PER_LINE]))
    return lines


def export_milp_text(model: MilpModel) -> str:
    """Serialise ``model`` in CPLEX LP format (deterministic output)."""
    names = model.names
    out = [f"\\ flow MILP: objective={model.objective.value} k={model.k} "
           f"penalty={_num(model.penalty)} alpha={model.alpha} mode={model.initial_mode.value}"]
    out.append("Maximize" if model.sense == "max" else "Minimize")
    obj = [(model.c[j], names[j]) for j in np.flatnonzero(model.c)]
    lines = _expr(obj) or ["0 " + names[0]]
    out.append(" obj: " + lines[0])
    out.extend("  " + ln for ln in lines[1:])

    out.append("Subject To")
    A = model.A.tocsr()
    op = {"<=": "<=", ">=": ">=", "=": "="}
    for r, rname in enumerate(model.row_names):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        pairs = [(A.data[p], names[A.indices[p]]) for p in range(lo, hi) if A.data[p] != 0]
        lines = _expr(pairs)
        if not lines:
            continue
        out.append(f" {rname}: " + lines[0])
        out.extend("  " + ln for ln in lines[1:])
        out[-1] += f" {op[model.row_sense[r]]} {_num(model.rhs[r])}"

    out.append("Bounds")
    for j, nm in enumerate(names):
        if model.integer[j]:
            continue
        lb, ub = model.lb[j], model.ub[j]
        if math.isinf(lb) and math.isinf(ub):
            out.append(f" {nm} free")
        elif math.isinf(ub):
            if lb != 0:
                out.append(f" {nm} >= {_num(lb)}")
        else:
            lo = "-inf" if math.isinf(lb) else _num(lb)
            out.append(f" {lo} <= {nm} <= {_num(ub)}")
    out.append("Binary")
    for j in np.flatnonzero(model.integer):
        out.append(f" {names[j]}")
    out.append("End")
    return "\n".join(out) + "\n"


def write_solution_text(sol: Solution) -> str:
    """``name value`` lines for every variable, headed by status/objective comments."""
    lines = [f"# status {sol.status.value}", f"# objective {sol.objective_value!r}"]
    if sol.x is not None:
        lines += [f"{nm} {float(v)!r}" for nm, v in zip(sol.model.names, sol.x)]
    return "\n".join(lines) + "\n"


_STATUS_RE = re.compile(r"#\s*status\s+(\w+)", re.IGNORECASE)


def parse_external_solution(model: MilpModel, text: str, tol: float = RESIDUAL_TOL) -> Solution:
    """Read ``name value`` lines (``#`` comments allowed) into a :class:`Solution`.

    Variables missing from the file are taken as 0. The result is checked by
    the independent residual verifier; any violation above ``tol`` raises
    ``ResidualTooLarge``.
    """
    index = model.name_index
    x = np.zeros(model.n_vars)
    status = Status.OPTIMAL
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _STATUS_RE.match(line)
            if m:
                try:
                    status = Status(m.group(1))
                except ValueError:
                    raise ParseError(f"unknown status {m.group(1)!r}", f"line {lineno}") from None
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'name value', got {raw!r}", f"line {lineno}")
        name, val = parts
        if name not in index:
            raise UnknownVariable(f"variable {name!r} (line {lineno}) is not in the model")
        try:
            x[index[name]] = float(val)
        except ValueError:
            raise ParseError(f"bad value {val!r}", f"line {lineno}") from None
    outside = np.maximum(model.lb - x, x - model.ub)
    if outside.size and outside.max() > tol:
        j = int(np.argmax(outside))
        raise ResidualTooLarge(f"{model.names[j]}={x[j]} outside [{model.lb[j]}, {model.ub[j]}]")
    sol = Solution(status, objective_of(model, x), x, model)
    bad = {k: v for k, v in residuals(sol).items() if v > tol}
    if bad:
        raise ResidualTooLarge(f"solution violates the model: {bad}")
    return sol
