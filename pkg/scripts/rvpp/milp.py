"""Solver-agnostic MILP container with CPLEX-LP emission and read-back.

A ``MilpModel`` owns its variables; a ``VarRef`` from another model is
rejected when it shows up in a constraint or in the objective. Variables
hash by identity, so two handles with the same name from different models
never collide.

Usage::

    model = MilpModel("demo")
    x = model.add_var("x", upper=1.0)
    model.add_constraint(x + 2 * y, "<=", 3.0, tag="eq2.noact.t0")
    model.set_objective(x)
    text = write_lp(model)
"""

from __future__ import annotations

from dataclasses import dataclass, field
import io
import logging
import math
import re
from typing import Dict, IO, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np
from scipy import sparse

LOGGER = logging.getLogger(__name__)

CONTINUOUS = "continuous"
BINARY = "binary"
SENSES = ("<=", "=", ">=")
TERMS_PER_LINE = 8
NAME_PATTERN = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")

Number = Union[int, float]


class MilpModelError(ValueError):
    """Raised for malformed models or LP text."""

    def __init__(
        self,
        message: str,
        *,
        model: Optional[str] = None,
        name: Optional[str] = None,
        line: Optional[int] = None,
    ) -> None:
        self.model = model
        self.name = name
        self.line = line
        parts = []
        if model is not None:
            parts.append(f"model={model}")
        if name is not None:
            parts.append(f"name={name}")
        if line is not None:
            parts.append(f"line={line}")
        suffix = f" ({', '.join(parts)})" if parts else ""
        super().__init__(f"{message}{suffix}")


def format_number(value: float) -> str:
    """Render ``value`` with 17 significant digits (``-0`` becomes ``0``)."""
    if value == 0:
        return "0"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(float(value), ".17g")


@dataclass(frozen=True, eq=False)
class VarRef:
    """Handle to a registered variable; compared and hashed by identity."""

    index: int
    kind: str
    lower: float
    upper: float
    name: str
    owner: object = field(repr=False)

    def __add__(self, other: "ExprLike") -> "LinExpr":
        return LinExpr.of(self) + other

    __radd__ = __add__

    def __sub__(self, other: "ExprLike") -> "LinExpr":
        return LinExpr.of(self) - other

    def __rsub__(self, other: "ExprLike") -> "LinExpr":
        return LinExpr.of(other) - self

    def __mul__(self, coef: Number) -> "LinExpr":
        return LinExpr({self: float(coef)})

    __rmul__ = __mul__

    def __neg__(self) -> "LinExpr":
        return LinExpr({self: -1.0})


class LinExpr:
    """Linear expression ``sum(coef * var) + constant``."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: Optional[Mapping[VarRef, float]] = None, constant: float = 0.0) -> None:
        self.terms: Dict[VarRef, float] = dict(terms or {})
        self.constant = float(constant)

    @classmethod
    def of(cls, item: "ExprLike") -> "LinExpr":
        if isinstance(item, LinExpr):
            return item.copy()
        if isinstance(item, VarRef):
            return cls({item: 1.0})
        return cls(constant=float(item))

    @classmethod
    def total(cls, items: Iterable["ExprLike"]) -> "LinExpr":
        out = cls()
        for item in items:
            out.add(item)
        return out

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.constant)

    def add_term(self, var: VarRef, coef: float) -> "LinExpr":
        self.terms[var] = self.terms.get(var, 0.0) + float(coef)
        return self

    def add(self, item: "ExprLike", scale: float = 1.0) -> "LinExpr":
        """In-place ``self += scale * item``."""
        if isinstance(item, LinExpr):
            for var, coef in item.terms.items():
                self.add_term(var, scale * coef)
            self.constant += scale * item.constant
        elif isinstance(item, VarRef):
            self.add_term(item, scale)
        else:
            self.constant += scale * float(item)
        return self

    def normalized(self) -> "LinExpr":
        return LinExpr({var: coef for var, coef in self.terms.items() if coef != 0.0}, self.constant)

    def value(self, values: Mapping[VarRef, float]) -> float:
        return self.constant + sum(coef * values[var] for var, coef in self.terms.items())

    def __add__(self, other: "ExprLike") -> "LinExpr":
        return self.copy().add(other)

    __radd__ = __add__

    def __sub__(self, other: "ExprLike") -> "LinExpr":
        return self.copy().add(other, -1.0)

    def __rsub__(self, other: "ExprLike") -> "LinExpr":
        return LinExpr.of(other).add(self, -1.0)

    def __mul__(self, coef: Number) -> "LinExpr":
        factor = float(coef)
        return LinExpr({var: factor * value for var, value in self.terms.items()}, factor * self.constant)

    __rmul__ = __mul__

    def __neg__(self) -> "LinExpr":
        return self * -1.0

    def __repr__(self) -> str:
        body = " ".join(f"{coef:+g}*{var.name}" for var, coef in self.terms.items())
        return f"LinExpr({body} {self.constant:+g})"


ExprLike = Union[LinExpr, VarRef, Number]


@dataclass(frozen=True)
class Constraint:
    """``expr sense rhs``; the expression constant is folded into ``rhs``."""

    expr: LinExpr
    sense: str
    rhs: float
    tag: str
    name: str


@dataclass(frozen=True)
class MatrixForm:
    """Dense/sparse arrays of a model in column order of registration."""

    objective: np.ndarray
    objective_constant: float
    matrix: sparse.csr_matrix
    row_lower: np.ndarray
    row_upper: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integrality: np.ndarray


class MilpModel:
    """Maximization MILP."""

    sense = "maximize"

    def __init__(self, name: str = "rvpp") -> None:
        self.name = name
        self.variables: List[VarRef] = []
        self.constraints: List[Constraint] = []
        self.objective = LinExpr()
        self._names: Dict[str, VarRef] = {}
        self._row_names: set[str] = set()
        self._token = object()

    def __repr__(self) -> str:
        return (
            f"MilpModel(name={self.name!r}, variables={len(self.variables)}, "
            f"constraints={len(self.constraints)})"
        )

    @property
    def binary_count(self) -> int:
        return sum(1 for var in self.variables if var.kind == BINARY)

    def add_var(
        self,
        name: str,
        *,
        kind: str = CONTINUOUS,
        lower: float = 0.0,
        upper: float = math.inf,
    ) -> VarRef:
        """Register a variable and return its handle."""
        if name in self._names:
            raise MilpModelError("Duplicate variable name", model=self.name, name=name)
        if not NAME_PATTERN.match(name):
            raise MilpModelError("Variable name is not LP-safe", model=self.name, name=name)
        if kind not in (CONTINUOUS, BINARY):
            raise MilpModelError(f"Unknown variable kind {kind!r}", model=self.name, name=name)
        lower = float(lower)
        upper = float(upper)
        if kind == BINARY:
            lower = max(lower, 0.0)
            upper = min(upper, 1.0)
        if lower > upper:
            raise MilpModelError(
                f"Lower bound {lower!r} exceeds upper bound {upper!r}", model=self.name, name=name
            )
        var = VarRef(
            index=len(self.variables),
            kind=kind,
            lower=lower,
            upper=upper,
            name=name,
            owner=self._token,
        )
        self.variables.append(var)
        self._names[name] = var
        return var

    def add_binary(self, name: str) -> VarRef:
        return self.add_var(name, kind=BINARY, lower=0.0, upper=1.0)

    def var(self, name: str) -> VarRef:
        return self._names[name]

    def _check_owned(self, expr: LinExpr, where: str) -> None:
        for var in expr.terms:
            if var.owner is not self._token:
                raise MilpModelError(
                    f"Unregistered variable in {where}", model=self.name, name=var.name
                )

    def add_constraint(self, expr: ExprLike, sense: str, rhs: float, tag: str) -> int:
        """Record ``expr sense rhs`` and return its row id."""
        if sense not in SENSES:
            raise MilpModelError(f"Unknown sense {sense!r}", model=self.name, name=tag)
        if not tag:
            raise MilpModelError("Constraint tag must be non-empty", model=self.name)
        linear = LinExpr.of(expr).normalized()
        self._check_owned(linear, "constraint")
        row_id = len(self.constraints)
        name = tag if tag not in self._row_names else f"{tag}.{row_id}"
        self._row_names.add(name)
        self.constraints.append(
            Constraint(
                expr=LinExpr(linear.terms),
                sense=sense,
                rhs=float(rhs) - linear.constant,
                tag=tag,
                name=name,
            )
        )
        return row_id

    def set_objective(self, expr: ExprLike) -> None:
        linear = LinExpr.of(expr).normalized()
        self._check_owned(linear, "objective")
        self.objective = linear

    def add_objective(self, expr: ExprLike, scale: float = 1.0) -> None:
        linear = LinExpr.of(expr)
        self._check_owned(linear, "objective")
        self.objective.add(linear, scale)

    def lint(self) -> List[str]:
        """Return human-readable warnings: vacuous rows and unused variables."""
        findings: List[str] = []
        used: set[int] = {var.index for var in self.objective.terms}
        for row in self.constraints:
            if not row.expr.terms:
                findings.append(f"vacuous row {row.name}: 0 {row.sense} {format_number(row.rhs)}")
            used.update(var.index for var in row.expr.terms)
        for var in self.variables:
            if var.index not in used:
                findings.append(f"unused variable {var.name}")
        return findings

    def matrix_form(self) -> MatrixForm:
        """Assemble the column-ordered arrays a matrix backend expects."""
        n_vars = len(self.variables)
        objective = np.zeros(n_vars)
        for var, coef in self.objective.terms.items():
            objective[var.index] += coef

        rows: List[int] = []
        cols: List[int] = []
        data: List[float] = []
        row_lower = np.empty(len(self.constraints))
        row_upper = np.empty(len(self.constraints))
        for row_id, row in enumerate(self.constraints):
            for var, coef in row.expr.terms.items():
                rows.append(row_id)
                cols.append(var.index)
                data.append(coef)
            row_lower[row_id] = row.rhs if row.sense in ("=", ">=") else -np.inf
            row_upper[row_id] = row.rhs if row.sense in ("=", "<=") else np.inf
        matrix = sparse.csr_matrix((data, (rows, cols)), shape=(len(self.constraints), n_vars))

        return MatrixForm(
            objective=objective,
            objective_constant=self.objective.constant,
            matrix=matrix,
            row_lower=row_lower,
            row_upper=row_upper,
            lower=np.array([var.lower for var in self.variables], dtype=float),
            upper=np.array([var.upper for var in self.variables], dtype=float),
            integrality=np.array([1 if var.kind == BINARY else 0 for var in self.variables]),
        )


def _format_terms(terms: Iterable[Tuple[str, float]]) -> List[str]:
    chunks = []
    for name, coef in terms:
        sign = "-" if coef < 0 else "+"
        chunks.append(f"{sign} {format_number(abs(coef))} {name}")
    lines = []
    for start in range(0, len(chunks), TERMS_PER_LINE):
        lines.append(" ".join(chunks[start : start + TERMS_PER_LINE]))
    return lines


def _bound_line(var: VarRef) -> Optional[str]:
    lower, upper = var.lower, var.upper
    if var.kind == BINARY and lower == 0.0 and upper == 1.0:
        return None
    if lower == upper:
        return f" {var.name} = {format_number(lower)}"
    if math.isinf(lower) and math.isinf(upper):
        return f" {var.name} free"
    if math.isinf(upper):
        return f" {var.name} >= {format_number(lower)}"
    return f" {format_number(lower)} <= {var.name} <= {format_number(upper)}"


def write_lp(model: MilpModel, sink: Optional[IO[str]] = None) -> str:
    """Write ``model`` in canonical CPLEX LP text and return the text.

    Every variable appears in the objective (zero coefficients included) so
    solvers create columns in registration order.
    """
    out = io.StringIO()
    out.write(f"\\ Model {model.name}\n")
    out.write(f"\\ objective constant: {format_number(model.objective.constant)}\n")
    out.write("Maximize\n")
    coefficients = [0.0] * len(model.variables)
    for var, coef in model.objective.terms.items():
        coefficients[var.index] += coef
    objective_lines = _format_terms((var.name, coefficients[var.index]) for var in model.variables)
    if objective_lines:
        out.write(f" obj: {objective_lines[0]}\n")
        for line in objective_lines[1:]:
            out.write(f"  {line}\n")
    else:
        out.write(" obj:\n")

    out.write("Subject To\n")
    fallback = model.variables[0].name if model.variables else None
    for row in model.constraints:
        terms = [(var.name, coef) for var, coef in row.expr.terms.items()]
        if not terms:
            if fallback is None:
                out.write(f"\\ vacuous {row.name}: 0 {row.sense} {format_number(row.rhs)}\n")
                continue
            terms = [(fallback, 0.0)]
        lines = _format_terms(terms)
        out.write(f" {row.name}: {lines[0]}")
        for line in lines[1:]:
            out.write(f"\n  {line}")
        out.write(f" {row.sense} {format_number(row.rhs)}\n")

    out.write("Bounds\n")
    for var in model.variables:
        line = _bound_line(var)
        if line is not None:
            out.write(f"{line}\n")

    binaries = [var.name for var in model.variables if var.kind == BINARY]
    if binaries:
        out.write("Binaries\n")
        for start in range(0, len(binaries), TERMS_PER_LINE):
            out.write(" " + " ".join(binaries[start : start + TERMS_PER_LINE]) + "\n")
    out.write("End\n")

    text = out.getvalue()
    if sink is not None:
        sink.write(text)
    return text


@dataclass
class LpSummary:
    """What the lint reader recovers from LP text."""

    name: str = ""
    objective_constant: float = 0.0
    variables: List[str] = field(default_factory=list)
    objective: Dict[str, float] = field(default_factory=dict)
    constraints: Dict[str, Tuple[Dict[str, float], str, float]] = field(default_factory=dict)
    bounds: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    binaries: List[str] = field(default_factory=list)

    @property
    def variable_count(self) -> int:
        return len(self.variables)

    @property
    def constraint_count(self) -> int:
        return len(self.constraints)


def _parse_float(token: str, line_no: int) -> float:
    try:
        return float(token)
    except ValueError as exc:
        raise MilpModelError(f"Expected a number, got {token!r}", line=line_no) from exc


def _parse_terms(tokens: List[str], line_no: int) -> Dict[str, float]:
    if len(tokens) % 3:
        raise MilpModelError("Malformed term list", line=line_no)
    terms: Dict[str, float] = {}
    for index in range(0, len(tokens), 3):
        sign, coef_token, name = tokens[index : index + 3]
        if sign not in ("+", "-"):
            raise MilpModelError(f"Expected a sign, got {sign!r}", line=line_no)
        coef = _parse_float(coef_token, line_no)
        terms[name] = terms.get(name, 0.0) + (-coef if sign == "-" else coef)
    return terms


def read_lp(text: str) -> LpSummary:
    """Parse LP text produced by ``write_lp`` back into an ``LpSummary``."""
    summary = LpSummary()
    section = None
    pending_name: Optional[str] = None
    pending_tokens: List[str] = []

    def flush_row(line_no: int) -> None:
        nonlocal pending_name, pending_tokens
        if pending_name is None:
            return
        sense_at = next((i for i, tok in enumerate(pending_tokens) if tok in SENSES), None)
        if sense_at is None:
            raise MilpModelError("Row without a sense", name=pending_name, line=line_no)
        terms = _parse_terms(pending_tokens[:sense_at], line_no)
        rhs = _parse_float(pending_tokens[sense_at + 1], line_no)
        summary.constraints[pending_name] = (terms, pending_tokens[sense_at], rhs)
        pending_name, pending_tokens = None, []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            if line.startswith("\\ Model "):
                summary.name = line[len("\\ Model ") :]
            elif line.startswith("\\ objective constant:"):
                summary.objective_constant = _parse_float(line.split(":", 1)[1].strip(), line_no)
            elif line.startswith("\\ vacuous "):
                name, rest = line[len("\\ vacuous ") :].split(":", 1)
                tokens = rest.split()
                summary.constraints[name] = ({}, tokens[1], _parse_float(tokens[2], line_no))
            continue
        if line in ("Maximize", "Subject To", "Bounds", "Binaries", "End"):
            flush_row(line_no)
            section = line
            continue

        if section == "Maximize":
            tokens = line.split()
            if tokens and tokens[0] == "obj:":
                tokens = tokens[1:]
            for name, coef in _parse_terms(tokens, line_no).items():
                summary.variables.append(name)
                summary.objective[name] = coef
        elif section == "Subject To":
            tokens = line.split()
            if tokens[0].endswith(":"):
                flush_row(line_no)
                pending_name = tokens[0][:-1]
                tokens = tokens[1:]
            pending_tokens.extend(tokens)
        elif section == "Bounds":
            tokens = line.split()
            if len(tokens) == 2 and tokens[1] == "free":
                summary.bounds[tokens[0]] = (-math.inf, math.inf)
            elif len(tokens) == 3 and tokens[1] == "=":
                value = _parse_float(tokens[2], line_no)
                summary.bounds[tokens[0]] = (value, value)
            elif len(tokens) == 3 and tokens[1] == ">=":
                summary.bounds[tokens[0]] = (_parse_float(tokens[2], line_no), math.inf)
            elif len(tokens) == 5:
                summary.bounds[tokens[2]] = (
                    _parse_float(tokens[0], line_no),
                    _parse_float(tokens[4], line_no),
                )
            else:
                raise MilpModelError(f"Unrecognized bound line {line!r}", line=line_no)
        elif section == "Binaries":
            summary.binaries.extend(line.split())
        else:
            raise MilpModelError(f"Text outside any section: {line!r}", line=line_no)

    for name in summary.binaries:
        summary.bounds.setdefault(name, (0.0, 1.0))
    for name in summary.variables:
        summary.bounds.setdefault(name, (0.0, math.inf))
    return summary
