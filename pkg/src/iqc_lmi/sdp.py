"""Semidefinite programs over named matrix variables.

A problem is a list of matrix variables (symmetric or general), a list of
affine matrix blocks ``F(x) = F0 + sum_i x_i F_i`` and an optional linear
objective to minimize. The decision vector ``x`` stacks the free entries of
every variable in declaration order: upper triangle in column-major order for
symmetric variables, all entries in column-major order for general ones.

Block senses:

``pos``
    strict, implemented as ``F(x) >= margin * I``.
``psd``
    ``F(x) >= 0``.
``zero``
    ``F(x) = 0`` entrywise.

Blocks are compiled from plain numpy callables by evaluating them on the
canonical basis of the decision space, so builders never need a symbolic
expression layer.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, MissingVariable

STRICT_MARGIN_REL = 1e-7
DEFAULT_TOL = 1e-8
DEFAULT_GAP = 1e-7


@dataclass(frozen=True)
class VarSpec:
    name: str
    kind: str  # "symmetric" | "general"
    rows: int
    cols: int

    def __post_init__(self):
        if self.kind not in ("symmetric", "general"):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.kind == "symmetric" and self.rows != self.cols:
            raise DimensionMismatch(f"symmetric variable {self.name} must be square")

    @property
    def size(self) -> int:
        if self.kind == "symmetric":
            return self.rows * (self.rows + 1) // 2
        return self.rows * self.cols

    def entries(self) -> List[Tuple[int, int]]:
        """Matrix positions of the free entries, in vectorization order."""
        if self.kind == "symmetric":
            return [(i, j) for j in range(self.cols) for i in range(j + 1)]
        return [(i, j) for j in range(self.cols) for i in range(self.rows)]


def sym(name: str, dim: int) -> VarSpec:
    return VarSpec(name, "symmetric", dim, dim)


def gen(name: str, rows: int, cols: Optional[int] = None) -> VarSpec:
    return VarSpec(name, "general", rows, rows if cols is None else cols)


class Layout:
    """Maps between the decision vector and named matrices."""

    def __init__(self, specs: Sequence[VarSpec]):
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        self.specs = tuple(specs)
        self.offsets: Dict[str, int] = {}
        off = 0
        for s in self.specs:
            self.offsets[s.name] = off
            off += s.size
        self.size = off

    def spec(self, name: str) -> VarSpec:
        for s in self.specs:
            if s.name == name:
                return s
        raise MissingVariable(name)

    def zeros(self) -> Dict[str, np.ndarray]:
        return {s.name: np.zeros((s.rows, s.cols)) for s in self.specs}

    def unpack(self, x: Any) -> Dict[str, np.ndarray]:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.size:
            raise DimensionMismatch(f"decision vector has {x.size} entries, expected {self.size}")
        out = {}
        for s in self.specs:
            m = np.zeros((s.rows, s.cols))
            off = self.offsets[s.name]
            for t, (i, j) in enumerate(s.entries()):
                m[i, j] = x[off + t]
                if s.kind == "symmetric":
                    m[j, i] = x[off + t]
            out[s.name] = m
        return out

    def pack(self, values: Mapping[str, Any]) -> np.ndarray:
        x = np.zeros(self.size)
        for s in self.specs:
            if s.name not in values:
                raise MissingVariable(s.name)
            m = np.asarray(values[s.name], dtype=float).reshape(s.rows, s.cols)
            if s.kind == "symmetric":
                m = 0.5 * (m + m.T)
            off = self.offsets[s.name]
            for t, (i, j) in enumerate(s.entries()):
                x[off + t] = m[i, j]
        return x

    def basis(self, index: int) -> Dict[str, np.ndarray]:
        """Variable values for the ``index``-th unit decision vector."""
        vals = self.zeros()
        for s in self.specs:
            off = self.offsets[s.name]
            if off <= index < off + s.size:
                i, j = s.entries()[index - off]
                vals[s.name][i, j] = 1.0
                if s.kind == "symmetric":
                    vals[s.name][j, i] = 1.0
                return vals
        raise IndexError(index)


@dataclass(frozen=True, eq=False)
class LmiBlock:
    name: str
    sense: str  # "pos" | "psd" | "zero"
    const: np.ndarray
    lin: np.ndarray  # shape (n_vars, d, d)
    margin: float = 0.0

    @property
    def dim(self) -> int:
        return self.const.shape[0]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.const + np.tensordot(x, self.lin, axes=(0, 0))

    def nnz(self) -> int:
        iu = np.triu_indices(self.dim)
        return int(np.count_nonzero(self.const[iu]) + np.count_nonzero(self.lin[:, iu[0], iu[1]]))


def strict_margin(const: np.ndarray) -> float:
    return STRICT_MARGIN_REL * (1.0 + (np.linalg.norm(const, 2) if const.size else 0.0))


def compile_block(
    name: str,
    sense: str,
    fn: Callable[[Mapping[str, np.ndarray]], np.ndarray],
    layout: Layout,
    margin: Optional[float] = None,
) -> LmiBlock:
    """Turn an affine callable of the named variables into coefficient matrices."""
    if sense not in ("pos", "psd", "zero"):
        raise ValueError(f"unknown sense {sense!r}")
    const = np.array(fn(layout.zeros()), dtype=float)
    if const.ndim != 2 or const.shape[0] != const.shape[1]:
        raise DimensionMismatch(f"block {name} is not square: {const.shape}")
    d = const.shape[0]
    lin = np.zeros((layout.size, d, d))
    for i in range(layout.size):
        lin[i] = np.asarray(fn(layout.basis(i)), dtype=float) - const
    const = 0.5 * (const + const.T)
    lin = 0.5 * (lin + lin.transpose(0, 2, 1))
    if margin is None:
        margin = strict_margin(const) if sense == "pos" else 0.0
    const.setflags(write=False)
    lin.setflags(write=False)
    return LmiBlock(name, sense, const, lin, float(margin))


@dataclass(frozen=True)
class BlockSpec:
    """An uncompiled block: ``fn`` maps named variable values to a matrix."""

    name: str
    sense: str
    fn: Callable[[Mapping[str, np.ndarray]], np.ndarray]
    margin: Optional[float] = None


@dataclass(frozen=True, eq=False)
class SdpProblem:
    variables: Tuple[VarSpec, ...]
    blocks: Tuple[LmiBlock, ...]
    objective: Optional[np.ndarray] = None  # minimize objective @ x
    meta: Mapping[str, Any] = field(default_factory=dict)

    @property
    def layout(self) -> Layout:
        return Layout(self.variables)

    @property
    def n_scalars(self) -> int:
        return sum(v.size for v in self.variables)

    def block(self, name: str) -> LmiBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    @classmethod
    def build(
        cls,
        variables: Sequence[VarSpec],
        specs: Sequence[BlockSpec],
        objective: Optional[Mapping[str, float]] = None,
        meta: Optional[Mapping[str, Any]] = None,
    ) -> "SdpProblem":
        """Compile block specs; ``objective`` weights scalar (1x1) variables."""
        # empty variables stay visible to the callables but carry no entries
        layout = Layout(variables)
        variables = tuple(v for v in variables if v.size > 0)
        blocks = tuple(
            compile_block(s.name, s.sense, s.fn, layout, s.margin) for s in specs
        )
        blocks = tuple(b for b in blocks if b.dim > 0)
        obj = None
        if objective:
            obj = np.zeros(layout.size)
            for name, w in objective.items():
                spec = layout.spec(name)
                if spec.size != 1:
                    raise DimensionMismatch(f"objective variable {name} must be scalar")
                obj[layout.offsets[name]] = float(w)
        return cls(variables, blocks, obj, dict(meta or {}))

    def with_blocks(self, blocks: Sequence[LmiBlock]) -> "SdpProblem":
        return SdpProblem(self.variables, tuple(blocks), self.objective, dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "variables": [[v.name, v.kind, v.rows, v.cols] for v in self.variables],
            "blocks": [_block_to_dict(b) for b in self.blocks],
            "objective": None if self.objective is None else _sparse_vec(self.objective),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SdpProblem":
        variables = tuple(VarSpec(n, k, int(r), int(c)) for n, k, r, c in data["variables"])
        m = sum(v.size for v in variables)
        blocks = tuple(_block_from_dict(b, m) for b in data["blocks"])
        obj = data.get("objective")
        objective = None
        if obj is not None:
            objective = np.zeros(m)
            for i, val in obj:
                objective[int(i)] = float(val)
        return cls(variables, blocks, objective, dict(data.get("meta", {})))


def _sparse_vec(v: np.ndarray) -> list:
    return [[int(i), float(v[i])] for i in np.flatnonzero(v)]


def _block_to_dict(b: LmiBlock) -> dict:
    d = b.dim
    iu = np.triu_indices(d)
    entries = []
    for (i, j) in zip(*iu):
        if b.const[i, j] != 0:
            entries.append([0, int(i), int(j), float(b.const[i, j])])
    for t in range(b.lin.shape[0]):
        for (i, j) in zip(*iu):
            if b.lin[t, i, j] != 0:
                entries.append([t + 1, int(i), int(j), float(b.lin[t, i, j])])
    return {"name": b.name, "sense": b.sense, "dim": d, "margin": b.margin, "entries": entries}


def _block_from_dict(data: Mapping[str, Any], m: int) -> LmiBlock:
    d = int(data["dim"])
    const = np.zeros((d, d))
    lin = np.zeros((m, d, d))
    for t, i, j, val in data["entries"]:
        target = const if t == 0 else lin[t - 1]
        target[i, j] = val
        target[j, i] = val
    const.setflags(write=False)
    lin.setflags(write=False)
    return LmiBlock(data["name"], data["sense"], const, lin, float(data["margin"]))


# ---------------------------------------------------------------------------
# residual checks (solver independent)


@dataclass(frozen=True)
class BlockResidual:
    name: str
    sense: str
    min_eig: float  # for "zero" blocks: max abs entry
    margin: float
    violation: float


@dataclass(frozen=True)
class ResidualReport:
    blocks: Tuple[BlockResidual, ...]

    @property
    def max_violation(self) -> float:
        return max((b.violation for b in self.blocks), default=0.0)

    def ok(self, tol: float = DEFAULT_TOL) -> bool:
        return self.max_violation <= tol

    def violations(self, tol: float = DEFAULT_TOL) -> List[BlockResidual]:
        return [b for b in self.blocks if b.violation > tol]

    def to_dict(self) -> dict:
        return {
            "max_violation": self.max_violation,
            "blocks": [
                {"name": b.name, "sense": b.sense, "min_eig": b.min_eig, "margin": b.margin, "violation": b.violation}
                for b in self.blocks
            ],
        }


def check_solution(problem: SdpProblem, candidate: Mapping[str, Any]) -> ResidualReport:
    """Evaluate every block at ``candidate`` using only numpy eigensolvers."""
    layout = problem.layout
    for s in layout.specs:
        if s.name not in candidate:
            raise MissingVariable(s.name)
    x = layout.pack(candidate)
    out = []
    for b in problem.blocks:
        f = b.evaluate(x)
        if b.sense == "zero":
            val = float(np.abs(f).max()) if f.size else 0.0
            out.append(BlockResidual(b.name, b.sense, val, 0.0, val))
            continue
        lam = float(np.linalg.eigvalsh(0.5 * (f + f.T)).min()) if f.size else math.inf
        need = b.margin if b.sense == "pos" else 0.0
        out.append(BlockResidual(b.name, b.sense, lam, need, max(0.0, need - lam)))
    return ResidualReport(tuple(out))


# ---------------------------------------------------------------------------
# solving


class Status(str, enum.Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    INACCURATE = "Inaccurate"
    FAILED = "Failed"


@dataclass(frozen=True)
class SolverOptions:
    backend: str = "CLARABEL"
    tolerance: float = DEFAULT_TOL
    gap: float = DEFAULT_GAP
    # strict blocks are solved with margin * pad so that the returned point
    # clears the margin after backend round-off
    margin_pad: float = 2.0
    verbose: bool = False


@dataclass(frozen=True, eq=False)
class SdpSolution:
    status: Status
    variables: Dict[str, np.ndarray]
    objective_value: Optional[float]
    max_primal_residual: float
    min_block_eig: Dict[str, float]
    report: Optional[ResidualReport] = None
    diagnostics: str = ""

    @property
    def x(self) -> Optional[np.ndarray]:
        return self.variables.get("__x__")


def _cvx_blocks(problem: SdpProblem, xvar, pad: float):
    import cvxpy as cp
    import scipy.sparse as sp

    cons = []
    for b in problem.blocks:
        d = b.dim
        if d == 0:
            continue
        lin = sp.csr_matrix(b.lin.reshape(b.lin.shape[0], d * d).T)
        expr = b.const + cp.reshape(lin @ xvar, (d, d), order="C")
        if b.sense == "zero":
            iu = np.triu_indices(d)
            flat = b.const[iu] + sp.csr_matrix(b.lin[:, iu[0], iu[1]].T) @ xvar
            cons.append(flat == 0)
            continue
        need = b.margin * pad if b.sense == "pos" else 0.0
        cons.append(0.5 * (expr + expr.T) >> need * np.eye(d))
    return cons


def is_homogeneous(problem: SdpProblem) -> bool:
    """True when no block has a constant term, so feasible sets are cones."""
    return all(not np.any(b.const) for b in problem.blocks)


def _phase_one(problem: SdpProblem, opts: SolverOptions, fallback: Status, why: str) -> SdpSolution:
    """Best common margin ``t`` of the strict blocks over the box ``|x|_inf <= 1``.

    For homogeneous problems the box loses no generality, so an optimal
    ``t <= 0`` proves that no strictly feasible point exists. Anything else
    keeps the original status.
    """
    import cvxpy as cp

    m = problem.layout.size
    xvar = cp.Variable(m)
    t = cp.Variable()
    cons = [cp.norm(xvar, "inf") <= 1.0] if m else []
    strict = 0
    for b in problem.blocks:
        d = b.dim
        if d == 0:
            continue
        lin = b.lin.reshape(b.lin.shape[0], d * d).T
        expr = b.const + cp.reshape(lin @ xvar, (d, d), order="C")
        if b.sense == "zero":
            cons.append(expr == 0)
        elif b.sense == "pos":
            strict += 1
            cons.append(0.5 * (expr + expr.T) >> t * np.eye(d))
        else:
            cons.append(0.5 * (expr + expr.T) >> 0)
    if not strict:
        return SdpSolution(fallback, {}, None, math.inf, {}, None, why)
    prob = cp.Problem(cp.Maximize(t), cons + [t <= 1.0])
    try:
        prob.solve(solver=opts.backend.upper())
    except Exception as exc:
        return SdpSolution(fallback, {}, None, math.inf, {}, None, f"{why}; phase one: {type(exc).__name__}")
    level = None if t.value is None else float(t.value)
    note = f"{why}; phase-one margin {level!r} (status {prob.status})"
    if prob.status == "optimal" and level is not None and level <= opts.tolerance and is_homogeneous(problem):
        return SdpSolution(Status.INFEASIBLE, {}, None, math.inf, {}, None, note)
    return SdpSolution(fallback, {}, None, math.inf, {}, None, note)


def solve(problem: SdpProblem, opts: Optional[SolverOptions] = None) -> SdpSolution:
    """Solve with a cvxpy backend and re-verify the point with :func:`check_solution`."""
    import cvxpy as cp

    opts = opts or SolverOptions()
    layout = problem.layout
    m = layout.size
    xvar = cp.Variable(m)
    cons = _cvx_blocks(problem, xvar, opts.margin_pad)
    if problem.objective is not None:
        objective = cp.Minimize(problem.objective @ xvar)
    else:
        objective = cp.Minimize(0)
    prob = cp.Problem(objective, cons)
    kwargs: Dict[str, Any] = {}
    if opts.backend.upper() == "CLARABEL":
        kwargs = dict(tol_feas=min(opts.tolerance, 1e-8), tol_gap_rel=opts.gap, tol_gap_abs=opts.gap)
    try:
        prob.solve(solver=opts.backend.upper(), verbose=opts.verbose, **kwargs)
    except Exception as exc:  # backend errors carry no usable point
        return _phase_one(problem, opts, Status.FAILED, f"{type(exc).__name__}: {exc}")
    status = prob.status
    if status in ("infeasible", "unbounded"):
        # for our minimizations, an unbounded objective only arises when the
        # dual is infeasible, which the backend proves
        return SdpSolution(Status.INFEASIBLE if status == "infeasible" else Status.INACCURATE,
                           {}, None, math.inf, {}, None, f"backend status {status}")
    if xvar.value is None:
        return _phase_one(problem, opts, Status.INACCURATE if "inaccurate" in status else Status.FAILED,
                          f"backend status {status}")
    x = np.asarray(xvar.value, dtype=float)
    values = layout.unpack(x)
    report = check_solution(problem, values)
    backend_res = max((float(np.max(c.violation())) for c in cons), default=0.0)
    min_eigs = {b.name: b.min_eig for b in report.blocks}
    obj = float(problem.objective @ x) if problem.objective is not None else None
    if status == "optimal" and report.ok(opts.tolerance):
        st = Status.FEASIBLE
    else:
        st = Status.INACCURATE
    values["__x__"] = x
    return SdpSolution(st, values, obj, backend_res, min_eigs, report, f"backend status {status}")


def named_values(solution: SdpSolution) -> Dict[str, np.ndarray]:
    return {k: v for k, v in solution.variables.items() if not k.startswith("__")}


# ---------------------------------------------------------------------------
# SDPA sparse format
#
# SDPA solves  min c^T x  s.t.  sum_i x_i F_i - F_0 >= 0.  A block
# ``G(x) = G0 + sum x_i G_i >= margin I`` becomes F_i = G_i, F_0 = margin I - G0.
# Equality blocks become a diagonal LP block holding each upper-triangle entry
# twice, once as ``g >= 0`` and once as ``-g >= 0``. Comment lines starting
# with ``*`` carry the variable and block metadata needed for an exact
# round trip; readers that ignore them still see a valid SDPA problem.


def _fmt(v: float) -> str:
    return repr(float(v))


def export_sdpa(problem: SdpProblem) -> str:
    m = problem.n_scalars
    lines = ["* iqc-lmi SDPA export; objective: minimize c^T x"]
    for v in problem.variables:
        lines.append(f"*var {v.name} {v.kind} {v.rows} {v.cols}")
    sdpa_blocks = []
    for b in problem.blocks:
        lines.append(f"*block {b.name} {b.sense} {b.dim} {_fmt(b.margin)}")
        if b.sense == "zero":
            sdpa_blocks.append(("lp", b))
        else:
            sdpa_blocks.append(("sdp", b))
    c = problem.objective if problem.objective is not None else np.zeros(m)
    struct = []
    for kind, b in sdpa_blocks:
        if kind == "lp":
            struct.append(str(-b.dim * (b.dim + 1)))
        else:
            struct.append(str(b.dim))
    lines.append(str(m))
    lines.append(str(len(sdpa_blocks)))
    lines.append(" ".join(struct))
    lines.append(" ".join(_fmt(ci) for ci in c) if m else "")
    for blk_no, (kind, b) in enumerate(sdpa_blocks, start=1):
        d = b.dim
        iu = list(zip(*np.triu_indices(d)))
        if kind == "sdp":
            f0 = b.margin * np.eye(d) - b.const
            mats = [f0] + [b.lin[t] for t in range(m)]
            for t, mat in enumerate(mats):
                for (i, j) in iu:
                    if mat[i, j] != 0:
                        lines.append(f"{t} {blk_no} {i + 1} {j + 1} {_fmt(mat[i, j])}")
        else:
            n_eq = len(iu)
            for t in range(m + 1):
                mat = -b.const if t == 0 else b.lin[t - 1]
                for e, (i, j) in enumerate(iu):
                    val = mat[i, j]
                    if val != 0:
                        lines.append(f"{t} {blk_no} {e + 1} {e + 1} {_fmt(val)}")
                        lines.append(f"{t} {blk_no} {n_eq + e + 1} {n_eq + e + 1} {_fmt(-val)}")
    return "\n".join(lines) + "\n"


def import_sdpa(text: str) -> SdpProblem:
    """Parse SDPA sparse text; ``*var``/``*block`` comments restore names and senses."""
    var_lines, block_meta, body = [], [], []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("*var "):
            _, name, kind, r, c = line.split()
            var_lines.append(VarSpec(name, kind, int(r), int(c)))
        elif line.startswith("*block "):
            _, name, sense, dim, margin = line.split()
            block_meta.append((name, sense, int(dim), float(margin)))
        elif line[0] in "*\"":
            continue
        else:
            body.append(line.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " "))
    m = int(body[0].split()[0])
    nblocks = int(body[1].split()[0])
    struct = [int(s) for s in body[2].split()[:nblocks]]
    rest = body[3:]
    if m:
        c = np.array([float(s) for s in rest[0].split()[:m]])
        rest = rest[1:]
    else:
        c = np.zeros(0)
        if rest and len(rest[0].split()) != 5:
            rest = rest[1:]
    mats = [[np.zeros((abs(s), abs(s))) for s in struct] for _ in range(m + 1)]
    for line in rest:
        t, blk, i, j, val = line.split()
        t, blk, i, j = int(t), int(blk) - 1, int(i) - 1, int(j) - 1
        mats[t][blk][i, j] = float(val)
        mats[t][blk][j, i] = float(val)
    if not var_lines:
        var_lines = [gen(f"x{i}", 1, 1) for i in range(m)]
    if not block_meta:
        block_meta = [(f"block{b}", "psd", abs(s), 0.0) for b, s in enumerate(struct)]
    blocks = []
    for b, (name, sense, dim, margin) in enumerate(block_meta):
        lin = np.zeros((m, dim, dim))
        if sense == "zero":
            iu = list(zip(*np.triu_indices(dim)))
            const = np.zeros((dim, dim))
            for e, (i, j) in enumerate(iu):
                const[i, j] = const[j, i] = -mats[0][b][e, e]
                for t in range(m):
                    lin[t, i, j] = lin[t, j, i] = mats[t + 1][b][e, e]
        else:
            const = margin * np.eye(dim) - mats[0][b]
            for t in range(m):
                lin[t] = mats[t + 1][b]
        const.setflags(write=False)
        lin.setflags(write=False)
        blocks.append(LmiBlock(name, sense, const, lin, margin))
    objective = c if np.any(c) else None
    return SdpProblem(tuple(var_lines), tuple(blocks), objective, {})


def import_solution(problem: SdpProblem, text: str) -> Dict[str, np.ndarray]:
    """Read a solution given as JSON ``{name: matrix}`` or as whitespace-separated ``x``."""
    import json

    stripped = text.strip()
    layout = problem.layout
    if stripped.startswith("{"):
        data = json.loads(stripped)
        return {k: np.array(v, dtype=float).reshape(layout.spec(k).rows, layout.spec(k).cols) for k, v in data.items()}
    x = np.array([float(t) for t in stripped.replace(",", " ").split()])
    return layout.unpack(x)
