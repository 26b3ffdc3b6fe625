"""Assembly of the robust stability / performance SDPs.

The plant is the uncertainty channel ``w -> z`` with optional performance
channel ``d -> e``::

    x' = A x + B w + B2 d
    z  = C x + D w + D12 d
    e  = C2 x + D21 w + D22 d,        w = Delta(z)

Every test shares one main inequality. With filter state ``xi`` and outer
factor ``Psi`` driven by ``u = [z; w]`` it reads

    [I 0 0; A_aug B_aug]^T [0 X; X 0] [...] + [C_Psi D_Psi U]^T P [...] (+ perf) < 0

where the augmented state is ``(xi, x)`` and ``P`` is the kind's middle
matrix. The coupling inequality ``X - diag(T, 0) > 0`` carries the terminal
cost ``T``. Static tests use ``Psi = I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NoPerformanceChannel, UnsupportedSet
from .lti import StateSpace
from .multipliers import (
    MultiplierRecipe,
    TestKind,
    middle_matrix,
    outer_factor_any,
    positivity_blocks,
    terminal_cost,
)
from .sdp import BlockSpec, SdpProblem, SdpSolution, SolverOptions, Status, check_solution, named_values, solve, sym
from .valuesets import SetKind, ValueSet

PERFORMANCE_FORM = "standard IQC performance extension: supply rate e'e - gamma^2 d'd"


@dataclass(frozen=True, eq=False)
class PerformanceChannel:
    b2: np.ndarray
    c2: np.ndarray
    d12: np.ndarray
    d21: np.ndarray
    d22: np.ndarray

    def to_dict(self) -> dict:
        return {k: np.asarray(getattr(self, k)).tolist() for k in ("b2", "c2", "d12", "d21", "d22")}


@dataclass(frozen=True, eq=False)
class Plant:
    sys: StateSpace
    perf: Optional[PerformanceChannel] = None

    def __post_init__(self):
        if self.perf is None:
            return
        n, k, l = self.n, self.k, self.l
        p = np.atleast_2d(self.perf.b2).shape[1]
        q = np.atleast_2d(self.perf.c2).shape[0]
        shapes = {
            "b2": (n, p), "c2": (q, n), "d12": (k, p), "d21": (q, l), "d22": (q, p),
        }
        fixed = {}
        for name, shape in shapes.items():
            m = np.array(getattr(self.perf, name), dtype=float).reshape(shape)
            m.setflags(write=False)
            fixed[name] = m
        object.__setattr__(self, "perf", PerformanceChannel(**fixed))

    @property
    def n(self) -> int:
        return self.sys.n_states

    @property
    def k(self) -> int:
        """Dimension of ``z`` (uncertainty input)."""
        return self.sys.n_outputs

    @property
    def l(self) -> int:
        """Dimension of ``w`` (uncertainty output)."""
        return self.sys.n_inputs

    @property
    def n_d(self) -> int:
        return 0 if self.perf is None else self.perf.b2.shape[1]

    @property
    def n_e(self) -> int:
        return 0 if self.perf is None else self.perf.c2.shape[0]

    @classmethod
    def from_matrices(cls, a, b, c, d, b2=None, c2=None, d12=None, d21=None, d22=None) -> "Plant":
        sys = StateSpace(a, b, c, d)
        perf = None
        if b2 is not None:
            perf = PerformanceChannel(
                np.atleast_2d(np.array(b2, dtype=float)),
                np.atleast_2d(np.array(c2, dtype=float)),
                np.array(d12, dtype=float),
                np.array(d21, dtype=float),
                np.array(d22, dtype=float),
            )
        return cls(sys, perf)

    def to_dict(self) -> dict:
        out = self.sys.to_dict()
        if self.perf is not None:
            out["perf"] = self.perf.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Plant":
        sys = StateSpace.from_dict(data)
        perf = None
        if data.get("perf") is not None:
            pd = data["perf"]
            perf = PerformanceChannel(*(np.array(pd[k], dtype=float) for k in ("b2", "c2", "d12", "d21", "d22")))
        return cls(sys, perf)


def _input_map(plant: Plant, with_perf: bool) -> np.ndarray:
    """``u = [z; w]`` as a function of ``(x, w, d)``."""
    s = plant.sys
    n, l = plant.n, plant.l
    p = plant.n_d if with_perf else 0
    top = [s.c, s.d]
    bottom = [np.zeros((l, n)), np.eye(l)]
    if p:
        top.append(plant.perf.d12)
        bottom.append(np.zeros((l, p)))
    return np.vstack([np.hstack(top), np.hstack(bottom)])


def outer_rows(plant: Plant, psi_outer: StateSpace, with_perf: bool = False) -> Dict[str, np.ndarray]:
    """Row blocks of the main inequality's outer factor, columns ``(xi, x, w[, d])``."""
    if psi_outer.n_inputs != plant.k + plant.l:
        raise DimensionMismatch(
            f"outer factor takes {psi_outer.n_inputs} inputs, plant has k+l={plant.k + plant.l}"
        )
    if with_perf and plant.perf is None:
        raise NoPerformanceChannel("plant has no performance channel")
    s = plant.sys
    n_xi, n, l = psi_outer.n_states, plant.n, plant.l
    p = plant.n_d if with_perf else 0
    u_map = _input_map(plant, with_perf)
    n_aug = n_xi + n
    ident = np.hstack([np.eye(n_aug), np.zeros((n_aug, l + p))])
    plant_row = [np.zeros((n, n_xi)), s.a, s.b]
    if p:
        plant_row.append(plant.perf.b2)
    deriv = np.vstack([np.hstack([psi_outer.a, psi_outer.b @ u_map]), np.hstack(plant_row)])
    filt = np.hstack([psi_outer.c, psi_outer.d @ u_map])
    rows = {"ident": ident, "deriv": deriv, "filter": filt}
    if p:
        pf = plant.perf
        rows["error"] = np.hstack([np.zeros((plant.n_e, n_xi)), pf.c2, pf.d21, pf.d22])
        rows["disturbance"] = np.hstack([np.zeros((p, n_aug + l)), np.eye(p)])
    return rows


def assemble_main_inequality(
    plant: Plant,
    psi_outer: StateSpace,
    middle: Callable[[Mapping[str, np.ndarray]], np.ndarray],
    with_perf: bool = False,
) -> Callable[[Mapping[str, np.ndarray]], np.ndarray]:
    """Affine map of the variables whose value must be negative definite.

    Needs ``X`` (and ``gamma_sq`` when ``with_perf``) among the variables.
    """
    rows = outer_rows(plant, psi_outer, with_perf)
    ident, deriv, filt = rows["ident"], rows["deriv"], rows["filter"]

    def fn(vals: Mapping[str, np.ndarray]) -> np.ndarray:
        x = np.asarray(vals["X"])
        out = ident.T @ x @ deriv + deriv.T @ x @ ident + filt.T @ middle(vals) @ filt
        if with_perf:
            e, dist = rows["error"], rows["disturbance"]
            g = float(np.asarray(vals["gamma_sq"]).reshape(-1)[0])
            out = out + e.T @ e - g * dist.T @ dist
        return out

    return fn


def _static_recipe(vset: ValueSet) -> MultiplierRecipe:
    if vset.kind is SetKind.REPEATED:
        return MultiplierRecipe(TestKind.STATIC_REPEATED, vset)
    if vset.kind is SetKind.FULL_BLOCK:
        return MultiplierRecipe(TestKind.STATIC_FULL_BLOCK, vset)
    if vset.kind is SetKind.LMI_REGION:
        return MultiplierRecipe(TestKind.LMI_REGION_STATIC, vset)
    raise UnsupportedSet(
        f"no static test for {vset.kind.value}; use a DynIntersection recipe with a nu=0 filter"
    )


def _check_dims(plant: Plant, recipe: MultiplierRecipe) -> None:
    k, l = recipe.value_set.channel_dims
    if (plant.k, plant.l) != (k, l):
        raise DimensionMismatch(f"plant channel is {plant.k}->{plant.l}, value set expects {k}->{l}")


def _build(plant: Plant, recipe: MultiplierRecipe, with_perf: bool) -> SdpProblem:
    _check_dims(plant, recipe)
    psi_outer = outer_factor_any(recipe)
    n_aug = psi_outer.n_states + plant.n
    n_xi = psi_outer.n_states
    variables = [sym("X", n_aug)] + recipe.variable_shapes
    if with_perf:
        variables.append(sym("gamma_sq", 1))

    def mid(vals):
        return middle_matrix(recipe, vals)

    main = assemble_main_inequality(plant, psi_outer, mid, with_perf)

    def coupling(vals):
        t = terminal_cost(recipe, vals)
        emb = np.zeros((n_aug, n_aug))
        emb[:n_xi, :n_xi] = t
        return np.asarray(vals["X"]) - emb

    specs = [BlockSpec("coupling", "pos", coupling), BlockSpec("main", "pos", lambda v: -main(v))]
    specs += positivity_blocks(recipe)
    if recipe.test_kind.is_static and not recipe.value_set.parametric:
        # [0; I]^T P [0; I] <= 0; implied by the sign requirements, kept as a check
        def sign(vals):
            p = mid(vals)
            half = p.shape[0] - plant.l
            return -p[half:, half:]

        specs.append(BlockSpec("sign", "psd", sign))
    meta = {
        "test_kind": recipe.test_kind.value,
        "recipe": recipe.to_dict(),
        "plant": plant.to_dict(),
        "performance": bool(with_perf),
    }
    if with_perf:
        meta["performance_form"] = PERFORMANCE_FORM
    return SdpProblem.build(variables, specs, {"gamma_sq": 1.0} if with_perf else None, meta)


def build_static(plant: Plant, vset: ValueSet) -> SdpProblem:
    """Static-multiplier test for repeated, full-block and LMI-region sets."""
    return _build(plant, _static_recipe(vset), False)


def build_dynamic(plant: Plant, recipe: MultiplierRecipe) -> SdpProblem:
    return _build(plant, recipe, False)


def build(plant: Plant, recipe: MultiplierRecipe, performance: bool = False) -> SdpProblem:
    return _build(plant, recipe, performance)


def add_performance(problem: SdpProblem, plant: Plant) -> SdpProblem:
    """Rebuild ``problem`` with the performance channel and ``min gamma^2`` objective."""
    if plant.perf is None:
        raise NoPerformanceChannel("plant has no performance channel")
    recipe = MultiplierRecipe.from_dict(problem.meta["recipe"])
    return _build(plant, recipe, True)


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True, eq=False)
class Certificate:
    test_kind: TestKind
    variables: Dict[str, np.ndarray]
    gamma: Optional[float] = None
    solver_report: Mapping[str, Any] = field(default_factory=dict)
    meta: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "test_kind": self.test_kind.value,
            "variables": {k: np.asarray(v).tolist() for k, v in self.variables.items()},
            "gamma": self.gamma,
            "solver_report": dict(self.solver_report),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Certificate":
        return cls(
            TestKind(data["test_kind"]),
            {k: np.atleast_2d(np.array(v, dtype=float)) for k, v in data["variables"].items()},
            data.get("gamma"),
            dict(data.get("solver_report", {})),
            dict(data.get("meta", {})),
        )


@dataclass(frozen=True, eq=False)
class Analysis:
    problem: SdpProblem
    solution: SdpSolution
    certificate: Optional[Certificate]

    @property
    def certified(self) -> bool:
        return self.certificate is not None


def certificate_from_solution(problem: SdpProblem, solution: SdpSolution) -> Optional[Certificate]:
    """A certificate only for solutions that pass the independent residual check."""
    if solution.status is not Status.FEASIBLE:
        return None
    values = named_values(solution)
    report = check_solution(problem, values)
    if not report.ok():
        return None
    gamma = None
    if "gamma_sq" in values:
        gamma = math.sqrt(max(float(values["gamma_sq"][0, 0]), 0.0))
    meta = {k: v for k, v in problem.meta.items() if k in ("recipe", "performance", "performance_form")}
    return Certificate(
        TestKind(problem.meta["test_kind"]),
        values,
        gamma,
        {"status": solution.status.value, "max_primal_residual": solution.max_primal_residual, **report.to_dict()},
        meta,
    )


def analyze(
    plant: Plant,
    recipe: MultiplierRecipe,
    performance: bool = False,
    opts: Optional[SolverOptions] = None,
) -> Analysis:
    problem = build(plant, recipe, performance)
    solution = solve(problem, opts)
    return Analysis(problem, solution, certificate_from_solution(problem, solution))
