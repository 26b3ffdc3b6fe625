"""Dynamic multipliers ``Pi = Psi^* P Psi``: filters, outer factors, middle and terminal matrices.

A recipe pairs a test kind with a basis filter ``psi`` and a value set. From
it we derive

* the outer factor ``Psi`` (block-diagonal copies of ``psi``),
* the middle matrix ``P`` as an affine function of the multiplier variables,
* the terminal cost matrix weighting the filter state,
* the KYP positivity constraints certifying ``psi^* M psi > 0`` on the
  extended imaginary axis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, MissingVariable, StaticKind, UnsupportedCombination
from .lti import StateSpace, diag_join, is_hurwitz, kron_left, kron_right
from .sdp import BlockSpec, VarSpec, gen, sym
from .valuesets import SetKind, ValueSet


class TestKind(str, enum.Enum):
    __test__ = False  # not a pytest class

    STATIC_REPEATED = "StaticRepeated"
    STATIC_FULL_BLOCK = "StaticFullBlock"
    DYN_REPEATED = "DynRepeated"
    DYN_FULL_BLOCK = "DynFullBlock"
    DYN_INTERSECTION = "DynIntersection"
    LMI_REGION_STATIC = "LmiRegionStatic"
    LMI_REGION_DYNAMIC = "LmiRegionDynamic"
    EQUATION_CONSTRAINED = "EquationConstrained"

    @property
    def is_static(self) -> bool:
        return self in (TestKind.STATIC_REPEATED, TestKind.STATIC_FULL_BLOCK, TestKind.LMI_REGION_STATIC)


_SET_FOR_KIND = {
    TestKind.STATIC_REPEATED: (SetKind.REPEATED,),
    TestKind.STATIC_FULL_BLOCK: (SetKind.FULL_BLOCK,),
    TestKind.DYN_REPEATED: (SetKind.REPEATED,),
    TestKind.DYN_FULL_BLOCK: (SetKind.FULL_BLOCK,),
    TestKind.DYN_INTERSECTION: (SetKind.INTERSECTION, SetKind.REPEATED),
    TestKind.LMI_REGION_STATIC: (SetKind.LMI_REGION,),
    TestKind.LMI_REGION_DYNAMIC: (SetKind.LMI_REGION,),
    TestKind.EQUATION_CONSTRAINED: (SetKind.EQUATION,),
}


@dataclass(frozen=True, eq=False)
class BasisFilter:
    psi: StateSpace
    alpha: Optional[float] = None
    order: Optional[int] = None
    family: str = "repeated"
    channel_dim: int = 1

    def __post_init__(self):
        if not is_hurwitz(self.psi.a):
            raise ValueError("filter state matrix must be Hurwitz")
        if self.psi.n_inputs != self.channel_dim:
            raise DimensionMismatch(
                f"filter has {self.psi.n_inputs} inputs, channel_dim is {self.channel_dim}"
            )

    @property
    def n_psi(self) -> int:
        return self.psi.n_states

    @property
    def m_psi(self) -> int:
        return self.psi.n_outputs

    def to_dict(self) -> dict:
        if self.alpha is not None and self.order is not None:
            return {"alpha": self.alpha, "nu": self.order, "family": self.family, "channel_dim": self.channel_dim}
        return {"psi": self.psi.to_dict(), "family": self.family, "channel_dim": self.channel_dim}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], channel_dim: Optional[int] = None) -> "BasisFilter":
        fam = data.get("family", "repeated")
        k = int(data.get("channel_dim", channel_dim or 1))
        if "psi" in data:
            return raw_filter(StateSpace.from_dict(data["psi"]), family=fam)
        return make_basis_filter(float(data["alpha"]), int(data["nu"]), k, fam)


def _siso_chain(alpha: float, nu: int) -> StateSpace:
    """Column ``[1, 1/(s+alpha), ..., 1/(s+alpha)^nu]^T`` with a single input."""
    a = -alpha * np.eye(nu) + np.diag(np.ones(max(nu - 1, 0)), -1)
    b = np.zeros((nu, 1))
    if nu:
        b[0, 0] = 1.0
    c = np.vstack([np.zeros((1, nu)), np.eye(nu)])
    d = np.zeros((nu + 1, 1))
    d[0, 0] = 1.0
    return StateSpace(a, b, c, d)


def make_basis_filter(alpha: float, nu_basis: int, channel_dim: int = 1, family: str = "repeated") -> BasisFilter:
    """Basis ``[1, 1/(s+alpha), ..., 1/(s+alpha)^nu]^T`` (tensored with ``I_k`` for ``repeated``)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if nu_basis < 0:
        raise ValueError("nu_basis must be nonnegative")
    siso = _siso_chain(float(alpha), int(nu_basis))
    if family == "repeated":
        return BasisFilter(kron_right(siso, channel_dim), float(alpha), int(nu_basis), family, channel_dim)
    if family == "siso_column":
        return BasisFilter(siso, float(alpha), int(nu_basis), family, 1)
    raise ValueError(f"unknown filter family {family!r}")


def raw_filter(psi: StateSpace, family: str = "repeated") -> BasisFilter:
    """Wrap an arbitrary stable realization as a basis filter."""
    return BasisFilter(psi, None, None, family, psi.n_inputs)


def static_filter(k: int) -> BasisFilter:
    return BasisFilter(StateSpace.static(np.eye(k)), None, 0, "repeated", k)


@dataclass(frozen=True, eq=False)
class MultiplierRecipe:
    test_kind: TestKind
    value_set: ValueSet
    filter: Optional[BasisFilter] = None

    def __post_init__(self):
        kind = TestKind(self.test_kind)
        object.__setattr__(self, "test_kind", kind)
        if self.value_set.kind not in _SET_FOR_KIND[kind]:
            raise UnsupportedCombination(
                f"{kind.value} cannot be used with a {self.value_set.kind.value} value set"
            )
        if kind.is_static:
            if self.filter is not None and self.filter.n_psi:
                raise UnsupportedCombination(f"{kind.value} takes no dynamic filter")
        elif self.filter is None:
            raise UnsupportedCombination(f"{kind.value} needs a filter")
        f = self.effective_filter
        k, l = self.value_set.channel_dims
        if kind in (TestKind.DYN_FULL_BLOCK, TestKind.STATIC_FULL_BLOCK):
            if f.channel_dim != 1:
                raise UnsupportedCombination("full-block tests need a single-input (siso_column) filter")
        elif f.channel_dim != k:
            raise UnsupportedCombination(f"filter acts on {f.channel_dim} channels, value set on {k}")

    @property
    def effective_filter(self) -> BasisFilter:
        if self.filter is not None:
            return self.filter
        if self.test_kind is TestKind.STATIC_FULL_BLOCK:
            return static_filter(1)
        return static_filter(self.value_set.rep_dim)

    @property
    def n_terms(self) -> int:
        return self.value_set.nu if self.test_kind is TestKind.DYN_INTERSECTION else 1

    def multiplier_names(self) -> List[Tuple[str, str]]:
        """``(M name, Y name)`` pairs, one per positivity constraint."""
        if self.test_kind is TestKind.DYN_INTERSECTION:
            return [(f"M{i + 1}", f"Y{i + 1}") for i in range(self.n_terms)]
        return [("M", "Y")]

    @property
    def variable_shapes(self) -> List[VarSpec]:
        f = self.effective_filter
        rep = self.value_set.nu if self.test_kind in (TestKind.LMI_REGION_STATIC, TestKind.LMI_REGION_DYNAMIC) else 1
        out: List[VarSpec] = []
        for m_name, y_name in self.multiplier_names():
            out.append(sym(m_name, rep * f.m_psi))
            out.append(sym(y_name, rep * f.n_psi))
        if self.test_kind is TestKind.EQUATION_CONSTRAINED:
            out.append(sym("Z", f.n_psi))
            out.append(gen("N", f.m_psi))
        return out

    @property
    def terminal_shapes(self) -> List[Tuple[str, int]]:
        return [(v.name, v.rows) for v in self.variable_shapes if v.name.startswith(("Y", "Z"))]

    def to_dict(self) -> dict:
        out = {"test_kind": self.test_kind.value, "value_set": self.value_set.to_dict()}
        if self.filter is not None:
            out["filter"] = self.filter.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], value_set: Optional[ValueSet] = None) -> "MultiplierRecipe":
        vset = value_set if value_set is not None else ValueSet.from_dict(data["value_set"])
        kind = TestKind(data["test_kind"])
        filt = None
        if data.get("filter") is not None:
            fd = dict(data["filter"])
            if "channel_dim" not in fd:
                fd["channel_dim"] = 1 if fd.get("family") == "siso_column" else vset.rep_dim
            filt = BasisFilter.from_dict(fd)
        return cls(kind, vset, filt)


def _get(vals: Mapping[str, np.ndarray], name: str, dim: int) -> np.ndarray:
    if name in vals:
        return np.asarray(vals[name])
    if dim == 0:
        return np.zeros((0, 0))
    raise MissingVariable(name)


def vec_identity(nu: int) -> np.ndarray:
    return np.eye(nu).reshape(-1, 1, order="F")


def lmi_region_middle(p0: Any, m: Any) -> np.ndarray:
    """``(I_2 (x) vec(I_nu) (x) I_k)^T (P0 (x) M) (I_2 (x) vec(I_nu) (x) I_k)``."""
    p0 = np.asarray(p0, dtype=float)
    m = np.asarray(m, dtype=float)
    if p0.ndim != 2 or p0.shape[0] != p0.shape[1] or p0.shape[0] % 2:
        raise DimensionMismatch("P0 must be square of even size 2*nu")
    nu = p0.shape[0] // 2
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % nu:
        raise DimensionMismatch(f"M must be square with size divisible by nu={nu}")
    k = m.shape[0] // nu
    if k == 0:
        return np.zeros((0, 0))
    e = np.kron(np.eye(2), np.kron(vec_identity(nu), np.eye(k)))
    return e.T @ np.kron(p0, m) @ e


def middle_matrix(recipe: MultiplierRecipe, vals: Mapping[str, np.ndarray]) -> np.ndarray:
    """The constant middle matrix of ``Pi = Psi^* P Psi`` for solved (or symbolic-basis) values."""
    kind = recipe.test_kind
    vset = recipe.value_set
    f = recipe.effective_filter
    if kind is TestKind.DYN_INTERSECTION:
        ps = vset.p_blocks
        return sum(np.kron(p, _get(vals, m, f.m_psi)) for p, (m, _) in zip(ps, recipe.multiplier_names()))
    if kind in (TestKind.LMI_REGION_STATIC, TestKind.LMI_REGION_DYNAMIC):
        return lmi_region_middle(vset.p0, _get(vals, "M", vset.nu * f.m_psi))
    out = np.kron(vset.p0, _get(vals, "M", f.m_psi))
    if kind is TestKind.EQUATION_CONSTRAINED:
        n = _get(vals, "N", f.m_psi)
        out = out + np.block([[np.zeros_like(n), n], [n.T, np.zeros_like(n)]])
    return out


def terminal_cost(recipe: MultiplierRecipe, solved_vars: Mapping[str, np.ndarray]) -> np.ndarray:
    """Terminal cost matrix on the outer factor's state."""
    kind = recipe.test_kind
    vset = recipe.value_set
    f = recipe.effective_filter
    if kind is TestKind.DYN_INTERSECTION:
        return sum(np.kron(p, _get(solved_vars, y, f.n_psi)) for p, (_, y) in zip(vset.p_blocks, recipe.multiplier_names()))
    if kind in (TestKind.LMI_REGION_STATIC, TestKind.LMI_REGION_DYNAMIC):
        return lmi_region_middle(vset.p0, _get(solved_vars, "Y", vset.nu * f.n_psi))
    out = np.kron(vset.p0, _get(solved_vars, "Y", f.n_psi))
    if kind is TestKind.EQUATION_CONSTRAINED:
        z = _get(solved_vars, "Z", f.n_psi)
        out = out + 0.5 * np.block([[np.zeros_like(z), z], [z, np.zeros_like(z)]])
    return out


def _outer(recipe: MultiplierRecipe) -> StateSpace:
    psi = recipe.effective_filter.psi
    if recipe.test_kind in (TestKind.DYN_FULL_BLOCK, TestKind.STATIC_FULL_BLOCK):
        k, l = recipe.value_set.block_dims
        return diag_join(kron_left(k, psi), kron_left(l, psi))
    return diag_join(psi, psi)


def outer_factor(recipe: MultiplierRecipe) -> StateSpace:
    """``Psi`` = ``diag(psi, psi)``, or ``diag(I_k (x) psi, I_l (x) psi)`` for full blocks."""
    if recipe.test_kind.is_static:
        raise StaticKind(f"{recipe.test_kind.value} has no dynamic outer factor")
    return _outer(recipe)


def outer_factor_any(recipe: MultiplierRecipe) -> StateSpace:
    """Like :func:`outer_factor` but returns the identity for static kinds."""
    return _outer(recipe)


def _kyp_form(psi: StateSpace, y: np.ndarray, m: np.ndarray, reps: int = 1) -> np.ndarray:
    a, b, c, d = (np.kron(np.eye(reps), x) for x in (psi.a, psi.b, psi.c, psi.d))
    n, k = b.shape
    first = np.hstack([np.eye(n), np.zeros((n, k))])
    second = np.hstack([a, b])
    out_map = np.hstack([c, d])
    return first.T @ y @ second + second.T @ y @ first + out_map.T @ m @ out_map


def positivity_constraint(
    filt: BasisFilter, m_name: str = "M", y_name: str = "Y", reps: int = 1, name: Optional[str] = None
) -> BlockSpec:
    """KYP block ``[I 0; A B]^T [0 Y; Y 0] [I 0; A B] + [C D]^T M [C D] > 0``.

    ``reps > 1`` emits the ``I_reps (x) psi`` variant used for LMI regions.
    """
    n, m = reps * filt.n_psi, reps * filt.m_psi

    def fn(vals):
        return _kyp_form(filt.psi, _get(vals, y_name, n), _get(vals, m_name, m), reps)

    return BlockSpec(name or f"positivity_{m_name}", "pos", fn)


def equation_constraint(filt: BasisFilter, z_name: str = "Z", n_name: str = "N") -> BlockSpec:
    """Equality block in ``(Z, N)`` with ``N^T + N`` in the output weight."""

    def fn(vals):
        n = _get(vals, n_name, filt.m_psi)
        return _kyp_form(filt.psi, _get(vals, z_name, filt.n_psi), n + n.T)

    return BlockSpec("equation", "zero", fn)


def positivity_blocks(recipe: MultiplierRecipe) -> List[BlockSpec]:
    f = recipe.effective_filter
    reps = recipe.value_set.nu if recipe.test_kind in (TestKind.LMI_REGION_STATIC, TestKind.LMI_REGION_DYNAMIC) else 1
    pairs = recipe.multiplier_names()
    out = [
        positivity_constraint(f, m, y, reps, name="positivity" if len(pairs) == 1 else f"positivity_{i + 1}")
        for i, (m, y) in enumerate(pairs)
    ]
    if recipe.test_kind is TestKind.EQUATION_CONSTRAINED:
        out.append(equation_constraint(f))
    return out
