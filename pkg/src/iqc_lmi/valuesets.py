"""Uncertainty value sets and membership tests.

Five families are supported, each described by real symmetric matrices:

``RepeatedQuadratic``
    ``{v I_k : [1; v]^* P0 [1; v] >= 0}`` (a disk or half-plane).
``FullBlock``
    ``{V in C^(l x k) : [I_k; V]^* P0 [I_k; V] >= 0}``.
``Intersection``
    ``{v I_k : [1; v]^* P_i [1; v] >= 0 for all i}``.
``LmiRegion``
    ``{v I_k : [I_nu; v I_nu]^* P0 [I_nu; v I_nu] >= 0}``.
``EquationConstrained``
    ``RepeatedQuadratic`` restricted to real ``v``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, InvalidSignature, Unsupported

DEFAULT_TOL = 1e-9
CLIP_SLACK = 1e-12


class SetKind(str, enum.Enum):
    REPEATED = "RepeatedQuadratic"
    FULL_BLOCK = "FullBlock"
    INTERSECTION = "Intersection"
    LMI_REGION = "LmiRegion"
    EQUATION = "EquationConstrained"


def _sym(p: Any) -> np.ndarray:
    p = np.atleast_2d(np.array(p, dtype=float))
    if p.shape[0] != p.shape[1]:
        raise DimensionMismatch(f"value-set matrix must be square, got {p.shape}")
    if not np.allclose(p, p.T, atol=1e-12):
        raise DimensionMismatch("value-set matrix must be symmetric")
    p = 0.5 * (p + p.T)
    p.setflags(write=False)
    return p


@dataclass(frozen=True, eq=False)
class ValueSet:
    kind: SetKind
    p_blocks: Tuple[np.ndarray, ...]
    rep_dim: int = 1
    block_dims: Optional[Tuple[int, int]] = None
    nu: int = 1
    parametric: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", SetKind(self.kind))
        object.__setattr__(self, "p_blocks", tuple(_sym(p) for p in self.p_blocks))
        if self.block_dims is not None:
            object.__setattr__(self, "block_dims", tuple(int(x) for x in self.block_dims))
        self._check_shapes()
        if not self.parametric:
            self._check_signs()

    def _check_shapes(self) -> None:
        kind, ps = self.kind, self.p_blocks
        if not ps:
            raise DimensionMismatch("at least one matrix is required")
        if kind is SetKind.FULL_BLOCK:
            if self.block_dims is None:
                raise DimensionMismatch("FullBlock needs block_dims=(k, l)")
            k, l = self.block_dims
            if len(ps) != 1 or ps[0].shape != (k + l, k + l):
                raise DimensionMismatch(f"FullBlock needs one P0 of size {k + l}")
        elif kind is SetKind.LMI_REGION:
            if len(ps) != 1 or ps[0].shape[0] % 2:
                raise DimensionMismatch("LmiRegion needs one P0 of even size 2*nu")
            object.__setattr__(self, "nu", ps[0].shape[0] // 2)
        elif kind is SetKind.INTERSECTION:
            if any(p.shape != (2, 2) for p in ps):
                raise DimensionMismatch("Intersection matrices must be 2x2")
            object.__setattr__(self, "nu", len(ps))
        else:
            if len(ps) != 1 or ps[0].shape != (2, 2):
                raise DimensionMismatch(f"{kind.value} needs one 2x2 matrix")
        if self.rep_dim < 1:
            raise DimensionMismatch("rep_dim must be positive")

    def _check_signs(self) -> None:
        kind = self.kind
        if kind in (SetKind.REPEATED, SetKind.EQUATION, SetKind.INTERSECTION):
            for i, p in enumerate(self.p_blocks):
                if p[1, 1] > 0:
                    raise InvalidSignature(
                        f"matrix {i} has positive (2,2) entry {p[1, 1]:g}; "
                        "pass parametric=True for parametric uncertainties"
                    )
        else:
            half = self.nu if kind is SetKind.LMI_REGION else self.block_dims[0]
            r = self.p_blocks[0][half:, half:]
            if r.size and np.linalg.eigvalsh(r).max() > 1e-12:
                raise InvalidSignature("lower-right block R must be negative semidefinite")

    @property
    def p0(self) -> np.ndarray:
        return self.p_blocks[0]

    @property
    def channel_dims(self) -> Tuple[int, int]:
        """``(k, l)``: dimensions of the uncertainty input and output."""
        if self.kind is SetKind.FULL_BLOCK:
            return self.block_dims
        return (self.rep_dim, self.rep_dim)

    @property
    def is_scalar(self) -> bool:
        return self.kind is not SetKind.FULL_BLOCK

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind.value,
            "p_blocks": [p.tolist() for p in self.p_blocks],
            "rep_dim": self.rep_dim,
            "nu": self.nu,
            "parametric": self.parametric,
        }
        if self.block_dims is not None:
            out["block_dims"] = list(self.block_dims)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ValueSet":
        bd = data.get("block_dims")
        return cls(
            kind=SetKind(data["kind"]),
            p_blocks=tuple(np.array(p, dtype=float) for p in data["p_blocks"]),
            rep_dim=int(data.get("rep_dim", 1)),
            block_dims=tuple(bd) if bd is not None else None,
            parametric=bool(data.get("parametric", False)),
        )


def repeated(p0: Any, k: int = 1, parametric: bool = False) -> ValueSet:
    return ValueSet(SetKind.REPEATED, (p0,), rep_dim=k, parametric=parametric)


def full_block(p0: Any, k: int, l: int, parametric: bool = False) -> ValueSet:
    return ValueSet(SetKind.FULL_BLOCK, (p0,), rep_dim=1, block_dims=(k, l), parametric=parametric)


def lmi_region(p0: Any, k: int = 1, parametric: bool = False) -> ValueSet:
    return ValueSet(SetKind.LMI_REGION, (p0,), rep_dim=k, parametric=parametric)


def equation_constrained(p0: Any, k: int = 1, parametric: bool = False) -> ValueSet:
    return ValueSet(SetKind.EQUATION, (p0,), rep_dim=k, parametric=parametric)


def equivalent_intersection(
    p_list: Sequence[Any], k: int = 1, parametric: bool = False
) -> ValueSet:
    """Intersection of the disks/half-planes described by each 2x2 matrix."""
    return ValueSet(SetKind.INTERSECTION, tuple(p_list), rep_dim=k, parametric=parametric)


def disk(center: complex, radius: float, k: int = 1) -> ValueSet:
    """``|v - center| <= radius`` for a real center."""
    c = float(np.real(center))
    return repeated([[radius**2 - c * c, c], [c, -1.0]], k=k)


def intersection_as_lmi_region(vset: ValueSet) -> ValueSet:
    """The same intersection written as an LMI region with diagonal Q, S, R."""
    if vset.kind is not SetKind.INTERSECTION:
        raise Unsupported("expected an Intersection set")
    ps = np.array(vset.p_blocks)
    q, s, r = np.diag(ps[:, 0, 0]), np.diag(ps[:, 0, 1]), np.diag(ps[:, 1, 1])
    return lmi_region(np.block([[q, s], [s.T, r]]), k=vset.rep_dim, parametric=vset.parametric)


def scalar_form(p: np.ndarray, v: complex) -> float:
    """``[1; v]^* P [1; v]`` for a real symmetric 2x2 ``P``."""
    return float(p[0, 0] + 2.0 * p[0, 1] * np.real(v) + p[1, 1] * abs(v) ** 2)


def region_form(p0: np.ndarray, v: complex) -> np.ndarray:
    """Hermitian ``Q + v S + conj(v) S^T + |v|^2 R`` of an LMI region."""
    nu = p0.shape[0] // 2
    q, s, r = p0[:nu, :nu], p0[:nu, nu:], p0[nu:, nu:]
    h = q + v * s + np.conj(v) * s.T + abs(v) ** 2 * r
    return 0.5 * (h + h.conj().T)


def _as_scalar(vset: ValueSet, v: Any) -> complex:
    a = np.asarray(v)
    if a.ndim == 0:
        return complex(a)
    k = vset.rep_dim
    if a.shape != (k, k):
        raise DimensionMismatch(f"expected a scalar or a {k}x{k} matrix, got {a.shape}")
    val = complex(a[0, 0])
    if not np.allclose(a, val * np.eye(k)):
        raise DimensionMismatch("matrix value is not a multiple of the identity")
    return val


def membership_margin(vset: ValueSet, v: Any) -> float:
    """Smallest eigenvalue of the defining form(s); ``>= 0`` means inside.

    For ``EquationConstrained`` the imaginary part counts as a violation.
    """
    kind = vset.kind
    if kind is SetKind.FULL_BLOCK:
        k, l = vset.block_dims
        vm = np.asarray(v, dtype=complex).reshape(l, k) if np.ndim(v) else np.full((l, k), v)
        stack = np.vstack([np.eye(k), vm])
        h = stack.conj().T @ vset.p0 @ stack
        return float(np.linalg.eigvalsh(0.5 * (h + h.conj().T)).min())
    val = _as_scalar(vset, v)
    if kind is SetKind.LMI_REGION:
        return float(np.linalg.eigvalsh(region_form(vset.p0, val)).min())
    margin = min(scalar_form(p, val) for p in vset.p_blocks)
    if kind is SetKind.EQUATION:
        margin = min(margin, -abs(val.imag))
    return margin


def contains(vset: ValueSet, v: Any, tol: float = DEFAULT_TOL) -> bool:
    return membership_margin(vset, v) >= -tol


def _circle(p: np.ndarray):
    """Zero set of a scalar form: ``('circle', c, rho)``, ``('line', n, off)`` or None."""
    q, s, r = p[0, 0], p[0, 1], p[1, 1]
    if abs(r) > 1e-14:
        rho2 = (s * s - q * r) / (r * r)
        if rho2 <= 0:
            return None
        return ("circle", -s / r, float(np.sqrt(rho2)))
    if abs(s) > 1e-14:
        # 2 s Re v + q = 0
        return ("line", -q / (2 * s), None)
    return None


def _curve_points(curve, count: int, extent: float) -> np.ndarray:
    if curve[0] == "circle":
        _, c, rho = curve
        theta = 2 * np.pi * np.arange(count) / count
        return c + rho * np.exp(1j * theta)
    _, x0, _ = curve
    return x0 + 1j * np.linspace(-extent, extent, count)


def boundary_samples(vset: ValueSet, count: int, extent: float = 10.0) -> List[complex]:
    """Points on the boundary of a scalar value set, for plotting.

    Intersections return the union of each constraint's zero set clipped to the
    other constraints (``count`` points per constraint before clipping). Lines
    are sampled on ``|Im v| <= extent``.
    """
    if count < 1:
        raise ValueError("count must be positive")
    kind = vset.kind
    if kind in (SetKind.FULL_BLOCK, SetKind.EQUATION):
        raise Unsupported(f"boundary sampling is not defined for {kind.value}")
    if kind is SetKind.LMI_REGION:
        ps = _diagonal_region_blocks(vset.p0)
        if ps is None:
            return _region_boundary_by_rays(vset, count, extent)
    else:
        ps = list(vset.p_blocks)
    out: List[complex] = []
    for i, p in enumerate(ps):
        curve = _circle(p)
        if curve is None:
            continue
        for v in _curve_points(curve, count, extent):
            if all(scalar_form(pj, v) >= -CLIP_SLACK * (1 + abs(v) ** 2) for j, pj in enumerate(ps) if j != i):
                out.append(complex(v))
    return out


def _diagonal_region_blocks(p0: np.ndarray) -> Optional[List[np.ndarray]]:
    nu = p0.shape[0] // 2
    blocks = [p0[:nu, :nu], p0[:nu, nu:], p0[nu:, nu:]]
    if any(np.count_nonzero(b - np.diag(np.diag(b))) for b in blocks):
        return None
    return [np.array([[blocks[0][i, i], blocks[1][i, i]], [blocks[1][i, i], blocks[2][i, i]]]) for i in range(nu)]


def _region_boundary_by_rays(vset: ValueSet, count: int, extent: float) -> List[complex]:
    # Interior point by coarse grid search, then bisection along rays.
    grid = np.linspace(-extent, extent, 81)
    best, center = -np.inf, None
    for x in grid:
        for y in grid:
            m = membership_margin(vset, x + 1j * y)
            if m > best:
                best, center = m, x + 1j * y
    if center is None or best <= 0:
        return []
    out = []
    for theta in 2 * np.pi * np.arange(count) / count:
        direction = np.exp(1j * theta)
        lo, hi = 0.0, 4 * extent
        if membership_margin(vset, center + hi * direction) >= 0:
            continue
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if membership_margin(vset, center + mid * direction) >= 0:
                lo = mid
            else:
                hi = mid
        out.append(complex(center + lo * direction))
    return out


def sample_points(
    vset: ValueSet, count: int, rng: np.random.Generator, extent: float = 10.0
) -> List[Any]:
    """Boundary plus interior samples of the set (rejection sampling)."""
    if vset.kind is SetKind.FULL_BLOCK:
        return _sample_full_block(vset, count, rng)
    if vset.kind is SetKind.EQUATION:
        pts = rng.uniform(-extent, extent, size=50 * count)
        return [complex(x) for x in pts if contains(vset, x)][:count]
    bnd = boundary_samples(vset, max(count // 2, 1), extent)
    if bnd:
        b = np.array(bnd)
        lo_r, hi_r = b.real.min(), b.real.max()
        lo_i, hi_i = b.imag.min(), b.imag.max()
    else:
        lo_r = lo_i = -extent
        hi_r = hi_i = extent
    pad = 0.05 * max(hi_r - lo_r, hi_i - lo_i, 1e-3)
    interior: List[complex] = []
    for _ in range(200):
        if len(interior) >= count - len(bnd):
            break
        cand = rng.uniform(lo_r - pad, hi_r + pad, 64) + 1j * rng.uniform(lo_i - pad, hi_i + pad, 64)
        interior.extend(complex(v) for v in cand if contains(vset, v))
    return list(bnd) + interior[: max(count - len(bnd), 0)]


def _sample_full_block(vset: ValueSet, count: int, rng: np.random.Generator) -> List[np.ndarray]:
    k, l = vset.block_dims
    out: List[np.ndarray] = []
    scale = 1.0
    for _ in range(200 * count):
        if len(out) >= count:
            break
        v = scale * (rng.standard_normal((l, k)) + 1j * rng.standard_normal((l, k)))
        if contains(vset, v):
            out.append(v)
        else:
            scale *= 0.9
    return out
