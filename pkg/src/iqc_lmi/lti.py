"""Continuous-time LTI systems in state-space form.

Every object here is an immutable value; all operations are pure. Realizations
are never minimized, so compositions may carry uncontrollable or unobservable
modes. Downstream checks only look at frequency responses and simulated
trajectories, which do not care.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Union

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, SingularResolvent, UnstableBlowup

HURWITZ_EPS = 1e-9
OVERFLOW_GUARD = 1e12


class _Infinity(enum.Enum):
    INF = "inf"

    def __repr__(self) -> str:
        return "INF"


#: Sentinel for omega = infinity; never fed into matrix arithmetic.
INF = _Infinity.INF

Frequency = Union[float, _Infinity]


def _as_matrix(m: Any, rows: Optional[int] = None, cols: Optional[int] = None) -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.size == 0:
        a = a.reshape(rows if rows is not None else 0, cols if cols is not None else 0)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Realization ``(a, b, c, d)`` of ``G(s) = d + c (sI - a)^-1 b``.

    ``n = 0`` is allowed and describes a static gain ``d``.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __init__(self, a: Any, b: Any, c: Any, d: Any):
        d_ = np.array(d, dtype=float)
        if d_.ndim == 0:
            d_ = d_.reshape(1, 1)
        if d_.ndim != 2:
            raise DimensionMismatch(f"d must be 2-D, got shape {d_.shape}")
        p, m = d_.shape
        a_ = np.array(a, dtype=float)
        n = a_.shape[0] if a_.ndim == 2 else (1 if a_.ndim == 0 and a_.size else 0)
        if a_.size == 0:
            n = 0
        object.__setattr__(self, "a", _as_matrix(a, n, n))
        object.__setattr__(self, "b", _as_matrix(b, n, m))
        object.__setattr__(self, "c", _as_matrix(c, p, n))
        object.__setattr__(self, "d", _as_matrix(d_, p, m))
        self._validate()

    def _validate(self) -> None:
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise DimensionMismatch(f"a must be square, got {self.a.shape}")
        if self.b.shape[0] != n:
            raise DimensionMismatch(f"b has {self.b.shape[0]} rows, a has {n}")
        if self.c.shape[1] != n:
            raise DimensionMismatch(f"c has {self.c.shape[1]} columns, a has {n}")
        if self.d.shape != (self.c.shape[0], self.b.shape[1]):
            raise DimensionMismatch(
                f"d is {self.d.shape}, expected {(self.c.shape[0], self.b.shape[1])}"
            )

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.c.shape[0]

    @classmethod
    def static(cls, gain: Any) -> "StateSpace":
        d = np.atleast_2d(np.array(gain, dtype=float))
        p, m = d.shape
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), d)

    def __repr__(self) -> str:
        return f"StateSpace(n={self.n_states}, inputs={self.n_inputs}, outputs={self.n_outputs})"

    def to_dict(self) -> dict:
        return {
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "d": self.d.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "StateSpace":
        d = np.array(data["d"], dtype=float)
        d = d.reshape(1, 1) if d.ndim == 0 else d
        p, m = d.shape
        a = np.array(data["a"], dtype=float)
        n = a.shape[0] if a.size else 0
        return cls(
            a.reshape(n, n),
            np.array(data["b"], dtype=float).reshape(n, m),
            np.array(data["c"], dtype=float).reshape(p, n),
            d,
        )


def eval_freq(sys: StateSpace, omega: Frequency) -> np.ndarray:
    """Complex frequency response ``d + c (i omega I - a)^-1 b``; ``d`` at ``INF``."""
    if omega is INF:
        return sys.d.astype(complex)
    n = sys.n_states
    if n == 0:
        return sys.d.astype(complex)
    res = 1j * float(omega) * np.eye(n) - sys.a
    sv = np.linalg.svd(res, compute_uv=False)
    if sv[-1] <= 1e-12 * (1.0 + sv[0]):
        raise SingularResolvent(f"i*{omega}*I - A is singular (sigma_min={sv[-1]:.3e})")
    return sys.d + sys.c @ np.linalg.solve(res, sys.b)


def is_hurwitz(a: Any, eps: float = HURWITZ_EPS) -> bool:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return True
    return bool(np.all(np.linalg.eigvals(a).real < -eps))


def compose_series(g1: StateSpace, g2: StateSpace) -> StateSpace:
    """Realization of ``g1 o g2`` (``g2`` first), state ordered ``(x1, x2)``."""
    if g1.n_inputs != g2.n_outputs:
        raise DimensionMismatch(
            f"cannot feed {g2.n_outputs} outputs into {g1.n_inputs} inputs"
        )
    n1, n2 = g1.n_states, g2.n_states
    a = np.block([[g1.a, g1.b @ g2.c], [np.zeros((n2, n1)), g2.a]])
    b = np.vstack([g1.b @ g2.d, g2.b])
    c = np.hstack([g1.c, g1.d @ g2.c])
    d = g1.d @ g2.d
    return StateSpace(a, b, c, d)


def kron_left(r: int, sys: StateSpace) -> StateSpace:
    """``I_r (x) sys``: ``r`` decoupled copies of ``sys``."""
    if r < 1:
        raise DimensionMismatch("r must be positive")
    eye = np.eye(r)
    return StateSpace(
        np.kron(eye, sys.a), np.kron(eye, sys.b), np.kron(eye, sys.c), np.kron(eye, sys.d)
    )


def kron_right(sys: StateSpace, r: int) -> StateSpace:
    """``sys (x) I_r``; same transfer block layout as ``np.kron(G, I_r)``."""
    if r < 1:
        raise DimensionMismatch("r must be positive")
    eye = np.eye(r)
    return StateSpace(
        np.kron(sys.a, eye), np.kron(sys.b, eye), np.kron(sys.c, eye), np.kron(sys.d, eye)
    )


def diag_join(*systems: StateSpace) -> StateSpace:
    return StateSpace(
        scipy.linalg.block_diag(*[s.a for s in systems]),
        scipy.linalg.block_diag(*[s.b for s in systems]),
        scipy.linalg.block_diag(*[s.c for s in systems]),
        scipy.linalg.block_diag(*[s.d for s in systems]),
    )


def stack_outputs(*systems: StateSpace) -> StateSpace:
    """Systems sharing one input, outputs stacked; states are concatenated."""
    m = systems[0].n_inputs
    if any(s.n_inputs != m for s in systems):
        raise DimensionMismatch("stacked systems must share the input dimension")
    return StateSpace(
        scipy.linalg.block_diag(*[s.a for s in systems]),
        np.vstack([s.b for s in systems]),
        scipy.linalg.block_diag(*[s.c for s in systems]),
        np.vstack([s.d for s in systems]),
    )


def adjoint(sys: StateSpace) -> StateSpace:
    """Realization ``(-a^T, c^T, -b^T, d^T)`` of ``G*(s) = G(-s)^T``."""
    return StateSpace(-sys.a.T, sys.c.T, -sys.b.T, sys.d.T)


def _rk4_step_matrices(a: np.ndarray, b: np.ndarray, dt: float):
    """Stage maps of one classical RK4 step for ``x' = a x + b u`` with ``u`` held.

    Returns ``(phi, gamma, stages)``; ``stages`` holds the four stage states as
    linear maps of ``[x; u]``.
    """
    n, m = b.shape
    sel = np.hstack([np.eye(n), np.zeros((n, m))])
    drive = np.hstack([np.zeros((n, n)), b])
    k1 = a @ sel + drive
    s2 = sel + 0.5 * dt * k1
    k2 = a @ s2 + drive
    s3 = sel + 0.5 * dt * k2
    k3 = a @ s3 + drive
    s4 = sel + dt * k3
    k4 = a @ s4 + drive
    step = sel + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return step[:, :n], step[:, n:], (sel, s2, s3, s4)


def simulate_states(
    sys: StateSpace,
    u: Any,
    dt: float,
    x0: Optional[Any] = None,
) -> tuple:
    """RK4 with zero-order-hold input; returns ``(states, outputs)``.

    ``u`` has shape ``(N, m)``; ``states`` has shape ``(N, n)`` and holds the
    state at each sample time ``k*dt``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, 1) if sys.n_inputs == 1 else u.reshape(1, -1)
    if u.shape[1] != sys.n_inputs:
        raise DimensionMismatch(f"input has {u.shape[1]} channels, system {sys.n_inputs}")
    if u.shape[0] < 2:
        raise ValueError("need at least two input samples")
    n = sys.n_states
    steps = u.shape[0]
    x = np.zeros((steps, n))
    if x0 is not None:
        x[0] = np.asarray(x0, dtype=float).reshape(n)
    if n:
        phi, gamma, _ = _rk4_step_matrices(sys.a, sys.b, dt)
        drive = u @ gamma.T
        for k in range(steps - 1):
            x[k + 1] = phi @ x[k] + drive[k]
            if not np.isfinite(x[k + 1]).all() or np.abs(x[k + 1]).max() > OVERFLOW_GUARD:
                raise UnstableBlowup(f"state norm exceeded {OVERFLOW_GUARD:g} at t={(k + 1) * dt:g}")
    y = x @ sys.c.T + u @ sys.d.T
    return x, y


def simulate(sys: StateSpace, u: Any, dt: float, x0: Optional[Any] = None) -> np.ndarray:
    """Sampled output of ``x' = a x + b u, y = c x + d u`` (zero state by default)."""
    return simulate_states(sys, u, dt, x0)[1]


def simulate_exact(sys: StateSpace, u: Any, dt: float, x0: Optional[Any] = None) -> np.ndarray:
    """Exact response to the zero-order-hold input, via the matrix exponential.

    Serves as an integrator-free reference for :func:`simulate`.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, 1) if sys.n_inputs == 1 else u.reshape(1, -1)
    if u.shape[1] != sys.n_inputs:
        raise DimensionMismatch(f"input has {u.shape[1]} channels, system {sys.n_inputs}")
    n, m = sys.n_states, sys.n_inputs
    x = np.zeros((u.shape[0], n))
    if x0 is not None:
        x[0] = np.asarray(x0, dtype=float).reshape(n)
    if n:
        big = np.zeros((n + m, n + m))
        big[:n, :n] = sys.a
        big[:n, n:] = sys.b
        e = scipy.linalg.expm(big * dt)
        phi, gamma = e[:n, :n], e[:n, n:]
        drive = u @ gamma.T
        for k in range(u.shape[0] - 1):
            x[k + 1] = phi @ x[k] + drive[k]
    return x @ sys.c.T + u @ sys.d.T


def simulate_autonomous(a: Any, x0: Any, dt: float, steps: int) -> np.ndarray:
    """RK4 trajectory of ``x' = a x`` from ``x0``; shape ``(steps, n)``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = a.shape[0]
    sys = StateSpace(a, np.zeros((n, 1)), np.zeros((1, n)), np.zeros((1, 1)))
    return simulate_states(sys, np.zeros((steps, 1)), dt, x0)[0]
