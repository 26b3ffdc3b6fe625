"""Solver-free verification of certificates.

Everything here works from the solved matrices alone: frequency sweeps of the
multiplier inequality, time-domain simulation of the finite-horizon
dissipation inequality, the commutation of SISO convolutions with MIMO ones,
robust invariance of the certified ellipsoids and well-posedness sampling.
Randomized checks take explicit seeds and record them in their reports.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .builder import Certificate, Plant
from .errors import DimensionMismatch, InfeasibleWitness, MembershipViolation
from .lti import (
    INF,
    StateSpace,
    _rk4_step_matrices,
    compose_series,
    eval_freq,
    is_hurwitz,
    kron_left,
    simulate,
    simulate_autonomous,
    simulate_exact,
    simulate_states,
    stack_outputs,
)
from .multipliers import MultiplierRecipe, TestKind, middle_matrix, outer_factor_any, terminal_cost
from .sdp import SdpProblem, SolverOptions, Status, gen, solve, sym, BlockSpec
from .valuesets import SetKind, ValueSet, contains, membership_margin, sample_points

TOL_SIM = 1e-4
FDI_TOL = 1e-7

Delta = Union[StateSpace, complex, float, np.ndarray]


def frequency_grid(count: int = 200, lo: float = 1e-3, hi: float = 1e3) -> list:
    """``count`` log-spaced frequencies plus ``0`` and ``INF``."""
    return [0.0] + list(np.logspace(np.log10(lo), np.log10(hi), count)) + [INF]


def _recipe_of(certificate: Certificate, recipe: Optional[MultiplierRecipe]) -> MultiplierRecipe:
    if recipe is not None:
        return recipe
    return MultiplierRecipe.from_dict(certificate.meta["recipe"])


def _delta_value(delta: Delta, omega) -> np.ndarray:
    if isinstance(delta, StateSpace):
        return eval_freq(delta, omega)
    return np.atleast_2d(np.asarray(delta, dtype=complex))


def _expand(vset: ValueSet, value: np.ndarray) -> np.ndarray:
    """The uncertainty matrix ``Delta(i w)`` (``v I_k`` for repeated kinds)."""
    if vset.kind is SetKind.FULL_BLOCK:
        k, l = vset.block_dims
        if value.shape != (l, k):
            raise DimensionMismatch(f"full-block delta must be {l}x{k}, got {value.shape}")
        return value
    if value.shape != (1, 1):
        raise DimensionMismatch("repeated kinds take a SISO delta")
    return value[0, 0] * np.eye(vset.rep_dim)


def _membership_arg(vset: ValueSet, value: np.ndarray):
    return value if vset.kind is SetKind.FULL_BLOCK else complex(value[0, 0])


# ---------------------------------------------------------------------------
# frequency domain


@dataclass(frozen=True)
class FdiReport:
    worst_eig: float
    omega_at_worst: Any
    points: int

    def ok(self, tol: float = FDI_TOL) -> bool:
        return self.worst_eig >= -tol


def multiplier_value(certificate: Certificate, recipe: MultiplierRecipe, omega) -> np.ndarray:
    """``Pi(i w) = Psi(i w)^* P Psi(i w)``."""
    psi = eval_freq(outer_factor_any(recipe), omega)
    p = middle_matrix(recipe, certificate.variables)
    return psi.conj().T @ p @ psi


def check_fdi(
    certificate: Certificate,
    recipe: Optional[MultiplierRecipe],
    delta: Delta,
    omegas: Optional[Sequence] = None,
    member_tol: float = 1e-9,
) -> FdiReport:
    """Most negative eigenvalue of ``[I; Delta]^* Pi [I; Delta]`` over the grid."""
    recipe = _recipe_of(certificate, recipe)
    vset = recipe.value_set
    omegas = frequency_grid() if omegas is None else omegas
    worst, at = np.inf, None
    k = vset.channel_dims[0]
    for w in omegas:
        value = _delta_value(delta, w)
        arg = _membership_arg(vset, value)
        if not contains(vset, arg, member_tol):
            raise MembershipViolation(f"delta leaves the value set at omega={w!r} (value {arg})")
        dmat = _expand(vset, value)
        stack = np.vstack([np.eye(k), dmat])
        pi = multiplier_value(certificate, recipe, w)
        form = stack.conj().T @ pi @ stack
        lam = float(np.linalg.eigvalsh(0.5 * (form + form.conj().T)).min())
        if lam < worst:
            worst, at = lam, w
    return FdiReport(worst, at, len(omegas))


# ---------------------------------------------------------------------------
# random uncertainties inside a value set


def _unit_gain_system(rng: np.random.Generator) -> StateSpace:
    """A random stable SISO system with H-infinity norm one."""
    kind = rng.integers(3)
    a = float(10 ** rng.uniform(-1, 1))
    sign = rng.choice([-1.0, 1.0])
    if kind == 0:  # all-pass (s - a)/(s + a)
        return StateSpace([[-a]], [[1.0]], [[-2 * a * sign]], [[sign]])
    if kind == 1:  # low-pass a/(s + a)
        return StateSpace([[-a]], [[1.0]], [[a * sign]], [[0.0]])
    zeta = float(rng.uniform(0.2, 0.9))
    wn = a
    peak = 1.0 / (2 * zeta * np.sqrt(1 - zeta**2)) if zeta < np.sqrt(0.5) else 1.0
    return StateSpace(
        [[0.0, 1.0], [-wn * wn, -2 * zeta * wn]], [[0.0], [1.0]], [[sign * wn * wn / peak, 0.0]], [[0.0]]
    )


def _real_section(vset: ValueSet, extent: float = 10.0, count: int = 4001) -> np.ndarray:
    xs = np.linspace(-extent, extent, count)
    return np.array([x for x in xs if membership_margin(vset, x) > 1e-6])


def random_delta(
    vset: ValueSet,
    rng: np.random.Generator,
    omegas: Optional[Sequence] = None,
    max_tries: int = 400,
    dynamic: bool = True,
) -> StateSpace:
    """A random stable uncertainty whose frequency response stays in ``vset``.

    Candidates ``c + rho * g(s)`` (``g`` of unit peak gain) are rejected unless
    membership holds on a dense grid, so correctness does not depend on how
    the candidates are generated.
    """
    grid = frequency_grid(400, 1e-4, 1e4) if omegas is None else omegas
    if vset.kind is SetKind.FULL_BLOCK:
        return _random_full_block_delta(vset, rng, grid, max_tries)
    reals = _real_section(vset)
    if reals.size == 0:
        raise MembershipViolation("value set has no real points; no real-rational delta fits")
    if vset.kind is SetKind.EQUATION or not dynamic:
        return StateSpace.static([[float(rng.choice(reals))]])
    scale = float(reals.max() - reals.min()) or 1.0
    for _ in range(max_tries):
        c = float(rng.choice(reals))
        rho = scale * float(rng.uniform(0.05, 1.0))
        g = _unit_gain_system(rng)
        cand = StateSpace(g.a, g.b, rho * g.c, rho * g.d + c)
        if all(contains(vset, complex(eval_freq(cand, w)[0, 0]), 0.0) for w in grid):
            return cand
        scale *= 0.97
    return StateSpace.static([[float(rng.choice(reals))]])


def _random_full_block_delta(vset, rng, grid, max_tries) -> StateSpace:
    k, l = vset.block_dims
    scale = 1.0
    for _ in range(max_tries):
        v0 = scale * rng.standard_normal((l, k))
        e = scale * rng.standard_normal((l, k))
        g = _unit_gain_system(rng)
        cand = StateSpace(
            np.kron(np.eye(k), g.a), np.kron(np.eye(k), g.b), e @ np.kron(np.eye(k), g.c), v0 + e * g.d[0, 0]
        )
        if all(contains(vset, eval_freq(cand, w), 0.0) for w in grid):
            return cand
        scale *= 0.95
    return StateSpace.static(np.zeros((l, k)))


def uncertainty_realization(vset: ValueSet, delta: StateSpace) -> StateSpace:
    """Realization of ``Delta`` itself: ``I_k (x) delta`` for repeated kinds."""
    if vset.kind is SetKind.FULL_BLOCK:
        return delta
    if delta.n_inputs != 1 or delta.n_outputs != 1:
        raise DimensionMismatch("repeated kinds take a SISO delta")
    return kron_left(vset.rep_dim, delta)


# ---------------------------------------------------------------------------
# time domain: finite-horizon dissipation


def random_signal(rng: np.random.Generator, channels: int, steps: int, dt: float) -> np.ndarray:
    """Low-pass filtered noise plus a few sinusoids, normalized to unit energy."""
    t = np.arange(steps) * dt
    out = np.zeros((steps, channels))
    for ch in range(channels):
        pole = float(10 ** rng.uniform(-0.5, 1.5))
        lp = StateSpace([[-pole]], [[pole]], [[1.0]], [[0.0]])
        noise = rng.standard_normal((steps, 1))
        sig = simulate(lp, noise, dt)[:, 0]
        for _ in range(2):
            f = float(10 ** rng.uniform(-1, 1))
            sig = sig + rng.uniform(0.2, 1.0) * np.sin(f * t + rng.uniform(0, 2 * np.pi))
        out[:, ch] = sig
    energy = float(np.sum(out**2) * dt)
    return out / np.sqrt(energy) if energy > 0 else out


def quadratic_cost_path(sys: StateSpace, weight: np.ndarray, u: np.ndarray, dt: float):
    """States and running integral of ``y^T W y`` under RK4 with held input.

    The integral is propagated as an extra RK4 state, so it is fourth-order
    accurate for piecewise-constant inputs.
    """
    states, _ = simulate_states(sys, u, dt)
    n, m = sys.n_states, sys.n_inputs
    g = np.hstack([sys.c, sys.d])
    gw = g.T @ weight @ g
    if n:
        _, _, stages = _rk4_step_matrices(sys.a, sys.b, dt)
    else:
        stages = (np.zeros((0, m)),) * 4
    u_part = np.hstack([np.zeros((m, n)), np.eye(m)])
    q = np.zeros((n + m, n + m))
    for wgt, s in zip((1.0, 2.0, 2.0, 1.0), stages):
        full = np.vstack([s, u_part])  # stage state and held input as maps of [x; u]
        q += wgt * full.T @ gw @ full
    q *= dt / 6.0
    xu = np.hstack([states, u])
    inc = np.einsum("ti,ij,tj->t", xu[:-1], q, xu[:-1])
    running = np.concatenate([[0.0], np.cumsum(inc)])
    return states, running


@dataclass(frozen=True)
class DissipationReport:
    worst_margin: float
    worst_seed: int
    worst_time: float
    horizons: List[float]
    inputs_tested: int
    seeds: List[int]
    dt: float
    normalization: float

    def ok(self, tol: float = TOL_SIM) -> bool:
        return self.worst_margin >= -tol

    def to_dict(self) -> dict:
        return asdict(self)


def dissipation_system(recipe: MultiplierRecipe, delta: StateSpace) -> StateSpace:
    """``Psi o [I; Delta]`` driven by ``z``; the state starts with the filter state."""
    vset = recipe.value_set
    k = vset.channel_dims[0]
    unc = uncertainty_realization(vset, delta)
    feed = stack_outputs(StateSpace.static(np.eye(k)), unc)
    return compose_series(outer_factor_any(recipe), feed)


def dissipation_path(
    certificate: Certificate,
    recipe: Optional[MultiplierRecipe],
    delta: StateSpace,
    seed: int,
    horizon: float = 25.0,
    dt: float = 1e-3,
    substeps: int = 1,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """Normalized dissipation functional on the ``dt`` grid for one seeded input.

    The input is held on the ``dt`` grid while the integrator takes
    ``substeps`` steps per sample, so refining ``substeps`` changes only the
    integration error, not the signal. Returns ``(times, values, scale)``.
    """
    recipe = _recipe_of(certificate, recipe)
    p = middle_matrix(recipe, certificate.variables)
    z_term = terminal_cost(recipe, certificate.variables)
    scale = float(np.linalg.norm(p, 2)) or 1.0
    sys = dissipation_system(recipe, delta)
    n_xi = z_term.shape[0]
    k = recipe.value_set.channel_dims[0]
    steps = int(round(horizon / dt)) + 1
    z = random_signal(np.random.default_rng(seed), k, steps, dt)
    if substeps > 1:
        z = np.vstack([np.repeat(z[:-1], substeps, axis=0), z[-1:]])
    states, running = quadratic_cost_path(sys, p, z, dt / substeps)
    states, running = states[::substeps], running[::substeps]
    xi = states[:, :n_xi]
    total = running + np.einsum("ti,ij,tj->t", xi, z_term, xi)
    return np.arange(steps) * dt, total / scale, scale


def check_dissipation(
    certificate: Certificate,
    recipe: Optional[MultiplierRecipe],
    delta: StateSpace,
    seeds: Union[int, Sequence[int]] = 5,
    horizon: float = 25.0,
    dt: float = 1e-3,
    substeps: int = 1,
) -> DissipationReport:
    """Worst value of ``int_0^T y'Py + xi(T)' Z xi(T)`` over seeds and ``T <= horizon``.

    ``z`` has unit energy on ``[0, horizon]`` and the functional is divided by
    ``||P||_2``, so margins are comparable across certificates.
    """
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    worst, worst_seed, worst_t, scale = np.inf, -1, 0.0, 1.0
    for seed in seed_list:
        times, values, scale = dissipation_path(certificate, recipe, delta, seed, horizon, dt, substeps)
        idx = int(np.argmin(values))
        if values[idx] < worst:
            worst, worst_seed, worst_t = float(values[idx]), seed, float(times[idx])
    return DissipationReport(worst, worst_seed, worst_t, [horizon], len(seed_list), seed_list, dt, scale)


# ---------------------------------------------------------------------------
# KYP witness for a single uncertainty


@dataclass(frozen=True)
class KypWitness:
    w_matrix: np.ndarray
    residual: float
    level: float
    max_eig: float

    @property
    def negative_semidefinite(self) -> bool:
        return self.max_eig <= 1e-6 * (1.0 + float(np.abs(self.w_matrix).max(initial=0.0)))


def _witness_form(a, b, c, d, p0, w):
    n = a.shape[0]
    first = np.hstack([np.eye(n), np.zeros((n, 1))])
    second = np.hstack([a, b])
    out_map = np.vstack([np.hstack([np.zeros((1, n)), np.ones((1, 1))]), np.hstack([c, d])])
    return first.T @ w @ second + second.T @ w @ first + out_map.T @ p0 @ out_map


def kyp_witness(delta: StateSpace, p0: Any, tol: float = 1e-7, bound: float = 1e6) -> KypWitness:
    """Symmetric ``W`` with ``[I 0; A B]^T [0 W; W 0] [..] + [0 I; C D]^T P0 [..] >= 0``.

    Solves ``max t`` subject to the form ``>= t I`` and ``|W| <= bound``; the
    witness exists when ``t >= -tol``.
    """
    p0 = np.asarray(p0, dtype=float)
    if delta.n_inputs != 1 or delta.n_outputs != 1:
        raise DimensionMismatch("kyp_witness expects a SISO delta")
    if not is_hurwitz(delta.a):
        raise ValueError("delta must be stable")
    a, b, c, d = delta.a, delta.b, delta.c, delta.d
    n = a.shape[0]
    if n == 0:
        val = float(_witness_form(a, b, c, d, p0, np.zeros((0, 0)))[0, 0])
        if val < -tol:
            raise InfeasibleWitness(f"static delta violates the value set (form {val:g})")
        return KypWitness(np.zeros((0, 0)), max(0.0, -val), val, -np.inf)
    specs = [
        BlockSpec("kyp", "psd", lambda v: _witness_form(a, b, c, d, p0, v["W"]) - v["t"][0, 0] * np.eye(n + 1)),
        BlockSpec("upper", "psd", lambda v: bound * np.eye(n) - v["W"]),
        BlockSpec("lower", "psd", lambda v: bound * np.eye(n) + v["W"]),
    ]
    problem = SdpProblem.build([sym("W", n), sym("t", 1)], specs, {"t": -1.0})
    sol = solve(problem)
    if sol.status is Status.INFEASIBLE or "W" not in sol.variables:
        raise InfeasibleWitness(f"witness SDP returned {sol.status.value}: {sol.diagnostics}")
    w = sol.variables["W"]
    level = float(sol.variables["t"][0, 0])
    if level < -tol:
        raise InfeasibleWitness(f"no witness: best level {level:.3e}")
    lam = float(np.linalg.eigvalsh(_witness_form(a, b, c, d, p0, w)).min())
    return KypWitness(w, max(0.0, -lam), level, float(np.linalg.eigvalsh(w).max()))


# ---------------------------------------------------------------------------
# commutation of a SISO convolution with a MIMO one


def commutation_error(g: StateSpace, h: StateSpace, u: np.ndarray, dt: float) -> np.ndarray:
    """Samples of ``(H o g I_k)(u) - (g I_l o H)(u)``.

    The left side is integrated with RK4, the right side exactly (matrix
    exponential). RK4 applied to both sides preserves the commutation to
    roundoff at any step, which would hide the integration error entirely.
    """
    if g.n_inputs != 1 or g.n_outputs != 1:
        raise DimensionMismatch("g must be SISO")
    k, l = h.n_inputs, h.n_outputs
    left = compose_series(h, kron_left(k, g))
    right = compose_series(kron_left(l, g), h)
    return simulate(left, u, dt) - simulate_exact(right, u, dt)


def check_commutation(g: StateSpace, h: StateSpace, u: np.ndarray, dt: float) -> float:
    """Sup-norm of the commutation defect over all samples and channels."""
    return float(np.abs(commutation_error(g, h, u, dt)).max())


def commutation_order(
    g: StateSpace, h: StateSpace, signal, horizon: float, dts: Sequence[float]
) -> List[float]:
    """Observed convergence orders ``log2(err(dt)/err(dt/2))`` for successive ``dts``.

    ``signal(t)`` returns the input at the sample times ``t`` (shape ``(N, k)``).
    """
    errs = []
    for dt in dts:
        t = np.arange(int(round(horizon / dt)) + 1) * dt
        errs.append(check_commutation(g, h, signal(t), dt))
    return [float(np.log(errs[i] / errs[i + 1]) / np.log(dts[i] / dts[i + 1])) for i in range(len(errs) - 1)]


# ---------------------------------------------------------------------------
# robust invariance of certified ellipsoids


@dataclass(frozen=True)
class EllipsoidReport:
    holds: bool
    worst_excess: float  # max over samples of (lhs - rhs) / max(rhs, floor)
    rhs: float
    samples: int

    def __bool__(self) -> bool:
        return self.holds


def closed_loop(plant: Plant, recipe: MultiplierRecipe, delta: StateSpace) -> np.ndarray:
    """State matrix of filter + plant + uncertainty with ``w = Delta(z)``; state ``(xi, x, x_delta)``."""
    s = plant.sys
    unc = uncertainty_realization(recipe.value_set, delta)
    psi = outer_factor_any(recipe)
    gap = np.eye(s.d.shape[0]) - s.d @ unc.d
    sinv = np.linalg.solve(gap, np.eye(gap.shape[0]))
    n_xi, n, n_d = psi.n_states, plant.n, unc.n_states
    z_x = sinv @ s.c
    z_d = sinv @ s.d @ unc.c
    w_x = unc.d @ z_x
    w_d = unc.c + unc.d @ z_d
    u_x = np.vstack([z_x, w_x])
    u_d = np.vstack([z_d, w_d])
    top = np.hstack([psi.a, psi.b @ u_x, psi.b @ u_d])
    mid = np.hstack([np.zeros((n, n_xi)), s.a + s.b @ w_x, s.b @ w_d])
    bot = np.hstack([np.zeros((n_d, n_xi)), unc.b @ z_x, unc.a + unc.b @ z_d])
    return np.vstack([top, mid, bot])


def check_ellipsoid_invariance(
    certificate: Certificate,
    plant: Plant,
    delta: StateSpace,
    x0: Any,
    horizon: float = 10.0,
    dt: float = 1e-3,
    recipe: Optional[MultiplierRecipe] = None,
    rel_tol: float = 1e-6,
    variables: Optional[Mapping[str, np.ndarray]] = None,
) -> EllipsoidReport:
    """Check ``[xi; x]^T (X - diag(T, 0)) [xi; x] <= x0^T X_xx x0`` along the closed loop.

    ``variables`` overrides the certificate matrices (used for negative controls).
    """
    recipe = _recipe_of(certificate, recipe)
    vals = dict(certificate.variables if variables is None else variables)
    x_mat = np.asarray(vals["X"])
    t_mat = terminal_cost(recipe, vals)
    n_xi = t_mat.shape[0]
    n = plant.n
    x0 = np.asarray(x0, dtype=float).reshape(n)
    acl = closed_loop(plant, recipe, delta)
    n_tot = acl.shape[0]
    v0 = np.zeros(n_tot)
    v0[n_xi:n_xi + n] = x0
    steps = int(round(horizon / dt)) + 1
    traj = simulate_autonomous(acl, v0, dt, steps)
    lyap = x_mat.copy()
    lyap[:n_xi, :n_xi] -= t_mat
    aug = traj[:, : n_xi + n]
    lhs = np.einsum("ti,ij,tj->t", aug, lyap, aug)
    rhs = float(x0 @ x_mat[n_xi:, n_xi:] @ x0)
    floor = max(abs(rhs), 1e-12)
    excess = float(np.max((lhs - rhs) / floor))
    return EllipsoidReport(excess <= rel_tol, excess, rhs, steps)


# ---------------------------------------------------------------------------
# well-posedness


def check_wellposedness(plant: Plant, vset: ValueSet, samples: int = 200, seed: int = 0) -> float:
    """Minimum of ``|det(I - D V)|`` over sampled ``V`` in the set (boundary and interior)."""
    rng = np.random.default_rng(seed)
    d = plant.sys.d
    worst = np.inf
    for v in sample_points(vset, samples, rng):
        vm = _expand(vset, np.atleast_2d(np.asarray(v, dtype=complex)))
        val = abs(np.linalg.det(np.eye(d.shape[0]) - d @ vm))
        worst = min(worst, float(val))
    return worst
