"""Directed cyclic network of identical subsystems with uncertain link strengths.

Each agent ``k`` is driven by ``w_k = sum_j a_kj (z_k - z_j)``. The only
nonzero links are ``a_{k,k+1}`` and the closing link ``a_{N,1}``. After
diagonalizing the Laplacian the network reduces to a single subsystem with a
repeated parametric uncertainty ``w = delta z``, ``delta`` ranging over the
Laplacian eigenvalues. That set is covered by

    {|v - 1| <= 1}  intersected with  {|v - 3/4| >= 3/4}

and analysed with the intersection test.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .builder import Analysis, Plant, analyze
from .errors import LinkOutOfRange
from .multipliers import MultiplierRecipe, TestKind, make_basis_filter
from .sdp import check_solution, named_values
from .valuesets import (
    ValueSet,
    boundary_samples,
    contains,
    equivalent_intersection,
    intersection_as_lmi_region,
)
from .verify import check_fdi, check_wellposedness, random_delta

P1 = np.array([[0.0, 1.0], [1.0, -1.0]])  # |v - 1| <= 1
P2 = np.array([[0.0, -0.75], [-0.75, 1.0]])  # |v - 3/4| >= 3/4

SUBSYSTEM = {
    "a": [[-13.0, -12.0], [1.0, 0.0]],
    "b": [[10.0, 0.0], [0.0, 0.0]],
    "c": [[-10.1, -11.2], [1.0, 2.0]],
    "d": [[10.0, 1.0], [0.0, 0.0]],
    "b2": [[1.0], [0.0]],
    "c2": [[1.0, 0.0]],
    "d12": [[0.0], [1.0]],
    "d21": [[0.0, 0.0]],
    "d22": [[0.0]],
}

DEFAULT_AGENTS = 20
DEFAULT_INTERVAL = (0.75, 1.0)
DEFAULT_ALPHA = 2.0


def subsystem_plant() -> Plant:
    return Plant.from_matrices(**SUBSYSTEM)


@dataclass(frozen=True, eq=False)
class CyclicNetwork:
    n_agents: int = DEFAULT_AGENTS
    link_interval: Tuple[float, float] = DEFAULT_INTERVAL
    subsystem: Plant = field(default_factory=subsystem_plant)

    def __post_init__(self):
        lo, hi = self.link_interval
        if lo > hi:
            raise ValueError(f"empty link interval [{lo}, {hi}]")
        if self.n_agents < 2:
            raise ValueError("a cycle needs at least two agents")


def laplacian(network: CyclicNetwork, links: Sequence[float]) -> np.ndarray:
    """Laplacian for link strengths ``links[k] = a_{k,k+1}`` (``links[-1] = a_{N,1}``)."""
    n = network.n_agents
    links = np.asarray(links, dtype=float).reshape(-1)
    if links.size != n:
        raise ValueError(f"need {n} link strengths, got {links.size}")
    lo, hi = network.link_interval
    bad = np.flatnonzero((links < lo) | (links > hi))
    if bad.size:
        raise LinkOutOfRange(f"links {bad.tolist()} outside [{lo}, {hi}]")
    lap = np.diag(links)
    idx = np.arange(n)
    lap[idx, (idx + 1) % n] -= links
    return lap


def link_instances(network: CyclicNetwork, samples: int, seed: int = 0) -> np.ndarray:
    """Random link vectors (uniform per link) followed by the two constant corners."""
    if samples < 1:
        raise ValueError("samples must be positive")
    lo, hi = network.link_interval
    rng = np.random.default_rng(seed)
    rand = rng.uniform(lo, hi, size=(samples, network.n_agents))
    corners = np.array([[lo] * network.n_agents, [hi] * network.n_agents])
    return np.vstack([rand, corners])


def eigenvalue_cloud(network: CyclicNetwork, samples: int = 200, seed: int = 0) -> List[Tuple[complex, int]]:
    """``(eigenvalue, instance_id)`` pairs over random and corner link instances."""
    out = []
    for i, links in enumerate(link_instances(network, samples, seed)):
        out.extend((complex(lam), i) for lam in np.linalg.eigvals(laplacian(network, links)))
    return out


def auxiliary_plant(network: CyclicNetwork) -> Plant:
    """The single-agent plant closed by ``w = delta z``."""
    return network.subsystem


def closed_loop_matrix(plant: Plant, delta: complex) -> np.ndarray:
    """``A + B delta (I - D delta)^-1 C`` for the repeated parametric loop."""
    s = plant.sys
    k = s.d.shape[0]
    gap = np.eye(k) - delta * s.d
    return s.a + delta * s.b @ np.linalg.solve(gap, s.c)


def closed_loop_eigs(plant: Plant, delta: complex) -> np.ndarray:
    return np.linalg.eigvals(closed_loop_matrix(plant, delta))


def covering_set(covering: str = "intersection", k: int = 2) -> ValueSet:
    """The covering of the Laplacian spectra (``disk`` drops the excluded disk)."""
    if covering == "intersection":
        return equivalent_intersection([P1, P2], k=k, parametric=True)
    if covering == "disk":
        return equivalent_intersection([P1], k=k, parametric=True)
    raise ValueError(f"unknown covering {covering!r}")


def example_recipe(nu: int, alpha: float = DEFAULT_ALPHA, test_kind: str = "DynIntersection",
                   covering: str = "intersection", k: int = 2) -> MultiplierRecipe:
    vset = covering_set(covering, k)
    kind = TestKind(test_kind)
    filt = make_basis_filter(alpha, nu, k)
    if kind is TestKind.DYN_INTERSECTION:
        return MultiplierRecipe(kind, vset, filt)
    if kind is TestKind.LMI_REGION_DYNAMIC:
        return MultiplierRecipe(kind, intersection_as_lmi_region(vset), filt)
    if kind is TestKind.LMI_REGION_STATIC:
        if nu:
            raise ValueError("LmiRegionStatic takes nu = 0")
        return MultiplierRecipe(kind, intersection_as_lmi_region(vset))
    raise ValueError(f"test kind {kind.value} does not apply to the network example")


@dataclass
class ExampleRun:
    report: Dict[str, Any]
    analysis: Analysis
    recipe: MultiplierRecipe
    cloud: List[Tuple[complex, int]]
    boundary: List[complex]

    @property
    def certified(self) -> bool:
        return self.analysis.certified


def run_example(
    nu: int = 1,
    alpha: float = DEFAULT_ALPHA,
    test_kind: str = "DynIntersection",
    covering: str = "intersection",
    network: Optional[CyclicNetwork] = None,
    samples: int = 200,
    seed: int = 0,
    fdi_deltas: int = 10,
    boundary_count: int = 400,
) -> ExampleRun:
    """Analyse the network example and verify whatever certificate comes back."""
    network = network or CyclicNetwork()
    plant = auxiliary_plant(network)
    recipe = example_recipe(nu, alpha, test_kind, covering, plant.k)
    t0 = time.perf_counter()
    analysis = analyze(plant, recipe, performance=True)
    solve_time = time.perf_counter() - t0

    cloud = eigenvalue_cloud(network, samples, seed)
    vset = recipe.value_set
    outside = [lam for lam, _ in cloud if not contains(vset, lam, 1e-8)]
    spectra_stable = max(float(closed_loop_eigs(plant, lam).real.max()) for lam, _ in cloud)
    report: Dict[str, Any] = {
        "config": {"nu": nu, "alpha": alpha, "test_kind": recipe.test_kind.value, "covering": covering,
                   "n_agents": network.n_agents, "link_interval": list(network.link_interval)},
        "seed": seed,
        "status": analysis.solution.status.value,
        "certified": analysis.certified,
        "gamma": None,
        "gamma_sq": None,
        "solve_seconds": solve_time,
        "n_psi": recipe.effective_filter.n_psi,
        "cloud": {"instances": samples + 2, "eigenvalues": len(cloud), "outside_cover": len(outside),
                  "max_closed_loop_real_part": spectra_stable},
        "wellposedness_min_abs_det": check_wellposedness(plant, vset, 200, seed),
    }
    if analysis.solution.variables:
        report["residuals"] = check_solution(analysis.problem, named_values(analysis.solution)).to_dict()
    cert = analysis.certificate
    if cert is not None:
        report["gamma"] = round(cert.gamma, 3)
        report["gamma_sq"] = cert.gamma**2
        report["gamma_exact"] = cert.gamma
        report["performance_form"] = cert.meta.get("performance_form")
        rng = np.random.default_rng(seed)
        worst = []
        for _ in range(fdi_deltas):
            delta = random_delta(vset, rng)
            worst.append(check_fdi(cert, recipe, delta).worst_eig)
        report["fdi"] = {"deltas": fdi_deltas, "worst_eig": min(worst) if worst else None}
    bnd = boundary_samples(covering_set(covering, plant.k), boundary_count, extent=3.0)
    return ExampleRun(report, analysis, recipe, cloud, bnd)
