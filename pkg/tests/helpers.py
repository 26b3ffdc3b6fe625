"""Shared generators and independent oracles for the test suite."""

import numpy as np

from iqc_lmi.builder import Plant


def random_plant(rng, n, k, gain=1.0):
    """Stable plant with ``k`` uncertainty channels and a scaled feedthrough."""
    a = rng.standard_normal((n, n))
    a -= (np.linalg.eigvals(a).real.max() + rng.uniform(0.5, 2.0)) * np.eye(n)
    b = rng.standard_normal((n, k))
    c = gain * rng.standard_normal((k, n))
    d = gain * 0.3 * rng.standard_normal((k, k))
    return Plant.from_matrices(a, b, c, d)


def hinf_norm(a, b, c, lo=1e-6, hi=1e6, rtol=1e-9):
    """H-infinity norm of a strictly proper stable system by Hamiltonian bisection."""
    a, b, c = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (a, b, c))

    def exceeds(g):
        h = np.block([[a, b @ b.T / g**2], [-c.T @ c, -a.T]])
        ev = np.linalg.eigvals(h)
        return np.any(np.abs(ev.real) < 1e-9 * (1 + np.abs(ev).max()))

    while hi - lo > rtol * hi:
        mid = np.sqrt(lo * hi)
        if exceeds(mid):
            lo = mid
        else:
            hi = mid
    return hi
