import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iqc_lmi.builder import Certificate, Plant
from iqc_lmi.errors import InfeasibleWitness, MembershipViolation
from iqc_lmi.lti import INF, StateSpace, eval_freq, is_hurwitz
from iqc_lmi.multipliers import MultiplierRecipe, TestKind, make_basis_filter, middle_matrix
from iqc_lmi.valuesets import contains, disk, repeated
from iqc_lmi.verify import (
    check_commutation,
    check_dissipation,
    check_ellipsoid_invariance,
    check_fdi,
    check_wellposedness,
    commutation_order,
    dissipation_path,
    dissipation_system,
    frequency_grid,
    kyp_witness,
    multiplier_value,
    quadratic_cost_path,
    random_delta,
    random_signal,
)

UNIT = [[1.0, 0.0], [0.0, -1.0]]
UNIT_SET = repeated(UNIT)
REC = MultiplierRecipe(TestKind.DYN_REPEATED, UNIT_SET, make_basis_filter(2.0, 1))


def hard_certificate(m=None):
    """Y = 0 multiplier ``psi^* M psi (1 - |delta|^2)`` with ``M > 0``."""
    m = np.diag([1.0, 2.0]) if m is None else m
    return Certificate(TestKind.DYN_REPEATED, {"M": m, "Y": np.zeros((1, 1)), "X": np.eye(2)})


def all_pass(a):
    return StateSpace([[-a]], [[1.0]], [[-2 * a]], [[1.0]])


def inflate_orthogonal(x_mat, x0, factor=10.0):
    """Corrupt ``X`` along plant directions orthogonal to ``x0``; the bound ``x0' X x0`` is unchanged."""
    x0 = np.asarray(x0, dtype=float) / np.linalg.norm(x0)
    n = x0.size
    out = x_mat.copy()
    out[-n:, -n:] += factor * np.linalg.norm(x_mat, 2) * (np.eye(n) - np.outer(x0, x0))
    return out


class TestFdi:
    def test_grid(self):
        g = frequency_grid()
        assert len(g) == 202 and g[0] == 0.0 and g[-1] is INF

    def test_zero_delta(self):
        rep = check_fdi(hard_certificate(), REC, StateSpace.static([[0.0]]))
        assert rep.worst_eig > 0

    def test_center_is_interior(self):
        s = disk(0.5, 1.0)
        r = MultiplierRecipe(TestKind.DYN_REPEATED, s, make_basis_filter(2.0, 1))
        assert check_fdi(hard_certificate(), r, 0.5).worst_eig > 0

    @pytest.mark.parametrize("a", [0.1, 1.0, 7.0])
    def test_all_pass_on_boundary(self, a):
        assert check_fdi(hard_certificate(), REC, all_pass(a)).worst_eig >= -1e-7

    def test_membership_violation(self):
        with pytest.raises(MembershipViolation):
            check_fdi(hard_certificate(), REC, StateSpace.static([[2.0]]))

    def test_complex_constant(self):
        assert check_fdi(hard_certificate(), REC, 0.3 + 0.4j).ok()

    def test_network_certificates(self, net_analyses):
        rng = np.random.default_rng(5)
        for recipe, a in net_analyses.values():
            for _ in range(3):
                assert check_fdi(a.certificate, recipe, random_delta(recipe.value_set, rng)).ok()


class TestRandomDelta:
    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31))
    def test_in_set_and_stable(self, seed):
        rng = np.random.default_rng(seed)
        d = random_delta(disk(1.0, 1.0), rng)
        assert is_hurwitz(d.a)
        for w in frequency_grid(100):
            assert contains(disk(1.0, 1.0), complex(eval_freq(d, w)[0, 0]))

    def test_signal_energy(self, rng):
        z = random_signal(rng, 2, 1001, 1e-2)
        assert np.sum(z**2) * 1e-2 == pytest.approx(1.0)


class TestDissipation:
    def test_zero_delta_nonnegative(self):
        rep = check_dissipation(hard_certificate(), REC, StateSpace.static([[0.0]]), seeds=2, horizon=5.0, dt=1e-2)
        assert rep.worst_margin >= 0

    @pytest.mark.parametrize("seed", range(3))
    def test_vanishing_terminal_cost(self, seed):
        rng = np.random.default_rng(seed)
        delta = random_delta(UNIT_SET, rng)
        rep = check_dissipation(hard_certificate(), REC, delta, seeds=[seed], horizon=10.0, dt=1e-3)
        assert rep.ok()

    def test_violation_detected(self):
        # strongly indefinite M breaks the IQC for delta = 0
        bad = hard_certificate(np.diag([1.0, -50.0]))
        rep = check_dissipation(bad, REC, StateSpace.static([[0.0]]), seeds=1, horizon=5.0, dt=1e-2)
        assert not rep.ok()

    def test_report_records_seed(self):
        rep = check_dissipation(hard_certificate(), REC, all_pass(1.0), seeds=[3, 4], horizon=2.0, dt=1e-2)
        assert rep.worst_seed in (3, 4) and rep.seeds == [3, 4]

    def test_integration_order(self):
        vals = [dissipation_path(hard_certificate(), REC, all_pass(2.0), 0, 5.0, 5e-2, s)[1] for s in (1, 2, 4, 8)]
        e = [np.abs(vals[i] - vals[-1]).max() for i in range(3)]
        assert e[0] / e[1] >= 4

    @pytest.mark.parametrize("w", [0.1, 0.5, 3.0])
    def test_parseval_consistency(self, w):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((2, 2))
        cert = hard_certificate(m @ m.T + np.eye(2))
        delta = StateSpace([[-1.0]], [[1.0]], [[0.8]], [[0.1]])
        sys = dissipation_system(REC, delta)
        period = 2 * np.pi / w
        dt = period / np.ceil(period / 1e-3)
        horizon = 2 * np.ceil(25.0 / 2 / period) * period  # at least 50 / alpha
        n = int(round(horizon / dt)) + 1
        t = np.arange(n) * dt
        _, run = quadratic_cost_path(sys, middle_matrix(REC, cert.variables), np.cos(w * t)[:, None], dt)
        half = (n - 1) // 2
        rate = (run[-1] - run[half]) / (t[-1] - t[half])
        v = np.array([1.0, eval_freq(delta, w)[0, 0]])
        ref = 0.5 * np.real(v.conj() @ multiplier_value(cert, REC, w) @ v)
        assert abs(rate - ref) <= 1e-2 * abs(ref)


class TestKypWitness:
    def test_zero_delta(self):
        w = kyp_witness(StateSpace([[-1.0]], [[1.0]], [[0.0]], [[0.0]]), UNIT)
        assert w.negative_semidefinite and w.level >= -1e-7

    def test_first_order_lag(self):
        w = kyp_witness(StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.0]]), UNIT)
        assert w.negative_semidefinite
        assert w.residual <= 1e-7

    def test_outside(self):
        with pytest.raises(InfeasibleWitness):
            kyp_witness(StateSpace.static([[2.0]]), UNIT)

    @settings(max_examples=8, deadline=None)
    @given(st.integers(0, 2**31))
    def test_strict_interior_gives_nsd(self, seed):
        rng = np.random.default_rng(seed)
        delta = random_delta(disk(0.0, 0.9), rng)
        if delta.n_states:
            assert kyp_witness(delta, UNIT).negative_semidefinite


class TestCommutation:
    def _h(self, rng, k=3, l=2):
        a = -np.diag(rng.uniform(0.5, 3.0, 2)) + np.array([[0.0, 1.0], [0.0, 0.0]])
        return StateSpace(a, rng.standard_normal((2, k)), rng.standard_normal((l, 2)), rng.standard_normal((l, k)))

    @staticmethod
    def _signal(t):
        return np.stack([np.sin(t), np.cos(2 * t), np.sin(0.5 * t) ** 2], 1)

    def test_static_g(self, rng):
        t = np.arange(2001) * 1e-3
        assert check_commutation(StateSpace.static([[1.7]]), self._h(rng), self._signal(t), 1e-3) <= 1e-10

    def test_dynamic_g(self, rng):
        t = np.arange(10001) * 1e-3
        g = StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
        assert check_commutation(g, self._h(rng), self._signal(t), 1e-3) <= 1e-5

    def test_static_h(self, rng):
        t = np.arange(10001) * 1e-3
        g = StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.5]])
        h = StateSpace.static(rng.standard_normal((2, 3)))
        assert check_commutation(g, h, self._signal(t), 1e-3) <= 1e-5

    def test_order(self, rng):
        g = StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.3]])
        orders = commutation_order(g, self._h(rng), self._signal, 10.0, [0.2, 0.1, 0.05])
        assert min(orders) >= 3


class TestEllipsoid:
    def test_zero_initial_state(self, net_plant, net_analyses):
        recipe, a = net_analyses[1]
        rep = check_ellipsoid_invariance(a.certificate, net_plant, StateSpace.static([[1.0]]), [0.0, 0.0], horizon=2.0,
                                         recipe=recipe)
        assert rep.holds and rep.rhs == 0

    def test_network_certificate(self, net_plant, net_analyses):
        recipe, a = net_analyses[1]
        delta = random_delta(recipe.value_set, np.random.default_rng(2))
        for x0 in ([1.0, 0.0], [0.0, 1.0]):
            assert check_ellipsoid_invariance(a.certificate, net_plant, delta, x0, recipe=recipe)

    def test_corrupted_certificate(self, net_plant, net_analyses):
        recipe, a = net_analyses[1]
        delta = random_delta(recipe.value_set, np.random.default_rng(2))
        x0 = np.array([1.0, 0.0])
        vals = dict(a.certificate.variables)
        vals["X"] = inflate_orthogonal(vals["X"], x0)
        rep = check_ellipsoid_invariance(a.certificate, net_plant, delta, x0, recipe=recipe, variables=vals)
        assert not rep.holds


class TestWellposedness:
    def test_zero_feedthrough(self):
        plant = Plant.from_matrices([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
        assert check_wellposedness(plant, UNIT_SET, 50) == pytest.approx(1.0)

    def test_network(self, net_plant, net_analyses):
        assert check_wellposedness(net_plant, net_analyses[1][0].value_set, 200) > 0.1

    def test_singular_detected(self):
        plant = Plant.from_matrices([[-1.0]], [[1.0]], [[1.0]], [[1.0]])
        assert check_wellposedness(plant, UNIT_SET, 100) < 1e-12
