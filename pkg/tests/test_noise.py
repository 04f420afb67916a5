import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adiametro.evolve import propagate_density, rk4ip_step, run_exact
from adiametro.linalg import (NumericError, ValidationError, density, expm_unitary, herm_eig,
                              hermiticity_defect, state_fidelity)
from adiametro.metrology import qfi_analytic, qfi_numeric
from adiametro.model import (SZ, FieldConfig, analytic_ground_state, build_perturbed,
                             numeric_ground_state)
from adiametro.noise import (GHZ, BathSpec, SchemeCurve, adiabatic_endpoint_qfi, bath_dissipator,
                             bose_occupation, compare_schemes, conventional_scheme, evolve_master,
                             master_step, qfi_mixed, run_adiabatic, transition_rates,
                             write_curves_csv)
from adiametro.schedule import GreedyParams, local_schedule, segment_plan
from conftest import random_density, random_hermitian

CLOSED = BathSpec(0.0, 1.0)
COLD = BathSpec(0.4, 1000.0)
HOT = BathSpec(0.4, 2.0)


def assert_physical(rho, tol=1e-8):
    assert abs(np.trace(rho).real - 1) <= tol
    assert np.linalg.eigvalsh(rho).min() >= -tol
    assert hermiticity_defect(rho) <= 1e-10


class TestBose:
    def test_values(self):
        assert bose_occupation(np.log(2), 1.0) == pytest.approx(1, rel=1e-14)
        assert bose_occupation(1.0, 1e4) == 0
        assert bose_occupation(0.1, 1.0) == pytest.approx(9.5083319447750496, rel=1e-13)

    def test_rejects_nonpositive_gap(self):
        with pytest.raises(ValidationError):
            bose_occupation(0.0, 1.0)

    def test_bath_validation(self):
        with pytest.raises(ValidationError):
            BathSpec(-0.1, 1.0)
        with pytest.raises(ValidationError):
            BathSpec(0.4, 0.0)
        assert BathSpec.from_temperature(0.4, 0.5).inv_temperature == 2.0


class TestMasterStep:
    @given(st.integers(0, 2**31))
    def test_closed_limit(self, seed):
        rng = np.random.default_rng(seed)
        h, rho = random_hermitian(rng, 4), random_density(rng, 4)
        u = expm_unitary(h, 0.01)
        assert np.max(np.abs(master_step(rho, h, CLOSED, 0.01) - u @ rho @ u.conj().T)) < 1e-12

    @given(st.integers(0, 2**31), st.floats(0.05, 5))
    def test_trace_preserved(self, seed, beta):
        rng = np.random.default_rng(seed)
        h, rho = random_hermitian(rng, 4), random_density(rng, 4)
        out = master_step(rho, h, BathSpec(0.4, beta), 0.01)
        assert abs(np.trace(out).real - 1) <= 1e-10

    def test_zero_temperature_relaxes_to_ground(self):
        h = build_perturbed(1.3, 0.2)
        w, v = herm_eig(h)
        rho = density(v[:, 3])
        pops = []
        for _ in range(400):
            rho = master_step(rho, h, BathSpec(0.4, 1e6), 0.05)
            pops.append(np.real(v[:, 0].conj() @ rho @ v[:, 0]))
        assert np.all(np.diff(pops) >= -1e-12)
        assert pops[-1] > 0.5

    @pytest.mark.parametrize("beta", [1.0, 3.0])
    def test_detailed_balance(self, beta):
        h = build_perturbed(1.3, 0.2)
        w, v = herm_eig(h)
        bath = BathSpec(0.4, beta)
        rho = propagate_density(density(v[:, 3]), rk4ip_step(h, bath_dissipator(h, bath), 0.05), 40000)
        p = np.real(np.diag(v.conj().T @ rho @ v))
        # two lowest levels of the symmetric sector: ground and the third eigenvalue (singlet is index 1 here)
        assert w[1] == pytest.approx(-1.0)
        assert p[2] / p[0] == pytest.approx(np.exp(-beta * (w[2] - w[0])), rel=0.1)

    def test_rates_follow_occupation(self):
        h = build_perturbed(1.3, 0.2)
        r, w, _ = transition_rates(h, BathSpec(0.4, 1.5))
        for a in range(4):
            for b in range(4):
                if w[b] > w[a] + 1e-9 and r[b, a] > 0:
                    assert r[a, b] / r[b, a] == pytest.approx(np.exp(-1.5 * (w[b] - w[a])), rel=1e-12)

    def test_flags_bad_input(self):
        with pytest.raises((NumericError, ValidationError)):
            master_step(np.diag([2.0, 0, 0, 0]), SZ, CLOSED, 0.01)


@pytest.fixture(scope="module")
def plan():
    cfg = FieldConfig(3, 1, 0.1)
    return segment_plan(local_schedule(cfg), cfg, 100, 0.2)


class TestEvolveMaster:
    def test_closed_matches_run_exact(self, plan):
        g0 = numeric_ground_state(3, 0.1)
        a = run_exact(plan, g0).final_state
        b = evolve_master(plan, g0, CLOSED).final_state
        assert state_fidelity(a, b) >= 1 - 1e-6

    def test_temperature_ordering_and_physicality(self, plan):
        g0 = numeric_ground_state(3, 0.1)
        closed = run_exact(plan, g0).final_fidelity
        cold = evolve_master(plan, g0, COLD)
        hot = evolve_master(plan, g0, HOT)
        assert abs(cold.final_fidelity - closed) <= 0.02
        assert hot.final_fidelity < cold.final_fidelity
        for tr in (cold, hot):
            for rho in tr.states:
                assert_physical(rho)

    def test_substep_floor(self, plan):
        with pytest.raises(ValidationError):
            evolve_master(plan, GHZ, COLD, substeps=4)


class TestQfiMixed:
    def test_pure_family(self):
        fam = lambda b: density(analytic_ground_state(b, 0.1))
        for bz in (0.6, 1.0, 1.4):
            ref = qfi_numeric(lambda b: analytic_ground_state(b, 0.1), bz)
            assert qfi_mixed(fam, bz) == pytest.approx(ref, rel=1e-4)

    def test_constant_families(self):
        rho = random_density(np.random.default_rng(3), 4)
        assert qfi_mixed(lambda b: rho, 0.5) == 0
        assert qfi_mixed(lambda b: np.eye(4) / 4, 0.5) == 0

    def test_endpoint_qfi_of_ideal_state(self):
        for bz, bx in ((1.0, 0.1), (1.2, 0.2), (0.7, 0.05)):
            g = analytic_ground_state(bz, bx)
            assert adiabatic_endpoint_qfi(g, bz, bx) == pytest.approx(qfi_analytic(bz, bx), rel=1e-6)


class TestConventional:
    T_GRID = np.arange(0, 10.01, 0.5)

    def test_closed_is_heisenberg(self):
        c = conventional_scheme(1.0, CLOSED, self.T_GRID)
        assert c.qfi_values[0] == 0
        assert np.allclose(c.qfi_values[1:], 16 * self.T_GRID[1:] ** 2, rtol=1e-6, atol=0)

    def test_hot_bath_unimodal(self):
        c = conventional_scheme(1.0, BathSpec(0.4, 2.0), self.T_GRID)
        q = c.qfi_values
        k = int(np.argmax(q))
        assert 0 < k < len(q) - 1
        assert np.all(np.diff(q[:k + 1]) > 0) and np.all(np.diff(q[k:]) < 0)
        assert q[-1] < 0.2 * q[k]

    def test_grid_validation(self):
        with pytest.raises(ValidationError):
            conventional_scheme(1.0, CLOSED, [0, 2, 1])

    def test_curve_type(self):
        c = SchemeCurve([1.0, 2.0, 4.0], [4.0, 12.0, 16.0], "conventional")
        assert c.best_rate() == 6.0 and c.envelope(10) == 60.0
        with pytest.raises(ValidationError):
            SchemeCurve([1.0], [1.0], "bayesian")
        with pytest.raises(ValidationError):
            SchemeCurve([2.0, 1.0], [1.0, 1.0], "adiabatic")


class TestAdiabatic:
    def test_cold_bath_keeps_qfi(self):
        rep = compare_schemes(FieldConfig(3, 1, 0.1), [COLD], np.arange(0, 5.01, 0.5),
                              params=GreedyParams(delta_a=1e-4))
        run = rep.adiabatic[0]
        assert run.qfi >= 0.8 * rep.noise_free_qfi
        assert rep.noise_free_qfi >= 0.8 * qfi_analytic(1, 0.1)
        for rho in run.trace.states:
            assert_physical(rho)
        assert len(rep.curves()) == 2

    def test_scaling_exponents(self):
        times, qfis = [], []
        for bx in (0.1, 0.125, 0.15, 0.2, 0.25, 0.3):
            run = run_adiabatic(FieldConfig(20, 1, bx), COLD, 400, GreedyParams(delta_a=2e-5))
            times.append(run.total_time)
            qfis.append(run.qfi)
        conv = conventional_scheme(1.0, BathSpec(0.4, 2.0), np.arange(0, 10.01, 0.5))
        env = [conv.envelope(t) for t in times]
        lt = np.log(times)
        assert np.polyfit(lt, np.log(env), 1)[0] == pytest.approx(1.0, abs=0.1)
        assert np.polyfit(lt, np.log(qfis), 1)[0] == pytest.approx(2.0, abs=0.1)


def test_curves_csv(tmp_path):
    curves = [SchemeCurve([0.0, 1.0], [0.0, 16.0], "conventional", 0.4, 0.5),
              SchemeCurve([20.0], [40.0], "adiabatic", 0.4, 0.5)]
    write_curves_csv(tmp_path / "c.csv", curves)
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["t", "qfi", "scheme", "lambda", "inv_beta"]
    assert rows[1][2] == "adiabatic" and len(rows) == 4


def test_adiabatic_advantage_needs_small_bx():
    # the cold-bath adiabatic endpoint beats repeated conventional runs only well below bx = 0.1
    grid = np.arange(0, 10.01, 0.5)
    small = compare_schemes(FieldConfig(3, 1, 0.01), [COLD], grid, params=GreedyParams(delta_a=2e-6))
    large = compare_schemes(FieldConfig(3, 1, 0.1), [COLD], grid, params=GreedyParams(delta_a=1e-4))
    assert small.adiabatic[0].qfi > small.envelopes[0]
    assert large.adiabatic[0].qfi < large.envelopes[0]
