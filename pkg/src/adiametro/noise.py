"""Thermal-bath master equation and the conventional-vs-adiabatic comparison.

The dissipator lives in the instantaneous eigenbasis {|a>} of the system
Hamiltonian:

    D rho = - sum_{i,a,b} r_ab (P_a rho + rho P_a - 2 |b><a| rho |a><b|)

with upward rates lambda^2 N(w_b - w_a) |<a|s-_i|b>|^2 and downward rates
lambda^2 (N(w_a - w_b) + 1) |<b|s-_i|a>|^2, N the Bose occupation and a
flat spectral density. Each (a, b) term is a Lindblad jump sqrt(2 r_ab)|b><a|.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .evolve import EvolutionTrace, propagate_density, rk4ip_step, unitary_superop
from .linalg import NumericError, ValidationError, density, herm_eig, purity
from .model import I2, SZ, build_perturbed, eigenbasis_matrix, numeric_ground_state
from .schedule import GreedyParams, greedy_schedule, segment_plan

SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|
LOWERING = (np.kron(SIGMA_MINUS, I2), np.kron(I2, SIGMA_MINUS))
GHZ = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
QFI_CUTOFF = 1e-12


@dataclass(frozen=True)
class BathSpec:
    coupling: float
    inv_temperature: float  # beta

    def __post_init__(self):
        if self.coupling < 0:
            raise ValidationError(f"coupling must be >= 0, got {self.coupling}")
        if not self.inv_temperature > 0:
            raise ValidationError(f"beta must be positive, got {self.inv_temperature}")

    @classmethod
    def from_temperature(cls, coupling, temperature):
        return cls(coupling, 1.0 / temperature)

    @property
    def temperature(self):
        return 1.0 / self.inv_temperature


@dataclass
class SchemeCurve:
    times: np.ndarray
    qfi_values: np.ndarray
    scheme: str
    coupling: float = 0.0
    temperature: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.qfi_values = np.asarray(self.qfi_values, dtype=float)
        if self.scheme not in ("conventional", "adiabatic"):
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        if self.times.shape != self.qfi_values.shape:
            raise ValidationError("times and qfi_values differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("times must increase")

    def best_rate(self):
        """max_t F(t)/t over t > 0."""
        m = self.times > 0
        return float(np.max(self.qfi_values[m] / self.times[m]))

    def envelope(self, total_time):
        """QFI of repeating the best-rate run for a total time T."""
        return total_time * self.best_rate()


def bose_occupation(omega_gap, beta):
    if not omega_gap > 0:
        raise ValidationError(f"Bose occupation needs a positive gap, got {omega_gap}")
    x = beta * omega_gap
    return 0.0 if x > 700 else float(1.0 / np.expm1(x))


def transition_rates(h_s, bath):
    """Rate matrix r[a, b] for transitions a -> b plus the eigenbasis used."""
    w, v = herm_eig(h_s)
    n = len(w)
    r = np.zeros((n, n))
    if bath.coupling == 0:
        return r, w, v
    lam2 = bath.coupling**2
    tol = 1e-12 * max(1.0, float(np.max(np.abs(w))))
    for sm in LOWERING:
        m = v.conj().T @ sm @ v  # m[a, b] = <a|s-|b>
        for a in range(n):
            for b in range(n):
                dw = w[b] - w[a]
                if dw > tol:
                    r[a, b] += lam2 * bose_occupation(dw, bath.inv_temperature) * abs(m[a, b]) ** 2
                elif dw < -tol:
                    r[a, b] += lam2 * (bose_occupation(-dw, bath.inv_temperature) + 1) * abs(m[b, a]) ** 2
    return r, w, v


def bath_dissipator(h_s, bath):
    """Dissipator superoperator (row-major vec) in the eigenbasis of h_s."""
    r, _, v = transition_rates(h_s, bath)
    n = len(r)
    out = np.zeros((n * n, n * n), dtype=complex)
    eye = np.eye(n)
    for a in range(n):
        for b in range(n):
            if r[a, b] == 0:
                continue
            jump = np.sqrt(2 * r[a, b]) * np.outer(v[:, b], v[:, a].conj())
            ld = jump.conj().T @ jump
            out += np.kron(jump, jump.conj()) - 0.5 * (np.kron(ld, eye) + np.kron(eye, ld.T))
    return out


def _check_rho(rho, where, tol=1e-8):
    tr = np.trace(rho).real
    if abs(tr - 1) > tol:
        raise NumericError(f"trace {tr!r} drifted beyond {tol} ({where})")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lo < -tol:
        raise NumericError(f"density matrix lost positivity: eigenvalue {lo:.3e} ({where})")


def master_step(rho, h_s, bath, dt):
    """One interaction-picture RK4 step of the thermal master equation."""
    rho = density(rho)
    step = rk4ip_step(h_s, bath_dissipator(h_s, bath), dt)
    out = propagate_density(rho, step, 1)
    out = 0.5 * (out + out.conj().T)
    _check_rho(out, "master_step", tol=1e-9)
    return out


def default_substeps(delta_t, max_h=0.05):
    return max(8, int(np.ceil(delta_t / max_h)))


def evolve_master(plan, initial, bath, substeps=None):
    if substeps is None:
        substeps = default_substeps(plan.delta_t)
    if substeps < 8:
        raise ValidationError(f"substeps must be >= 8, got {substeps}")
    rho = density(initial).astype(complex)
    h_sub = plan.delta_t / substeps
    idx, states, fids, purs = [], [], [], []
    for i, bz in enumerate(plan.bz_list):
        h = build_perturbed(bz, plan.bx)
        rho = propagate_density(rho, rk4ip_step(h, bath_dissipator(h, bath), h_sub), substeps)
        rho = 0.5 * (rho + rho.conj().T)
        _check_rho(rho, f"segment {i}")
        g = herm_eig(h)[1][:, 0]
        idx.append(i)
        states.append(rho)
        fids.append(float(np.real(np.vdot(g, rho @ g))))
        purs.append(purity(rho))
    return EvolutionTrace(idx, states, fids, purs, rho)


def qfi_mixed(rho_family, bz, db=1e-6):
    """sum_{ij} 2 |<i|d rho|j>|^2 / (p_i + p_j) over pairs with p_i + p_j > 1e-12."""
    rho = density(rho_family(bz))
    drho = (density(rho_family(bz + db)) - density(rho_family(bz - db))) / (2 * db)
    p, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    d = v.conj().T @ drho @ v
    s = p[:, None] + p[None, :]
    mask = s > QFI_CUTOFF
    return float(np.sum(2 * np.abs(d[mask]) ** 2 / s[mask]))


def conventional_scheme(bz, bath, t_grid, db=1e-6, max_h=0.05):
    """GHZ probe under bz (sz1 + sz2) with the same thermal dissipator."""
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0) or t_grid[0] < 0:
        raise ValidationError("t_grid must be nonnegative and increasing")
    fields = (bz - db, bz, bz + db)
    gens = [(f * SZ, bath_dissipator(f * SZ, bath)) for f in fields]
    rhos = [np.outer(GHZ, GHZ.conj()) for _ in fields]
    t_prev, out = 0.0, []
    for t in t_grid:
        span = t - t_prev
        if span > 0:
            n = int(np.ceil(span / max_h))
            for k, (h, diss) in enumerate(gens):
                rhos[k] = propagate_density(rhos[k], rk4ip_step(h, diss, span / n), n)
                _check_rho(rhos[k], f"conventional t={t:.6g}")
        t_prev = t
        fam = dict(zip(fields, rhos))
        out.append(qfi_mixed(lambda b: fam[b], bz, db) if t > 0 else 0.0)
    return SchemeCurve(t_grid, np.array(out), "conventional", bath.coupling, bath.temperature)


def adiabatic_endpoint_qfi(rho, bz, bx, db=1e-6):
    """QFI of rho for the family that rigidly follows the analytic eigenbasis.

    rho(b) = W(b) rho W(b)^dag with W(b) = sum_k |e_k(b)><e_k(bz)|, so a
    perfectly prepared ground state gives exactly F_Q = 2 bx^2 / ((1-bz)^2 + 2 bx^2)^2.
    """
    e0 = eigenbasis_matrix(bz, bx)
    core = e0.conj().T @ density(rho) @ e0

    def fam(b):
        e = eigenbasis_matrix(b, bx)
        return e @ core @ e.conj().T

    return qfi_mixed(fam, bz, db)


@dataclass
class AdiabaticRun:
    total_time: float
    final_state: np.ndarray
    qfi: float
    ground_fidelity: float
    trace: EvolutionTrace


def run_adiabatic(cfg, bath, m_plus_1=400, params=None, schedule=None, substeps=None):
    """Greedy sweep to cfg.bzf under the bath; endpoint QFI at bzf."""
    sch = schedule if schedule is not None else greedy_schedule(cfg, params or GreedyParams())
    plan = segment_plan(sch, cfg, m_plus_1, sch.total_time / m_plus_1)
    g0 = numeric_ground_state(cfg.bz0, cfg.bx)
    tr = evolve_master(plan, g0, bath, substeps)
    rho = tr.final_state
    return AdiabaticRun(plan.total_time, rho, adiabatic_endpoint_qfi(rho, cfg.bzf, cfg.bx),
                        tr.final_fidelity, tr)


@dataclass
class ComparisonReport:
    conventional: list
    adiabatic: list
    envelopes: list
    noise_free_qfi: float
    total_time: float

    def curves(self):
        out = list(self.conventional)
        for run, c in zip(self.adiabatic, self.conventional):
            out.append(SchemeCurve([run.total_time], [run.qfi], "adiabatic", c.coupling, c.temperature))
        return out


def compare_schemes(cfg, bath_list, t_grid, m_plus_1=400, params=None, substeps=None):
    sch = greedy_schedule(cfg, params or GreedyParams())
    ideal = run_adiabatic(cfg, BathSpec(0.0, 1.0), m_plus_1, schedule=sch, substeps=substeps)
    conv, adia, env = [], [], []
    for bath in bath_list:
        c = conventional_scheme(cfg.bzf, bath, t_grid)
        run = run_adiabatic(cfg, bath, m_plus_1, schedule=sch, substeps=substeps)
        conv.append(c)
        adia.append(run)
        env.append(c.envelope(run.total_time))
    return ComparisonReport(conv, adia, env, ideal.qfi, ideal.total_time)


def write_curves_csv(path, curves):
    rows = []
    for c in curves:
        for t, q in zip(c.times, c.qfi_values):
            rows.append((c.scheme, c.coupling, c.temperature, t, q))
    rows.sort(key=lambda r: (r[0], r[2], r[3]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "qfi", "scheme", "lambda", "inv_beta"])
        for scheme, lam, temp, t, q in rows:
            w.writerow([f"{t:.12g}", f"{q:.12g}", scheme, f"{lam:.12g}", f"{temp:.12g}"])
