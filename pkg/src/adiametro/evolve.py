"""Piecewise-constant evolution of segment plans.

Closed evolution uses exact segment exponentials or the symmetric Trotter
split. Open evolution integrates a Lindblad equation per segment with an
interaction-picture RK4 step: the Hamiltonian part is applied exactly and
only the dissipator is approximated, so the closed-system limit is exact.
"""
import csv
import json
from dataclasses import dataclass

import numpy as np

from .linalg import (NumericError, ValidationError, check_state, density, expm_unitary,
                     ground_state, purity)
from .model import SIGMA_Z, I2, SX, SZ, ZZ, build_perturbed
from .schedule import segment_plan

J_HZ = 214.5
TIME_UNIT_S = 2.0 / (np.pi * J_HZ)  # one dimensionless time unit in seconds

SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|, lowers sigma_z energy index 1 -> 0


@dataclass
class EvolutionTrace:
    indices: list
    states: list
    ground_fidelities: list
    purities: list
    final_state: np.ndarray

    @property
    def steps(self):
        return list(zip(self.indices, self.states, self.ground_fidelities))

    @property
    def average_fidelity(self):
        if not self.ground_fidelities:
            return float("nan")
        return float(np.mean(self.ground_fidelities))

    @property
    def final_fidelity(self):
        return self.ground_fidelities[-1] if self.ground_fidelities else float("nan")


@dataclass(frozen=True)
class RelaxationParams:
    """Per-spin T1 and T2 in dimensionless time units; spin order (1, 2)."""
    t1: tuple
    t2: tuple

    def __post_init__(self):
        t1 = tuple(float(x) for x in np.broadcast_to(self.t1, (2,)))
        t2 = tuple(float(x) for x in np.broadcast_to(self.t2, (2,)))
        object.__setattr__(self, "t1", t1)
        object.__setattr__(self, "t2", t2)
        for a, b in zip(t1, t2):
            if not (a > 0 and b > 0):
                raise ValidationError("relaxation times must be positive")
            if b > 2 * a * (1 + 1e-12):
                raise ValidationError(f"T2={b} exceeds 2*T1={2 * a}")

    @classmethod
    def from_seconds(cls, t1_s, t2_s, j_hz=J_HZ):
        unit = 2.0 / (np.pi * j_hz)
        return cls(tuple(np.asarray(t1_s, float) / unit), tuple(np.asarray(t2_s, float) / unit))

    @classmethod
    def nmr_default(cls):
        # spin 1 = 1H (T1 9.9 s, T2 0.6 s), spin 2 = 13C (T1 18.5 s, T2 0.2 s)
        return cls.from_seconds((9.9, 18.5), (0.6, 0.2))

    @classmethod
    def off(cls):
        return cls((1e300, 1e300), (1e300, 1e300))


def trotter_unitary(bz, bx, dt):
    hx = expm_unitary(bx * SX, dt / 2)
    return hx @ expm_unitary(bz * SZ + ZZ, dt) @ hx


def segment_unitary(bz, bx, dt):
    return expm_unitary(build_perturbed(bz, bx), dt)


def gate_fidelity(u, v):
    return float(abs(np.trace(u.conj().T @ v)) / len(u))


def segment_gate_fidelity(i, plan):
    if not 0 <= i < plan.m_plus_1:
        raise IndexError(f"segment index {i} out of range 0..{plan.m_plus_1 - 1}")
    bz = plan.bz_list[i]
    return gate_fidelity(segment_unitary(bz, plan.bx, plan.delta_t),
                         trotter_unitary(bz, plan.bx, plan.delta_t))


def _run_unitary(plan, initial, unitary):
    psi = check_state(np.asarray(initial, dtype=complex), tol=1e-10)
    idx, states, fids, purs = [], [], [], []
    for i, bz in enumerate(plan.bz_list):
        psi = unitary(bz, plan.bx, plan.delta_t) @ psi
        g = ground_state(build_perturbed(bz, plan.bx))
        rho = np.outer(psi, psi.conj())
        idx.append(i)
        states.append(rho)
        fids.append(float(abs(np.vdot(g, psi)) ** 2))
        purs.append(1.0)
    return EvolutionTrace(idx, states, fids, purs, density(psi))


def run_exact(plan, initial):
    return _run_unitary(plan, initial, segment_unitary)


def run_trotter(plan, initial):
    return _run_unitary(plan, initial, trotter_unitary)


# --- Liouville-space helpers (row-major vec: vec(A X B) = kron(A, B.T) vec(X)) ---

def unitary_superop(u):
    return np.kron(u, u.conj())


def lindblad_superop(jumps):
    """Superoperator of sum_k L rho L^dag - 1/2 {L^dag L, rho}."""
    d = jumps[0].shape[0] if jumps else 4
    eye = np.eye(d)
    out = np.zeros((d * d, d * d), dtype=complex)
    for L in jumps:
        ld = L.conj().T @ L
        out += np.kron(L, L.conj()) - 0.5 * (np.kron(ld, eye) + np.kron(eye, ld.T))
    return out


def rk4ip_step(h, dissipator, dt):
    """One interaction-picture RK4 step of d rho/dt = -i[h, rho] + D rho as a matrix.

    The coherent part exp(-i h dt/2) is applied exactly; D is any
    superoperator held constant over the step.
    """
    p = unitary_superop(expm_unitary(h, dt / 2))
    dd = dt * dissipator
    # linear-map version of the classic RK4IP scheme
    k1 = p @ dd
    b = p  # rho_I = P rho
    k2 = dd @ (b + 0.5 * k1)
    k3 = dd @ (b + 0.5 * k2)
    k4 = dd @ p @ (b + k3)
    return p @ (b + k1 / 6 + k2 / 3 + k3 / 3) + k4 / 6


def relaxation_jumps(relax):
    ops = []
    for spin in range(2):
        t1, t2 = relax.t1[spin], relax.t2[spin]
        gphi = max(1.0 / t2 - 1.0 / (2.0 * t1), 0.0)
        lower = SIGMA_PLUS
        z = SIGMA_Z
        if spin == 0:
            lower, z = np.kron(lower, I2), np.kron(z, I2)
        else:
            lower, z = np.kron(I2, lower), np.kron(I2, z)
        ops.append(np.sqrt(1.0 / t1) * lower)
        ops.append(np.sqrt(gphi / 2.0) * z)
    return ops


def propagate_density(rho, step_matrix, substeps):
    vec = np.linalg.matrix_power(step_matrix, substeps) @ rho.reshape(-1)
    return vec.reshape(rho.shape)


def run_with_relaxation(plan, initial, relax, substeps=32, trace_tol=1e-6):
    if substeps < 32:
        raise ValidationError(f"substeps must be >= 32, got {substeps}")
    rho = density(initial).astype(complex)
    diss = lindblad_superop(relaxation_jumps(relax))
    h_sub = plan.delta_t / substeps
    idx, states, fids, purs = [], [], [], []
    for i, bz in enumerate(plan.bz_list):
        h = build_perturbed(bz, plan.bx)
        rho = propagate_density(rho, rk4ip_step(h, diss, h_sub), substeps)
        rho = 0.5 * (rho + rho.conj().T)
        drift = abs(np.trace(rho).real - 1.0)
        if drift > trace_tol:
            raise NumericError(f"trace drift {drift:.3e} at segment {i}")
        g = ground_state(h)
        idx.append(i)
        states.append(rho)
        fids.append(float(np.real(np.vdot(g, rho @ g))))
        purs.append(purity(rho))
    return EvolutionTrace(idx, states, fids, purs, rho)


def optimize_step_count(cfg, schedule, relax, m_candidates, delta_t=0.36, substeps=32):
    """Average ground-state fidelity versus segment count at fixed segment duration.

    Each candidate M+1 uses T = (M+1) * delta_t, so adding segments both
    slows the sweep and lengthens exposure to relaxation.
    """
    cands = sorted(set(int(m) for m in m_candidates))
    if not cands or cands[0] < 2:
        raise ValidationError("segment-count candidates must be >= 2")
    g0 = ground_state(build_perturbed(cfg.bz0, cfg.bx))
    curve = []
    for m in cands:
        plan = segment_plan(schedule, cfg, m, delta_t)
        tr = run_with_relaxation(plan, g0, relax, substeps)
        curve.append((m, tr.average_fidelity))
    best = max(curve, key=lambda x: x[1])[0]
    return best, curve


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "ground_fidelity", "purity"])
        for i, f, p in zip(trace.indices, trace.ground_fidelities, trace.purities):
            w.writerow([i, f"{f:.12g}", f"{p:.12g}"])


def state_to_json(state):
    arr = np.asarray(state, dtype=complex).reshape(-1)
    return json.dumps([[float(f"{z.real:.12g}"), float(f"{z.imag:.12g}")] for z in arr])


def state_from_json(text):
    """Inverse of state_to_json; 16 entries are read back as a 4x4 matrix."""
    arr = np.array([complex(re, im) for re, im in json.loads(text)])
    return arr.reshape(4, 4) if arr.size == 16 else arr
