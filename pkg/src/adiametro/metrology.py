"""Fisher information, optimal measurement, error budget and figures of merit.

The probe is the adiabatically prepared ground state |g(bz)> of the
perturbed Ising model; the field bz is read out with the two-outcome
measurement built from the SLD eigenvectors at a prior estimate bz_hat.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .linalg import NumericError, ValidationError, density
from .model import (KET_00, KET_11, KET_B, KET_S, SIGMA_X, SIGMA_Y, SIGMA_Z, I2,
                    eigenbasis_matrix, mixing_angle)

GAMMA_C = 67.283e6   # 13C gyromagnetic ratio, rad s^-1 T^-1
GAMMA_H = 267.522e6  # 1H
DEFAULT_DELTA = 0.03


# ---------------------------------------------------------------- QFI

def qfi_analytic(bz, bx):
    if bx <= 0:
        raise ValidationError(f"bx must be positive, got {bx}")
    return 2 * bx**2 / ((1 - bz) ** 2 + 2 * bx**2) ** 2


def _family_state(family, bz):
    psi = np.asarray(family(bz), dtype=complex)
    err = abs(np.vdot(psi, psi).real - 1)
    if err > 1e-10:
        raise ValidationError(f"state family is not normalized at bz={bz} (error {err:.2e})")
    return psi


def qfi_numeric(state_family, bz, db=1e-5):
    """4(<dg|dg> - |<g|dg>|^2) with a central-difference derivative."""
    g = _family_state(state_family, bz)
    dg = (_family_state(state_family, bz + db) - _family_state(state_family, bz - db)) / (2 * db)
    return float(4 * (np.vdot(dg, dg).real - abs(np.vdot(g, dg)) ** 2))


def fidelity_susceptibility(state_family, bz, db=1e-6):
    """8 (1 - |<psi(bz)|psi(bz+db)>|) / db^2, computed without cancellation."""
    a = _family_state(state_family, bz)
    b = _family_state(state_family, bz + db)
    ov = np.vdot(a, b)
    ph = ov / abs(ov) if abs(ov) > 0 else 1.0
    # 1 - |<a|b>| = ||a - b e^{-i arg<a|b>}||^2 / 2
    one_minus = 0.5 * np.linalg.norm(a - b / ph) ** 2
    return float(8 * one_minus / db**2)


def classical_fisher(p, dp):
    """Fisher information of a two-outcome distribution (p, 1-p)."""
    return float(dp**2 * (1 / p + 1 / (1 - p)))


# ---------------------------------------------------------------- measurement

@dataclass(frozen=True)
class MeasurementBasis:
    bz_hat: float
    bx: float
    vectors: np.ndarray  # row m is v_{m+1}
    eigenvalues: tuple = (1.0, -1.0, 0.0, 0.0)

    def observable(self):
        return sum(lam * np.outer(v, v.conj()) for lam, v in zip(self.eigenvalues, self.vectors))


def optimal_basis(bz_hat, bx):
    """SLD eigenvectors in the half-angle form, regular at theta_hat = pi/2."""
    x = mixing_angle(bz_hat, bx) / 2 + np.pi / 4
    c, s = np.cos(x), np.sin(x)
    v = np.array([c * KET_11 + s * KET_B,
                  -s * KET_11 + c * KET_B,
                  c * KET_00 + s * KET_S,
                  -s * KET_00 + c * KET_S])
    return MeasurementBasis(float(bz_hat), float(bx), v)


def measure_probs(state, basis):
    rho = density(state)
    p = np.array([np.real(np.vdot(v, rho @ v)) for v in basis.vectors])
    return p


def ideal_prob(bz, bz_hat, bx):
    return 0.5 + 0.5 * np.sin(mixing_angle(bz_hat, bx) - mixing_angle(bz, bx))


@dataclass(frozen=True)
class QfiEstimate:
    value: float
    delta: float
    p1_minus: float
    p1_center: float
    p1_plus: float

    def recompute(self):
        return fq_from_probs(self.p1_minus, self.p1_center, self.p1_plus, self.delta)


def fq_from_probs(p_minus, p_center, p_plus, delta):
    if not 0 < p_center < 1:
        raise NumericError(f"center probability {p_center} outside (0, 1): Fisher denominator degenerates")
    return classical_fisher(p_center, (p_plus - p_minus) / (2 * delta))


def reconstruct_qfi(p_family, bz, delta=DEFAULT_DELTA):
    """Three-point difference reconstruction of the Fisher information of p_1."""
    if not delta > 0:
        raise ValidationError(f"delta must be positive, got {delta}")
    pm, p0, pp = (float(p_family(bz + k * delta)) for k in (-1, 0, 1))
    for p in (pm, p0, pp):
        if not 0 <= p <= 1:
            raise NumericError(f"probability {p} outside [0, 1]")
    return QfiEstimate(fq_from_probs(pm, p0, pp, delta), delta, pm, p0, pp)


# ---------------------------------------------------------------- error budget

def delta1(bz, bx, delta=DEFAULT_DELTA):
    """Leading-order bias of the three-point reconstruction, F_reconstructed - F_exact.

    Negative near the critical point, where the finite difference
    underestimates the slope of p_1.
    """
    d = (1 - bz) ** 2 + 2 * bx**2
    return -4 * delta**2 * bx**2 * (bx**2 - (bz - 1) ** 2) / d**4


def delta2(p_sim_plus, p_sim_minus, p_ideal_plus, p_ideal_minus, bz, bx, delta=DEFAULT_DELTA):
    dev_plus = p_sim_plus - p_ideal_plus
    dev_minus = p_sim_minus - p_ideal_minus
    return 2 * np.sqrt(2) * bx / (2 * bx**2 + (bz - 1) ** 2) * (dev_plus - dev_minus) / delta


@dataclass(frozen=True)
class ErrorBudget:
    delta1: float
    delta2: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.delta1 + self.delta2)


def error_budget(p_sim_minus, p_sim_plus, bz, bz_hat, bx, delta=DEFAULT_DELTA):
    pi_p = ideal_prob(bz + delta, bz_hat, bx)
    pi_m = ideal_prob(bz - delta, bz_hat, bx)
    return ErrorBudget(delta1(bz, bx, delta), delta2(p_sim_plus, p_sim_minus, pi_p, pi_m, bz, bx, delta))


def relative_deviation(measured, reference):
    return abs(measured - reference) / abs(reference)


@dataclass(frozen=True)
class EnergyBasisDecomposition:
    populations: np.ndarray
    coherences: np.ndarray  # |rho_ij| in the energy basis
    phases: np.ndarray      # arg rho_ij

    def matrix(self):
        m = self.coherences * np.exp(1j * self.phases)
        np.fill_diagonal(m, self.populations)
        return m


def energy_decomposition(rho, bz, bx):
    e = eigenbasis_matrix(bz, bx)
    r = e.conj().T @ density(rho) @ e
    pops = np.real(np.diag(r)).copy()
    mags = np.abs(r)
    phases = np.angle(r)
    np.fill_diagonal(mags, 0.0)
    np.fill_diagonal(phases, 0.0)
    return EnergyBasisDecomposition(pops, mags, phases)


def recompose_density(dec, bz, bx):
    e = eigenbasis_matrix(bz, bx)
    return e @ dec.matrix() @ e.conj().T


# ---------------------------------------------------------------- U_O and its circuit

KET_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
KET_MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)
LOCAL_VECTORS = np.array([np.kron(KET_PLUS, [0, 1]), np.kron(KET_MINUS, [0, 1]),
                          np.kron(KET_PLUS, [1, 0]), np.kron(KET_MINUS, [1, 0])], dtype=complex)
LOCAL_OBSERVABLE = np.kron(SIGMA_X, np.diag([0.0, 1.0]))

MAGIC = np.array([[1, 1j, 0, 0], [0, 0, 1j, 1], [0, 0, 1j, -1], [1, -1j, 0, 0]]) / np.sqrt(2)


def build_uo(bz_hat, bx):
    """Real orthogonal U_O with U_O v_opt^m = v_loc^m, det +1."""
    v = optimal_basis(bz_hat, bx).vectors
    loc = LOCAL_VECTORS.copy()
    u = sum(np.outer(loc[m], v[m].conj()) for m in range(4))
    if np.linalg.det(u).real < 0:
        # flip the sign of v_loc^4: a phase on a projector leaves statistics unchanged
        u = u - 2 * np.outer(loc[3], v[3].conj())
    return np.real_if_close(u, tol=1e3).astype(complex)


def so4_defect(u):
    u = np.asarray(u, dtype=complex)
    return float(max(np.max(np.abs(u.imag)),
                     np.max(np.abs(u @ u.conj().T - np.eye(4))),
                     abs(np.linalg.det(u) - 1)))


_PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


def rotation(axis, angle):
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * _PAULI[axis]


@dataclass(frozen=True)
class Gate:
    kind: str          # "R" or "ZZ"
    angle: float
    spin: int = 0      # 1 or 2 for rotations
    axis: str = ""

    def matrix(self):
        if self.kind == "ZZ":
            zz = np.kron(SIGMA_Z, SIGMA_Z)
            return np.cos(self.angle) * np.eye(4) - 1j * np.sin(self.angle) * zz
        r = rotation(self.axis, self.angle)
        return np.kron(r, I2) if self.spin == 1 else np.kron(I2, r)

    def inverse(self):
        return Gate(self.kind, -self.angle, self.spin, self.axis)

    def to_line(self):
        if self.kind == "ZZ":
            return f"ZZ {self.angle:.17g}"
        return f"R {self.spin} {self.axis} {self.angle:.17g}"


@dataclass(frozen=True)
class GateSequence:
    """Gates in time order (first applied first) and a global phase."""
    gates: tuple
    phase: float = 0.0

    def matrix(self):
        u = np.eye(4, dtype=complex)
        for g in self.gates:
            u = g.matrix() @ u
        return np.exp(1j * self.phase) * u

    def then(self, other):
        return GateSequence(self.gates + other.gates, self.phase + other.phase)

    def inverse(self):
        return GateSequence(tuple(g.inverse() for g in reversed(self.gates)), -self.phase)

    def to_text(self):
        lines = [g.to_line() for g in self.gates]
        lines.append(f"PHASE {self.phase:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        gates, phase = [], 0.0
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "R" and len(parts) == 4 and parts[2] in _PAULI and parts[1] in ("1", "2"):
                gates.append(Gate("R", float(parts[3]), int(parts[1]), parts[2]))
            elif parts[0] == "ZZ" and len(parts) == 2:
                gates.append(Gate("ZZ", float(parts[1])))
            elif parts[0] == "PHASE" and len(parts) == 2:
                phase += float(parts[1])
            else:
                raise ValidationError(f"unparseable gate line: {line!r}")
        return cls(tuple(gates), phase)


def _rot(spin, axis, angle):
    return Gate("R", float(angle), spin, axis)


def cnot_sequence():
    """CNOT with control spin 2 and target spin 1 from z/x/y rotations and one ZZ."""
    return GateSequence((_rot(1, "y", np.pi / 2), Gate("ZZ", np.pi / 4), _rot(1, "x", np.pi / 2),
                         _rot(1, "z", -np.pi / 2), _rot(2, "z", np.pi / 2)), np.pi / 4)


def _s_gate(spin):
    # diag(1, i) = e^{i pi/4} Rz(pi/2)
    return GateSequence((_rot(spin, "z", np.pi / 2),), np.pi / 4)


def _h_gate(spin):
    # Hadamard = i Ry(pi/2) Rz(pi)
    return GateSequence((_rot(spin, "z", np.pi), _rot(spin, "y", np.pi / 2)), np.pi / 2)


def magic_sequence():
    """Gates realizing MAGIC = CNOT(2->1) [S (x) H S]."""
    local = _s_gate(1).then(_s_gate(2)).then(_h_gate(2))
    return local.then(cnot_sequence())


def euler_xyx(u):
    """Angles (alpha, beta, gamma, phase) with u = e^{i phase} Rx(alpha) Ry(beta) Rx(gamma)."""
    u = np.asarray(u, dtype=complex)
    # conjugate x -> z: Rx(a) = Ry(pi/2) Rz(a) Ry(-pi/2)
    w = rotation("y", -np.pi / 2) @ u @ rotation("y", np.pi / 2)
    det = np.linalg.det(w)
    ph = np.angle(det) / 2
    w = w * np.exp(-1j * ph)
    beta = 2 * np.arctan2(abs(w[1, 0]), abs(w[0, 0]))
    if abs(w[0, 0]) < 1e-12:
        ssum, sdif = 0.0, 2 * np.angle(w[1, 0])
    elif abs(w[1, 0]) < 1e-12:
        ssum, sdif = 2 * np.angle(w[1, 1]), 0.0
    else:
        ssum, sdif = 2 * np.angle(w[1, 1]), 2 * np.angle(w[1, 0])
    alpha, gamma = (ssum + sdif) / 2, (ssum - sdif) / 2
    rec = rotation("x", alpha) @ rotation("y", beta) @ rotation("x", gamma)
    k = np.argmax(np.abs(rec))
    ph = np.angle(u.reshape(-1)[k] / rec.reshape(-1)[k])
    return float(alpha), float(beta), float(gamma), float(ph)


def nearest_kron(k):
    """Best rank-one split k ~ a (x) b of a 4x4 matrix (Van Loan rearrangement)."""
    r = np.asarray(k, dtype=complex).reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    uu, ss, vh = np.linalg.svd(r)
    a = np.sqrt(ss[0]) * uu[:, 0].reshape(2, 2)
    b = np.sqrt(ss[0]) * vh[0].reshape(2, 2)
    return a, b


def _to_su2(m):
    ph = np.angle(np.linalg.det(m)) / 2
    return m * np.exp(-1j * ph), ph


def decompose_uo(u, tol=1e-8):
    u = np.asarray(u, dtype=complex)
    defect = so4_defect(u)
    if defect > tol:
        raise ValidationError(f"input is not in SO(4): defect {defect:.3e}")
    # with MAGIC's columns the Bell-type magic states, local gates are MAGIC U MAGIC^dag
    ab = MAGIC @ u @ MAGIC.conj().T
    a, b = nearest_kron(ab)
    a, pa = _to_su2(a)
    b, pb = _to_su2(b)
    seq_ab = []
    phase = pa + pb
    for spin, f in ((1, a), (2, b)):
        al, be, ga, ph = euler_xyx(f)
        seq_ab += [_rot(spin, "x", ga), _rot(spin, "y", be), _rot(spin, "x", al)]
        phase += ph
    core = GateSequence(tuple(seq_ab), phase)
    m = magic_sequence()
    seq = m.then(core).then(m.inverse())
    # absorb any residual sign from the rank-one split into the global phase
    prod = seq.matrix()
    k = np.argmax(np.abs(u))
    resid = np.angle(u.reshape(-1)[k] / prod.reshape(-1)[k])
    return GateSequence(seq.gates, seq.phase + resid)


def sequence_distance(seq, u):
    return float(np.max(np.abs(seq.matrix() - np.asarray(u))))


def circuit_angles(bz, bx):
    """Diagnostic circuit parameters (phi1, phi2); arctan(x/0) read as +-pi/2 by the sign of bz-1."""
    phi1 = (np.pi / 2 if bz >= 1 else -np.pi / 2) - np.pi / 4
    phi2 = abs(mixing_angle(bz, bx) - np.pi / 2)
    return phi1, phi2


# ---------------------------------------------------------------- figures of merit

@dataclass(frozen=True)
class SensitivityReport:
    quantum_variance: float
    classical_variance: float
    total_variance: float
    epsilon: float
    n_m: float
    snr: float


def sensitivity(bz, bz_hat, bx, epsilon, n_m, snr):
    for name, v in (("epsilon", epsilon), ("n_m", n_m), ("snr", snr)):
        if not v > 0:
            raise ValidationError(f"{name} must be positive, got {v}")
    fq = qfi_analytic(bz, bx)
    if fq <= 0:
        raise NumericError("Fisher information vanishes")
    sd = np.sin(mixing_angle(bz_hat, bx) - mixing_angle(bz, bx))
    q = (1 - epsilon**2 * sd**2) / (n_m * epsilon**2 * fq)
    c = 1 / (snr**2 * fq)
    return SensitivityReport(float(q), float(c), float(q + c), epsilon, n_m, snr)


def response(bz, bx):
    return 2 * bx / ((1 - bz) ** 2 + 2 * bx**2)


def response_and_bandwidth(bx):
    if bx <= 0:
        raise ValidationError(f"bx must be positive, got {bx}")
    return (lambda bz: response(bz, bx)), 2 * np.sqrt(2 * (np.sqrt(2) - 1)) * bx


def deduce_bz(m, bz_hat, bx, guard=1e-9):
    if not -1 < m < 1:
        raise ValidationError(f"measurement record m={m} outside (-1, 1)")
    ang = mixing_angle(bz_hat, bx) - np.arcsin(m)
    if abs(np.sin(ang)) < guard:
        raise ValidationError(f"angle {ang:.3g} too close to 0 or pi: deduced field diverges")
    return float(1 - np.sqrt(2) * bx / np.tan(ang))


def accuracy(delta_m, bz, bx):
    """Linearized field error delta_m / sqrt(F_Q)."""
    return delta_m / np.sqrt(qfi_analytic(bz, bx))


def accuracy_exact(delta_m, bz, bx):
    """Field error from inverting the readout exactly at bz_hat = bz."""
    return abs(deduce_bz(delta_m, bz, bx) - bz)


def to_tesla(bz_dimensionless, j_hz, gamma):
    for name, v in (("j_hz", j_hz), ("gamma", gamma)):
        if not v > 0:
            raise ValidationError(f"{name} must be positive, got {v}")
    return bz_dimensionless * np.pi * j_hz / gamma


SWEEP_HEADER = ["bz", "bx", "p1_minus", "p1_center", "p1_plus", "fq_reconstructed",
                "fq_analytic", "delta1", "total_time", "fq_per_time"]


def write_sweep_csv(path, rows):
    """rows: dicts keyed by SWEEP_HEADER; sorted by (bx, bz) before writing."""
    rows = sorted(rows, key=lambda r: (r["bx"], r["bz"]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([f"{r[k]:.12g}" for k in SWEEP_HEADER])
