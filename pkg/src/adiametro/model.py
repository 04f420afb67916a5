"""Two-spin Ising Hamiltonians with a longitudinal and a transverse field.

Basis order is |00>, |01>, |10>, |11> with sigma_z|0> = |0>. Energies are in
units of the zz coupling, so the Ising term has coefficient 1.
"""
from dataclasses import dataclass

import numpy as np

from .linalg import ValidationError, herm_eig

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

SZ = np.kron(SIGMA_Z, I2) + np.kron(I2, SIGMA_Z)
SX = np.kron(SIGMA_X, I2) + np.kron(I2, SIGMA_X)
ZZ = np.kron(SIGMA_Z, SIGMA_Z)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)

KET_00 = np.array([1, 0, 0, 0], dtype=complex)
KET_11 = np.array([0, 0, 0, 1], dtype=complex)
KET_B = np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2)  # symmetric triplet
KET_S = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)  # singlet

CRITICAL_BZ = 1.0


@dataclass(frozen=True)
class FieldConfig:
    bz0: float
    bzf: float
    bx: float

    def __post_init__(self):
        for name in ("bz0", "bzf", "bx"):
            if not np.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if self.bx <= 0:
            raise ValidationError(f"bx must be positive, got {self.bx}")
        if self.bz0 == self.bzf:
            raise ValidationError("bz0 and bzf must differ for a sweep")

    def field(self, a):
        return (1.0 - a) * self.bz0 + a * self.bzf

    def crosses_critical(self):
        lo, hi = sorted((self.bz0, self.bzf))
        return lo <= CRITICAL_BZ <= hi


def build_ising(bz):
    return bz * SZ + ZZ


def build_perturbed(bz, bx):
    if bx <= 0:
        raise ValidationError(f"bx must be positive, got {bx}")
    return build_ising(bz) + bx * SX


def _check_a(a):
    if not 0.0 <= a <= 1.0:
        raise ValidationError(f"adiabatic parameter a={a} outside [0, 1]")


def build_adiabatic(a, cfg):
    _check_a(a)
    return build_perturbed(cfg.field(a), cfg.bx)


def effective_hamiltonian(bz, bx):
    """2x2 model on span{|11>, (|01>+|10>)/sqrt2}, valid for small bx."""
    return (-abs(bz) * np.eye(2) + (1 - abs(bz)) * SIGMA_Z
            + np.sqrt(2) * bx * SIGMA_X).astype(complex)


def gap(a, cfg):
    _check_a(a)
    d = 1 - cfg.bz0 + cfg.bz0 * a - cfg.bzf * a
    return 2.0 * np.sqrt(2 * cfg.bx**2 + d * d)


def mixing_angle(bz, bx):
    if bx <= 0:
        raise ValidationError(f"bx must be positive, got {bx}")
    return float(np.arctan2(np.sqrt(2) * bx, 1 - bz))


def _check_branch(bz, bx):
    if bz <= 0:
        raise ValidationError(f"only the bz > 0 branch is supported, got bz={bz}")
    if bx <= 0:
        raise ValidationError(f"bx must be positive, got {bx}")


def eigenbasis_matrix(bz, bx):
    """Columns are the analytic eigenstates e1..e4; e1 is the ground state."""
    _check_branch(bz, bx)
    th = mixing_angle(bz, bx)
    c, s = np.cos(th / 2), np.sin(th / 2)
    r = 1 / np.sqrt(2)
    e1 = [0, c * r, c * r, -s]
    e2 = [0, s * r, s * r, c]
    e3 = [-s, c * r, -c * r, 0]
    e4 = [c, s * r, -s * r, 0]
    return np.array([e1, e2, e3, e4], dtype=complex).T


def eigenbasis_states(bz, bx):
    e = eigenbasis_matrix(bz, bx)
    return tuple(e[:, k] for k in range(4))


def analytic_ground_state(bz, bx):
    return eigenbasis_matrix(bz, bx)[:, 0]


def numeric_ground_state(bz, bx):
    return herm_eig(build_perturbed(bz, bx))[1][:, 0]
