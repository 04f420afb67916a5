"""Small dense complex linear algebra for 2x2 and 4x4 spin operators.

Operators, pure states and density matrices are plain numpy arrays. The
helpers here validate them, diagonalize Hermitian matrices with a
reproducible eigenvector gauge, and build unitary propagators.
"""
import numpy as np


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class NumericError(RuntimeError):
    """A numerical invariant (trace, positivity, convergence) was violated."""


HERMITIAN_TOL = 1e-12
DEGENERACY_TOL = 1e-9


def as_operator(h):
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {h.shape}")
    return h


def hermiticity_defect(h):
    h = as_operator(h)
    return float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0


def check_hermitian(h, tol=HERMITIAN_TOL):
    h = as_operator(h)
    # scale tolerance with the matrix norm so large fields are not rejected
    scale = max(1.0, float(np.max(np.abs(h))))
    defect = hermiticity_defect(h)
    if defect > tol * scale:
        raise ValidationError(f"matrix is not Hermitian: max asymmetry {defect:.3e}")
    return h


def normalize(psi):
    psi = np.asarray(psi, dtype=complex)
    n = np.linalg.norm(psi)
    if n == 0:
        raise ValidationError("cannot normalize the zero vector")
    return psi / n


def check_state(psi, tol=1e-12):
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise ValidationError(f"state must be a vector, got shape {psi.shape}")
    err = abs(np.vdot(psi, psi).real - 1.0)
    if err > tol:
        raise ValidationError(f"state is not normalized: |norm^2 - 1| = {err:.3e}")
    return psi


def density(psi):
    """Projector |psi><psi| for a vector; density matrices pass through."""
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim == 1:
        return np.outer(psi, psi.conj())
    return as_operator(psi)


def check_density(rho, tol=1e-10):
    rho = as_operator(rho)
    herm = hermiticity_defect(rho)
    if herm > tol:
        raise ValidationError(f"density matrix not Hermitian: defect {herm:.3e}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise ValidationError(f"density matrix trace {tr!r} differs from 1")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lo < -tol:
        raise ValidationError(f"density matrix has negative eigenvalue {lo:.3e}")
    return rho


def _fix_phase(v):
    # largest-magnitude component made real positive; ties go to the lowest index
    mag = np.abs(v)
    k = int(np.flatnonzero(mag >= mag.max() - 1e-9)[0])
    return v * (abs(v[k]) / v[k])


def herm_eig(h):
    """Eigen-decomposition of a Hermitian matrix.

    Returns ``(w, v)`` with ascending eigenvalues ``w`` and eigenvectors in
    the columns of ``v``. Degenerate blocks are re-spanned by Gram-Schmidt
    on the projected standard basis vectors (in index order) so the output
    does not depend on LAPACK internals. Each vector's largest component is
    real and positive.
    """
    h = check_hermitian(h)
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    n = len(w)
    scale = max(1.0, float(np.max(np.abs(w)))) if n else 1.0
    out = np.empty_like(v)
    i = 0
    while i < n:
        j = i + 1
        while j < n and w[j] - w[j - 1] <= DEGENERACY_TOL * scale:
            j += 1
        block = v[:, i:j]
        if j - i == 1:
            out[:, i] = _fix_phase(block[:, 0])
        else:
            proj = block @ block.conj().T
            basis = []
            for k in range(n):
                u = proj[:, k].copy()
                for b in basis:
                    u -= np.vdot(b, u) * b
                nu = np.linalg.norm(u)
                if nu > 1e-6:
                    basis.append(u / nu)
                if len(basis) == j - i:
                    break
            for m, b in enumerate(basis):
                out[:, i + m] = _fix_phase(b)
            w[i:j] = np.mean(w[i:j])
        i = j
    return w, out


def ground_state(h):
    return herm_eig(h)[1][:, 0]


def expm_unitary(h, t):
    """exp(-i h t) through the spectral decomposition of h."""
    if not np.isfinite(t):
        raise ValidationError(f"time must be finite, got {t!r}")
    w, v = herm_eig(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def overlap_fidelity(r1, r2):
    """Tr(r1 r2) / sqrt(Tr(r1^2) Tr(r2^2)); vectors are promoted to projectors."""
    r1, r2 = density(r1), density(r2)
    if r1.shape != r2.shape:
        raise ValidationError(f"dimension mismatch {r1.shape} vs {r2.shape}")
    p1 = np.trace(r1 @ r1).real
    p2 = np.trace(r2 @ r2).real
    if p1 <= 0 or p2 <= 0:
        raise ValidationError("overlap fidelity undefined for a zero matrix")
    f = np.trace(r1 @ r2).real / np.sqrt(p1 * p2)
    return float(min(max(f, 0.0), 1.0))


def state_fidelity(psi, phi):
    """|<psi|phi>|^2 for pure states."""
    return float(abs(np.vdot(psi, phi)) ** 2)


def purity(rho):
    rho = density(rho)
    return float(np.trace(rho @ rho).real)


def is_unitary(u, tol=1e-10):
    u = as_operator(u)
    return float(np.max(np.abs(u @ u.conj().T - np.eye(len(u))))) <= tol
