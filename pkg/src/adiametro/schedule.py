"""Adiabatic profiles A(s): linear, local (gap-adaptive) and greedy.

The greedy optimizer advances A in multiples of delta_a, taking the largest
step whose evolved state keeps overlap >= p_c with the new instantaneous
ground state.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .linalg import NumericError, ValidationError, expm_unitary, ground_state
from .model import FieldConfig, build_adiabatic, build_perturbed, gap

METHODS = ("linear", "local", "greedy")

# Step-duration scale: dt * min_gap is held at the value giving dt = 0.36 for bx = 0.1.
GREEDY_DT_GAP_PRODUCT = 0.36 * 2 * np.sqrt(2) * 0.1


@dataclass(frozen=True)
class Schedule:
    s: np.ndarray
    a: np.ndarray
    total_time: float
    method: str

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        a = np.asarray(self.a, dtype=float)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "a", a)
        if self.method not in METHODS:
            raise ValidationError(f"unknown schedule method {self.method!r}")
        if s.shape != a.shape or s.ndim != 1 or len(s) < 2:
            raise ValidationError("schedule needs matching s and a arrays of length >= 2")
        if s[0] != 0.0 or s[-1] != 1.0 or np.any(np.diff(s) <= 0):
            raise ValidationError("s must increase strictly from 0 to 1")
        if a[0] != 0.0 or a[-1] != 1.0 or np.any(np.diff(a) < 0):
            raise ValidationError("a must be nondecreasing from 0 to 1")
        if not self.total_time > 0:
            raise ValidationError(f"total_time must be positive, got {self.total_time}")

    @property
    def samples(self):
        return list(zip(self.s.tolist(), self.a.tolist()))

    def __call__(self, s):
        return np.interp(s, self.s, self.a)

    def with_total_time(self, total_time):
        return Schedule(self.s, self.a, total_time, self.method)


@dataclass(frozen=True)
class GreedyParams:
    delta_a: float = 1e-4
    delta_t: float | None = None
    p_c: float = 0.9999
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not 0 < self.delta_a < 0.1:
            raise ValidationError(f"delta_a must lie in (0, 0.1), got {self.delta_a}")
        if not 0 < self.p_c < 1:
            raise ValidationError(f"p_c must lie in (0, 1), got {self.p_c}")
        if self.delta_t is not None and not self.delta_t > 0:
            raise ValidationError(f"delta_t must be positive, got {self.delta_t}")


@dataclass(frozen=True)
class SegmentPlan:
    bz_list: np.ndarray
    delta_t: float
    bx: float
    bz0: float = field(default=None)
    bzf: float = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "bz_list", np.asarray(self.bz_list, dtype=float))
        if self.bx <= 0:
            raise ValidationError(f"bx must be positive, got {self.bx}")
        if not self.delta_t > 0:
            raise ValidationError(f"delta_t must be positive, got {self.delta_t}")

    @property
    def m_plus_1(self):
        return len(self.bz_list)

    @property
    def total_time(self):
        return self.m_plus_1 * self.delta_t

    def hamiltonian(self, i):
        return build_perturbed(self.bz_list[i], self.bx)


def linear_schedule(n, total_time=1.0):
    if n < 2:
        raise ValidationError(f"linear schedule needs n >= 2, got {n}")
    s = np.linspace(0.0, 1.0, n)
    return Schedule(s, s.copy(), total_time, "linear")


def _inv_gap_sq(a, cfg):
    d = 1 - cfg.bz0 + (cfg.bz0 - cfg.bzf) * a
    return 1.0 / (4.0 * (2 * cfg.bx**2 + d * d))


def _critical_a(cfg):
    a = (cfg.bz0 - 1.0) / (cfg.bz0 - cfg.bzf)
    return [a] if 0 < a < 1 else None


def local_c(cfg):
    """c = int_0^1 gap(A)^-2 dA, closed form when the sweep ends at the critical field."""
    if cfg.bz0 == cfg.bzf:
        raise ValidationError("degenerate sweep")
    if cfg.bzf == 1.0 and cfg.bz0 > 1.0:
        L = cfg.bz0 - 1.0
        return float(np.arctan(L / (np.sqrt(2) * cfg.bx)) / (4 * np.sqrt(2) * L * cfg.bx))
    return local_c_numeric(cfg)


def local_c_numeric(cfg):
    val, _ = integrate.quad(_inv_gap_sq, 0.0, 1.0, args=(cfg,), points=_critical_a(cfg),
                            epsabs=0, epsrel=1e-12, limit=200)
    return float(val)


def local_schedule(cfg, n=1024, total_time=None):
    """Solve dA/ds = c * gap(A)^2 with fixed-step RK4."""
    if n < 16:
        raise ValidationError(f"local schedule needs n >= 16, got {n}")
    c = local_c(cfg)
    bx2 = cfg.bx**2
    k = cfg.bz0 - cfg.bzf

    def rhs(a):
        d = 1 - cfg.bz0 + k * a
        return c * 4.0 * (2 * bx2 + d * d)

    # integrate on a fine grid so coarse output grids still hit a(1) = 1
    sub = max(1, int(np.ceil(4096 / n)))
    h = 1.0 / (n * sub)
    a = np.zeros(n + 1)
    y = 0.0
    for i in range(n):
        for _ in range(sub):
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
            y = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        a[i + 1] = y
    if not np.all(np.isfinite(a)):
        raise NumericError("local schedule ODE produced non-finite values")
    if abs(a[-1] - 1.0) > 1e-6:
        raise NumericError(f"local schedule endpoint a(1)={a[-1]:.9f} misses 1 by more than 1e-6")
    a = np.clip(a, 0.0, 1.0)
    a[-1] = 1.0
    return Schedule(np.linspace(0.0, 1.0, n + 1), a, c if total_time is None else total_time, "local")


def default_greedy_dt(cfg):
    return GREEDY_DT_GAP_PRODUCT / (2 * np.sqrt(2) * cfg.bx)


def greedy_schedule(cfg, params=GreedyParams(), return_losses=False):
    """Greedy fidelity-threshold path.

    Each macro step starts from the exact ground state of H_ad(A_i) and finds
    the largest n with |<g(A_i + n dA)| exp(-i H_ad(A_i + n dA) dt) |g(A_i)>| >= p_c,
    by doubling then bisection. The last step is clamped to A = 1.
    """
    dt = params.delta_t if params.delta_t is not None else default_greedy_dt(cfg)
    da = params.delta_a
    n_max = int(np.ceil(1.0 / da))

    def state_at(n_total):
        a = min(n_total * da, 1.0)
        return ground_state(build_adiabatic(a, cfg)), a

    def overlap(g0, n_total):
        g1, a = state_at(n_total)
        u = expm_unitary(build_adiabatic(a, cfg), dt)
        return abs(np.vdot(g1, u @ g0))

    path = [0.0]
    losses = []
    pos = 0
    g0 = ground_state(build_adiabatic(0.0, cfg))
    while pos < n_max:
        if len(path) > params.max_steps:
            raise NumericError("greedy schedule exceeded max_steps")

        def ok(n):
            return overlap(g0, pos + n) >= params.p_c

        if not ok(1):
            raise NumericError(f"greedy schedule stalled at A={pos * da:.6g}: "
                               f"one step of delta_a={da} already drops below p_c; reduce delta_a")
        # doubling then bisection for the largest acceptable n in [1, remaining]
        remaining = n_max - pos
        lo, hi = 1, None
        while lo < remaining:
            nxt = min(2 * lo, remaining)
            if ok(nxt):
                lo = nxt
            else:
                hi = nxt
                break
        if hi is not None:
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if ok(mid):
                    lo = mid
                else:
                    hi = mid
        if return_losses:
            losses.append((pos * da, lo, 1.0 - overlap(g0, pos + lo) ** 2))
        pos += lo
        g0, a = state_at(pos)
        path.append(a)
    path[-1] = 1.0
    n_steps = len(path) - 1
    sch = Schedule(np.linspace(0.0, 1.0, n_steps + 1), np.array(path), n_steps * dt, "greedy")
    return (sch, losses) if return_losses else sch


def greedy_step_count(sch):
    return len(sch.a) - 1


def time_bound_linear(cfg):
    return 2.0 * abs(cfg.bz0 - 1.0) / (2 * np.sqrt(2) * cfg.bx) ** 2


def inverse_gap_integral(cfg):
    """int_0^1 gap(A)^-1 dA: log closed form when bzf = 1, quadrature otherwise."""
    if cfg.bzf == 1.0 and cfg.bz0 != 1.0:
        L = cfg.bz0 - 1.0
        r = np.sqrt(2 * cfg.bx**2 + L * L)
        return float(-np.log((r - L) / (r + L)) / (4 * L))
    return inverse_gap_integral_numeric(cfg)


def inverse_gap_integral_numeric(cfg):
    f = lambda a: 1.0 / gap(a, cfg)
    val, _ = integrate.quad(f, 0.0, 1.0, points=_critical_a(cfg), epsabs=0, epsrel=1e-12, limit=200)
    return float(val)


def time_bound_local(cfg):
    c = local_c(cfg)
    L = cfg.bz0 - 1.0
    return float(4 * L * c + 4 * L * c * np.log(gap(0.0, cfg) / gap(1.0, cfg))
                 + 4 * L * L * c * inverse_gap_integral(cfg))


def segment_plan(sch, cfg, m_plus_1, delta_t):
    """Sample the schedule at i/M (M = m_plus_1 - 1) and map to per-segment fields."""
    if m_plus_1 < 2:
        raise ValidationError(f"m_plus_1 must be >= 2, got {m_plus_1}")
    m = m_plus_1 - 1
    a = sch(np.arange(m_plus_1) / m)
    a[0], a[-1] = 0.0, 1.0
    bz = (1 - a) * cfg.bz0 + a * cfg.bzf
    bz[0], bz[-1] = cfg.bz0, cfg.bzf
    return SegmentPlan(bz, float(delta_t), cfg.bx, cfg.bz0, cfg.bzf)


def measured_c(sch, cfg):
    """T * bx of a schedule: the constant in T ~ c / bx."""
    return sch.total_time * cfg.bx


def write_schedule_csv(path, sch):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "a"])
        for s, a in zip(sch.s, sch.a):
            w.writerow([f"{s:.12g}", f"{a:.12g}"])


def write_plan_csv(path, plan):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "bz", "delta_t"])
        for i, bz in enumerate(plan.bz_list):
            w.writerow([i, f"{bz:.12g}", f"{plan.delta_t:.12g}"])
