"""Command-line front end.

    adiametro <subcommand> [--config cfg.json] [--out DIR] [--print-defaults]

Each subcommand merges the JSON config over its defaults, validates it,
runs, and writes `<subcommand>_<slug>.csv` (plus companions) where the slug
is a hash of the merged config. Exit codes: 0 ok, 2 config error,
3 numeric-invariant violation.
"""
import argparse
import copy
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import evolve, metrology, noise, schedule
from .linalg import NumericError, ValidationError
from .model import FieldConfig, numeric_ground_state

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

GREEDY_DEFAULTS = {"delta_a": 2e-5, "delta_t": None, "p_c": 0.9999}

DEFAULTS = {
    "schedule": {
        "bz0": 20.0, "bzf": 0.0, "bx": 0.1, "method": "greedy", "n": 1024,
        "total_time": None, "greedy": GREEDY_DEFAULTS, "m_plus_1": 100, "delta_t": 0.36,
    },
    "evolve": {
        "bz0": 20.0, "bzf": 0.0, "bx": 0.1, "method": "greedy", "n": 1024,
        "total_time": None, "greedy": GREEDY_DEFAULTS, "m_plus_1": 100, "delta_t": 0.36,
        "evolution": "trotter", "relaxation": {"t1_s": [9.9, 18.5], "t2_s": [0.6, 0.2]},
        "substeps": 32,
    },
    "qfi-sweep": {
        "bz0": 20.0, "bx_list": [0.1, 0.2, 0.3],
        "bz_grid": [0.1, 0.5, 0.8, 0.9, 0.95, 1.0, 1.05, 1.1, 1.2, 1.5, 2.0, 2.7],
        "delta": 0.03, "m_plus_1": 100, "evolution": "trotter", "bz_hat": None,
        "greedy": GREEDY_DEFAULTS,
    },
    "scaling": {
        "bz0": 20.0, "bzf": 1.0, "bx_list": [0.1, 0.125, 0.15, 0.2, 0.25, 0.3],
        "delta": 0.03, "m_plus_1": 100, "evolution": "trotter", "greedy": GREEDY_DEFAULTS,
    },
    "decompose": {"bz_hat": 1.0, "bx": 0.1},
    "noise-compare": {
        "bz0": 3.0, "bzf": 1.0, "bx": 0.01, "coupling": 0.4,
        "inv_beta_list": [0.001, 0.01, 0.02, 0.5],
        "t_grid": {"start": 0.0, "stop": 10.0, "step": 0.5},
        "m_plus_1": 400, "substeps": None,
        "greedy": {"delta_a": 2e-6, "delta_t": None, "p_c": 0.9999},
    },
    "sensitivity": {
        "bz": 1.0, "bz_hat": 1.0, "bx": 0.1, "epsilon": 1e-5, "n_m": 1e20, "snr": 1e3,
        "delta_m": 0.02, "j_hz": 214.5,
    },
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config handling

def merge_config(sub, user):
    base = copy.deepcopy(DEFAULTS[sub])
    for key, val in (user or {}).items():
        if key not in base:
            raise ConfigError(f"{sub}: unknown config field {key!r}")
        if isinstance(base[key], dict) and base[key] and isinstance(val, dict):
            for k2, v2 in val.items():
                if k2 not in base[key]:
                    raise ConfigError(f"{sub}: unknown config field {key}.{k2}")
                base[key][k2] = v2
        else:
            base[key] = val
    return base


def slug(sub, cfg):
    canon = json.dumps({"subcommand": sub, "config": cfg}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _num(cfg, key, lo=None, hi=None, strict_lo=False, allow_none=False):
    v = cfg[key]
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        raise ConfigError(f"field {key!r} must be a finite number, got {v!r}")
    if lo is not None and (v <= lo if strict_lo else v < lo):
        raise ConfigError(f"field {key!r}={v} must be {'>' if strict_lo else '>='} {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"field {key!r}={v} must be <= {hi}")
    return float(v)


def _int(cfg, key, lo):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"field {key!r} must be an integer >= {lo}, got {v!r}")
    return v


def _list(cfg, key, lo=None, strict_lo=False, min_len=1):
    v = cfg[key]
    if not isinstance(v, list) or len(v) < min_len:
        raise ConfigError(f"field {key!r} must be a list with at least {min_len} entries")
    return [_num({key: x}, key, lo, strict_lo=strict_lo) for x in v]


def _choice(cfg, key, options):
    if cfg[key] not in options:
        raise ConfigError(f"field {key!r} must be one of {options}, got {cfg[key]!r}")
    return cfg[key]


def _greedy(cfg):
    g = cfg["greedy"]
    try:
        return schedule.GreedyParams(delta_a=_num(g, "delta_a", 0, strict_lo=True),
                                     delta_t=_num(g, "delta_t", 0, strict_lo=True, allow_none=True),
                                     p_c=_num(g, "p_c", 0, 1, strict_lo=True))
    except ValidationError as e:
        raise ConfigError(f"greedy: {e}") from e


def _field_cfg(bz0, bzf, bx):
    try:
        return FieldConfig(bz0, bzf, bx)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


# ---------------------------------------------------------------- helpers

def _fmt(x):
    return f"{x:.12g}"


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])


def _build_schedule(cfg, fcfg):
    method = cfg["method"]
    if method == "linear":
        return schedule.linear_schedule(cfg["n"], cfg["total_time"] or 1.0)
    if method == "local":
        return schedule.local_schedule(fcfg, cfg["n"], cfg["total_time"])
    sch = schedule.greedy_schedule(fcfg, _greedy(cfg))
    return sch if cfg["total_time"] is None else sch.with_total_time(cfg["total_time"])


def _validate_schedule_cfg(cfg):
    bx = _num(cfg, "bx", 0, strict_lo=True)
    fcfg = _field_cfg(_num(cfg, "bz0"), _num(cfg, "bzf"), bx)
    _choice(cfg, "method", list(schedule.METHODS))
    _int(cfg, "n", 16 if cfg["method"] == "local" else 2)
    _num(cfg, "total_time", 0, strict_lo=True, allow_none=True)
    _int(cfg, "m_plus_1", 2)
    _num(cfg, "delta_t", 0, strict_lo=True)
    _greedy(cfg)
    return fcfg


def _evolve_plan(plan, psi0, method):
    if method == "exact":
        return evolve.run_exact(plan, psi0).final_state
    return evolve.run_trotter(plan, psi0).final_state


# ---------------------------------------------------------------- commands

def cmd_schedule(cfg, out):
    fcfg = _validate_schedule_cfg(cfg)
    sch = _build_schedule(cfg, fcfg)
    plan = schedule.segment_plan(sch, fcfg, cfg["m_plus_1"], cfg["delta_t"])
    tag = slug("schedule", cfg)
    path = os.path.join(out, f"schedule_{tag}.csv")
    schedule.write_schedule_csv(path, sch)
    schedule.write_plan_csv(os.path.join(out, f"schedule_{tag}_plan.csv"), plan)
    print(f"method={sch.method} samples={len(sch.s)} total_time={_fmt(sch.total_time)} "
          f"c_measured={_fmt(schedule.measured_c(sch, fcfg))}")
    return [path]


def cmd_evolve(cfg, out):
    fcfg = _validate_schedule_cfg(cfg)
    method = _choice(cfg, "evolution", ["exact", "trotter", "relaxation"])
    _int(cfg, "substeps", 32)
    rel = cfg["relaxation"]
    try:
        relax = evolve.RelaxationParams.from_seconds(rel["t1_s"], rel["t2_s"])
    except (ValidationError, TypeError, ValueError) as e:
        raise ConfigError(f"relaxation: {e}") from e
    sch = _build_schedule(cfg, fcfg)
    plan = schedule.segment_plan(sch, fcfg, cfg["m_plus_1"], cfg["delta_t"])
    psi0 = numeric_ground_state(fcfg.bz0, fcfg.bx)
    if method == "exact":
        trace = evolve.run_exact(plan, psi0)
    elif method == "trotter":
        trace = evolve.run_trotter(plan, psi0)
    else:
        trace = evolve.run_with_relaxation(plan, psi0, relax, cfg["substeps"])
    tag = slug("evolve", cfg)
    path = os.path.join(out, f"evolve_{tag}.csv")
    evolve.write_trace_csv(path, trace)
    with open(os.path.join(out, f"evolve_{tag}_final.json"), "w") as fh:
        fh.write(evolve.state_to_json(trace.final_state) + "\n")
    print(f"segments={plan.m_plus_1} total_time={_fmt(plan.total_time)} "
          f"average_fidelity={_fmt(trace.average_fidelity)} final_fidelity={_fmt(trace.final_fidelity)}")
    return [path]


def simulate_p1(bz0, bzf, bx, sch, m_plus_1, evolution, bz_hat):
    """Final p_1 of the protocol that sweeps bz0 -> bzf along sch."""
    fcfg = FieldConfig(bz0, bzf, bx)
    plan = schedule.segment_plan(sch, fcfg, m_plus_1, sch.total_time / m_plus_1)
    rho = _evolve_plan(plan, numeric_ground_state(bz0, bx), evolution)
    return float(metrology.measure_probs(rho, metrology.optimal_basis(bz_hat, bx))[0])


def sweep_point(bz0, bz, bx, delta, m_plus_1, evolution, params, bz_hat=None):
    sch = schedule.greedy_schedule(FieldConfig(bz0, bz, bx), params)
    bzh = bz if bz_hat is None else bz_hat
    est = metrology.reconstruct_qfi(
        lambda b: simulate_p1(bz0, b, bx, sch, m_plus_1, evolution, bzh), bz, delta)
    fq = est.value
    return {"bz": bz, "bx": bx, "p1_minus": est.p1_minus, "p1_center": est.p1_center,
            "p1_plus": est.p1_plus, "fq_reconstructed": fq,
            "fq_analytic": metrology.qfi_analytic(bz, bx),
            "delta1": metrology.delta1(bz, bx, delta), "total_time": sch.total_time,
            "fq_per_time": fq / sch.total_time}


def cmd_qfi_sweep(cfg, out):
    bz0 = _num(cfg, "bz0")
    bxs = _list(cfg, "bx_list", 0, strict_lo=True)
    grid = _list(cfg, "bz_grid", 0, strict_lo=True)
    delta = _num(cfg, "delta", 0, strict_lo=True)
    _int(cfg, "m_plus_1", 2)
    evo = _choice(cfg, "evolution", ["exact", "trotter"])
    bz_hat = _num(cfg, "bz_hat", 0, strict_lo=True, allow_none=True)
    params = _greedy(cfg)
    for bz in grid:
        if bz - delta <= 0:
            raise ConfigError(f"bz_grid point {bz}: bz - delta must stay positive")
        _field_cfg(bz0, bz, bxs[0])
    rows = []
    for bx in bxs:
        for bz in grid:
            try:
                rows.append(sweep_point(bz0, bz, bx, delta, cfg["m_plus_1"], evo, params, bz_hat))
            except (NumericError, ValidationError) as e:
                raise type(e)(f"grid point bz={bz}, bx={bx}: {e}") from e
    path = os.path.join(out, f"qfi-sweep_{slug('qfi-sweep', cfg)}.csv")
    metrology.write_sweep_csv(path, rows)
    for bx in bxs:
        sub = [r for r in rows if r["bx"] == bx]
        best = max(sub, key=lambda r: r["fq_per_time"])
        print(f"bx={_fmt(bx)} argmax fq_per_time at bz={_fmt(best['bz'])}")
    return [path]


@dataclass
class ScalingFit:
    bx_list: list
    times: list
    sqrt_fq: list
    slope: float
    intercept: float
    r_squared: float
    loglog_slope: float
    c_measured: float

    @property
    def predicted_slope(self):
        return 1.0 / (np.sqrt(2) * self.c_measured)


def fit_scaling(bx_list, times, fq):
    t = np.asarray(times, float)
    y = np.sqrt(np.asarray(fq, float))
    slope, intercept = np.polyfit(t, y, 1)
    pred = slope * t + intercept
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise NumericError("degenerate scaling fit: all sqrt(F_Q) values equal")
    r2 = 1 - np.sum((y - pred) ** 2) / ss_tot
    ll = np.polyfit(np.log(t), np.log(np.asarray(fq, float)), 1)[0]
    c = float(np.mean(t * np.asarray(bx_list, float)))
    return ScalingFit(list(map(float, bx_list)), t.tolist(), y.tolist(), float(slope),
                      float(intercept), float(min(max(r2, 0.0), 1.0)), float(ll), c)


def cmd_scaling(cfg, out):
    bz0, bzf = _num(cfg, "bz0"), _num(cfg, "bzf")
    bxs = _list(cfg, "bx_list", 0, strict_lo=True, min_len=4)
    delta = _num(cfg, "delta", 0, strict_lo=True)
    _int(cfg, "m_plus_1", 2)
    evo = _choice(cfg, "evolution", ["exact", "trotter"])
    params = _greedy(cfg)
    _field_cfg(bz0, bzf, bxs[0])
    rows, times, fqs = [], [], []
    m = cfg["m_plus_1"]
    for bx in bxs:
        fcfg = FieldConfig(bz0, bzf, bx)
        sch = schedule.greedy_schedule(fcfg, params)
        plan = schedule.segment_plan(sch, fcfg, m, sch.total_time / m)
        # QFI of the state the sweep actually prepares
        fq = noise.adiabatic_endpoint_qfi(_evolve_plan(plan, numeric_ground_state(bz0, bx), evo), bzf, bx)
        rec = metrology.reconstruct_qfi(
            lambda b: simulate_p1(bz0, b, bx, sch, m, evo, bzf), bzf, delta).value
        times.append(sch.total_time)
        fqs.append(fq)
        rows.append([bx, sch.total_time, sch.total_time * bx, fq, np.sqrt(fq),
                     metrology.qfi_analytic(bzf, bx), rec])
    fit = fit_scaling(bxs, times, fqs)
    tag = slug("scaling", cfg)
    path = os.path.join(out, f"scaling_{tag}.csv")
    rows.sort(key=lambda r: r[0])
    _write_rows(path, ["bx", "total_time", "c", "fq_prepared", "sqrt_fq", "fq_analytic",
                       "fq_reconstructed"], [[float(x) for x in r] for r in rows])
    summary = asdict(fit)
    summary["predicted_slope"] = fit.predicted_slope
    with open(os.path.join(out, f"scaling_{tag}_fit.json"), "w") as fh:
        json.dump({k: summary[k] for k in sorted(summary)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"slope={_fmt(fit.slope)} predicted={_fmt(fit.predicted_slope)} "
          f"r_squared={_fmt(fit.r_squared)} loglog_slope={_fmt(fit.loglog_slope)}")
    return [path]


def cmd_decompose(cfg, out):
    bz_hat = _num(cfg, "bz_hat", 0, strict_lo=True)
    bx = _num(cfg, "bx", 0, strict_lo=True)
    u = metrology.build_uo(bz_hat, bx)
    seq = metrology.decompose_uo(u)
    dist = metrology.sequence_distance(seq, u)
    path = os.path.join(out, f"decompose_{slug('decompose', cfg)}.txt")
    with open(path, "w") as fh:
        fh.write(seq.to_text())
        fh.write(f"# recomposition_distance {dist:.3e}\n")
    print(f"gates={len(seq.gates)} recomposition_distance={dist:.3e}")
    if dist > 1e-8:
        raise NumericError(f"recomposition distance {dist:.3e} exceeds 1e-8")
    return [path]


def cmd_noise_compare(cfg, out):
    bx = _num(cfg, "bx", 0, strict_lo=True)
    fcfg = _field_cfg(_num(cfg, "bz0", 0, strict_lo=True), _num(cfg, "bzf", 0, strict_lo=True), bx)
    lam = _num(cfg, "coupling", 0)
    temps = _list(cfg, "inv_beta_list", 0, strict_lo=True)
    tg = cfg["t_grid"]
    start, stop, step = (_num(tg, k) for k in ("start", "stop", "step"))
    if step <= 0 or stop <= start or start < 0:
        raise ConfigError("t_grid needs 0 <= start < stop and step > 0")
    t_grid = start + step * np.arange(int(np.floor((stop - start) / step + 1e-9)) + 1)
    m = _int(cfg, "m_plus_1", 2)
    sub = cfg["substeps"]
    if sub is not None:
        _int(cfg, "substeps", 8)
    params = _greedy(cfg)
    baths = [noise.BathSpec.from_temperature(lam, t) for t in temps]
    rep = noise.compare_schemes(fcfg, baths, t_grid, m, params, sub)
    tag = slug("noise-compare", cfg)
    path = os.path.join(out, f"noise-compare_{tag}.csv")
    noise.write_curves_csv(path, rep.curves())
    rows = []
    for t, run, env in zip(temps, rep.adiabatic, rep.envelopes):
        rows.append([t, run.total_time, run.qfi, env, rep.noise_free_qfi, run.ground_fidelity])
        print(f"inv_beta={_fmt(t)} T={_fmt(run.total_time)} adiabatic_qfi={_fmt(run.qfi)} "
              f"envelope={_fmt(env)} noise_free={_fmt(rep.noise_free_qfi)}")
    _write_rows(os.path.join(out, f"noise-compare_{tag}_summary.csv"),
                ["inv_beta", "total_time", "adiabatic_qfi", "envelope_qfi", "noise_free_qfi",
                 "ground_fidelity"], [[float(x) for x in r] for r in sorted(rows)])
    return [path]


def cmd_sensitivity(cfg, out):
    vals = {k: _num(cfg, k, 0, strict_lo=True) for k in
            ("bz_hat", "bx", "epsilon", "n_m", "snr", "j_hz")}
    bz = _num(cfg, "bz")
    dm = _num(cfg, "delta_m", 0)
    bx = vals["bx"]
    rep = metrology.sensitivity(bz, vals["bz_hat"], bx, vals["epsilon"], vals["n_m"], vals["snr"])
    _, bw = metrology.response_and_bandwidth(bx)
    b_c = metrology.to_tesla(bz, vals["j_hz"], metrology.GAMMA_C)
    b_h = metrology.to_tesla(bz, vals["j_hz"], metrology.GAMMA_H)
    rows = [
        ("fq_analytic", metrology.qfi_analytic(bz, bx)),
        ("quantum_variance", rep.quantum_variance),
        ("classical_variance", rep.classical_variance),
        ("total_variance", rep.total_variance),
        ("bandwidth", bw),
        ("response_max", metrology.response(1.0, bx)),
        ("accuracy_linear", metrology.accuracy(dm, bz, bx)),
        ("accuracy_exact", metrology.accuracy_exact(dm, bz, bx) if dm > 0 else 0.0),
        ("tesla_13C", b_c),
        ("tesla_1H", b_h),
    ]
    path = os.path.join(out, f"sensitivity_{slug('sensitivity', cfg)}.csv")
    _write_rows(path, ["quantity", "value"], [(k, float(v)) for k, v in rows])
    print(f"bandwidth={bw:.3f} B_13C={b_c:.3e} T B_1H={b_h:.3e} T "
          f"total_variance={_fmt(rep.total_variance)}")
    return [path]


COMMANDS = {
    "schedule": cmd_schedule,
    "evolve": cmd_evolve,
    "qfi-sweep": cmd_qfi_sweep,
    "scaling": cmd_scaling,
    "decompose": cmd_decompose,
    "noise-compare": cmd_noise_compare,
    "sensitivity": cmd_sensitivity,
}


def run(sub, user_cfg, out):
    cfg = merge_config(sub, user_cfg)
    os.makedirs(out, exist_ok=True)
    return COMMANDS[sub](cfg, out)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="adiametro", description=__doc__.splitlines()[0])
    ap.add_argument("--print-defaults", action="store_true", help="dump all default configs")
    subs = ap.add_subparsers(dest="sub")
    for name in COMMANDS:
        p = subs.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--print-defaults", action="store_true")
    args = ap.parse_args(argv)
    if args.sub is None:
        if args.print_defaults:
            print(json.dumps(DEFAULTS, indent=2, sort_keys=True))
            return EXIT_OK
        ap.print_usage(sys.stderr)
        return EXIT_CONFIG
    if args.print_defaults:
        print(json.dumps(DEFAULTS[args.sub], indent=2, sort_keys=True))
        return EXIT_OK
    try:
        user = {}
        if args.config:
            with open(args.config) as fh:
                user = json.load(fh)
            if not isinstance(user, dict):
                raise ConfigError("config must be a JSON object")
        run(args.sub, user, args.out)
    except (ConfigError, ValidationError, json.JSONDecodeError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
