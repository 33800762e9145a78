"""Command-line scenario runner.

Binds drift construction, simulation, and diagnostics into reproducible
scenarios driven by flat key = value config files.  Exit codes: 0 success,
1 diagnostic check failed, 2 config/argument parse failure, 3 numerical
precondition (CFL, total-speed bound) violated.
"""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .drifts import assemble_borderline, assemble_selfsimilar, hodge_decompose
from .fields import Grid, SpaceTimeField, read_field, write_field
from .norms import (
    SLICED_RT,
    SLICED_TR,
    SPACE_OUTER,
    TIME_OUTER,
    Annulus,
    MixedNormSpec,
    criticality_index,
    mixed_norm,
)
from .solver import FieldDrift, SolverConfig, fundamental_solution, solve

FMT = "%.17g"


class ConfigError(Exception):
    pass


class PreconditionError(Exception):
    pass


class DiagnosticError(Exception):
    pass


# ---------------------------------------------------------------------------
# config files: flat `key = value` lines, `#` comments, dotted sections


def parse_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cfg = {}
    for i, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key or not val:
            raise ConfigError(f"{path}:{i}: expected 'key = value'")
        if key in cfg:
            raise ConfigError(f"{path}:{i}: duplicate key {key!r}")
        cfg[key] = val
    return cfg


def _get(cfg, key, default=None, required=False):
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"missing required config key {key!r}")
    return default


def _get_float(cfg, key, default=None, required=False):
    v = _get(cfg, key, default, required)
    if v is None or isinstance(v, float):
        return v
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"config key {key!r}: not a number: {v!r}")


def _get_int(cfg, key, default=None, required=False):
    v = _get(cfg, key, default, required)
    if v is None or isinstance(v, int):
        return v
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"config key {key!r}: not an integer: {v!r}")


def _get_tuple(cfg, key, default=None, required=False):
    v = _get(cfg, key, default, required)
    if v is None or isinstance(v, tuple):
        return v
    try:
        return tuple(float(x) for x in v.split(","))
    except ValueError:
        raise ConfigError(f"config key {key!r}: not a comma list: {v!r}")


def build_grid(cfg):
    n = _get_int(cfg, "grid.n", 2)
    lo = _get_tuple(cfg, "grid.lo", required=True)
    hi = _get_tuple(cfg, "grid.hi", required=True)
    shape = tuple(int(x) for x in _get_tuple(cfg, "grid.shape", required=True))
    bc = _get(cfg, "grid.bc", "periodic")
    if len(lo) != n or len(hi) != n or len(shape) != n:
        raise ConfigError("grid.lo/hi/shape must all have grid.n entries")
    try:
        return Grid(n, lo, hi, shape,
                    _get_float(cfg, "grid.t0", 0.0),
                    _get_float(cfg, "grid.t1", required=True),
                    _get_int(cfg, "grid.nt", 2), bc)
    except ValueError as e:
        raise ConfigError(f"bad grid: {e}")


def build_solver_config(cfg):
    try:
        return SolverConfig(
            scheme=_get(cfg, "solver.scheme", "semi_implicit_spectral"),
            dt=_get_float(cfg, "solver.dt"),
            advection=_get(cfg, "solver.advection", "upwind"),
            safety=_get_float(cfg, "solver.safety", 0.4))
    except ValueError as e:
        raise ConfigError(f"bad solver config: {e}")


def output_dir(cfg, config_path):
    root = os.environ.get("DRIFTLAB_OUT", ".")
    sub = _get(cfg, "output.dir", required=True)
    p = Path(root) / sub
    return p


def write_summary(path, rows):
    """rows: (check, value, threshold, passed). Returns overall pass."""
    ok = True
    with open(path, "w") as f:
        f.write("check,value,threshold,pass\n")
        for check, value, threshold, passed in rows:
            ok &= bool(passed)
            f.write(f"{check},{FMT % value},{FMT % threshold},{int(bool(passed))}\n")
    return ok


# ---------------------------------------------------------------------------
# drift construction from config


def trig_stream_field(grid, seed, amplitude, nmodes=4):
    """Sampled random trigonometric stream drift (discretely div-free)."""
    rng = np.random.default_rng(seed)
    X = grid.meshgrid()
    psi = np.zeros(grid.shape)
    L = grid.hi[0] - grid.lo[0]
    for _ in range(nmodes):
        k = rng.integers(1, 4, size=grid.n)
        phase = rng.uniform(0, 2 * np.pi, size=grid.n)
        term = amplitude * rng.standard_normal()
        wave = np.ones(grid.shape)
        for i in range(grid.n):
            wave = wave * np.sin(2 * np.pi * k[i] * (X[i] - grid.lo[i]) / L + phase[i])
        psi += term * wave
    h = grid.h[0]
    b = np.zeros((grid.nt,) + tuple(grid.shape) + (grid.n,))
    b[..., 0] = -(np.roll(psi, -1, 1) - np.roll(psi, 1, 1)) / (2 * h)
    b[..., 1] = (np.roll(psi, -1, 0) - np.roll(psi, 1, 0)) / (2 * h)
    return SpaceTimeField(grid, b, grid.n)


def build_drift(cfg, grid, config_path):
    kind = _get(cfg, "drift.kind", "none")
    if kind == "none":
        return None
    nt = _get_int(cfg, "drift.nt", 17)
    dgrid = grid.with_times(grid.t0, grid.t1, nt)
    if kind == "manifest":
        rel = _get(cfg, "drift.manifest", required=True)
        p = Path(config_path).parent / rel
        if not p.is_file():
            raise ConfigError(f"drift manifest not found: {p}")
        from .drifts import DriftAssembly
        asm = DriftAssembly.from_manifest(p.read_text())
        return FieldDrift(asm.sample_drift(dgrid))
    if kind == "random_stream":
        seed = _get_int(cfg, "drift.seed", 0)
        amp = _get_float(cfg, "drift.amplitude", 1.0)
        return FieldDrift(trig_stream_field(dgrid, seed, amp))
    raise ConfigError(f"unknown drift.kind {kind!r}")


# ---------------------------------------------------------------------------
# scenario: plain diffusion run with ledger checks


def scenario_diffusion(cfg, config_path, jobs):
    grid = build_grid(cfg)
    sol = build_solver_config(cfg)
    drift = build_drift(cfg, grid, config_path)
    init = _get(cfg, "init.kind", "blob")
    center = _get_tuple(cfg, "init.center", (0.0,) * grid.n)
    width = _get_float(cfg, "init.width", 4.0 * min(grid.h))
    out = output_dir(cfg, config_path)

    try:
        if init == "fundamental":
            run = fundamental_solution(center, grid.t0, drift, grid, sol, width)
        elif init == "blob":
            from .solver import gaussian_blob
            theta0 = gaussian_blob(grid, center, width,
                                   normalize=_get(cfg, "init.normalize", "true") == "true")
            run = solve(theta0, drift, grid, sol)
        else:
            raise ConfigError(f"unknown init.kind {init!r}")
    except ValueError as e:
        raise PreconditionError(str(e))

    out.mkdir(parents=True, exist_ok=True)
    run.write_csv(out / "ledger.csv")
    write_field(out / "final.dlf1", SpaceTimeField(
        grid.with_times(grid.times[-1], grid.times[-1], 1),
        run.trajectory.samples[-1:]))
    rows = []
    if grid.bc == "periodic":
        drift_rel = np.abs(run.mass - run.mass[0]).max() / abs(run.mass[0])
        rows.append(("mass_conservation", drift_rel, 1e-8, drift_rel < 1e-8))
    growth = np.diff(run.maximum).max(initial=0.0) / max(abs(run.maximum[0]), 1e-300)
    rows.append(("max_principle", growth, 1e-10, growth <= 1e-10))
    ok = write_summary(out / "summary.csv", rows)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# scenario: Nash drift-independence ensemble


def _nash_member(payload):
    cfg, config_path, idx = payload
    grid = build_grid(cfg)
    sol = build_solver_config(cfg)
    count = _get_int(cfg, "ensemble.count", 10)
    seed = _get_int(cfg, "scenario.seed", 0)
    amp = _get_float(cfg, "ensemble.amplitude", 1.0)
    nt = _get_int(cfg, "drift.nt", 17)
    dgrid = grid.with_times(grid.t0, grid.t1, nt)
    span = grid.t1 - grid.t0

    if idx == 0:
        label, drift = "drift_free", None
    elif idx == count - 2:
        label = "borderline_assembly"
        asm = assemble_borderline(3, n=grid.n, scale0=0.2, travel=0.6,
                                  end_time=grid.t0 + span, gap_frac=0.02,
                                  x_start=(-0.3,) + (0.0,) * (grid.n - 1))
        drift = FieldDrift(asm.sample_drift(dgrid))
    elif idx == count - 1:
        label = "selfsimilar_assembly"
        t_seq = grid.t0 + span * np.array([0.05, 0.4, 1.0])
        asm = assemble_selfsimilar(t_seq, n=grid.n, travel=0.6,
                                   x_start=(-0.3,) + (0.0,) * (grid.n - 1))
        drift = FieldDrift(asm.sample_drift(dgrid))
    else:
        label = f"random_stream_{idx}"
        drift = FieldDrift(trig_stream_field(dgrid, seed + idx, amp))

    run = fundamental_solution((0.0,) * grid.n, grid.t0, drift, grid, sol)
    ts = grid.times - grid.t0
    sup = run.trajectory.samples.reshape(grid.nt, -1).max(axis=1)
    q = float((ts[1:] ** (grid.n / 2.0) * sup[1:]).max())
    return label, q


def scenario_nash_ensemble(cfg, config_path, jobs):
    count = _get_int(cfg, "ensemble.count", 10)
    if count < 3:
        raise ConfigError("ensemble.count must be >= 3")
    build_grid(cfg)  # validate before any work
    out = output_dir(cfg, config_path)
    payloads = [(cfg, str(config_path), i) for i in range(count)]
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                results = list(ex.map(_nash_member, payloads))
        else:
            results = [_nash_member(p) for p in payloads]
    except ValueError as e:
        raise PreconditionError(str(e))

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "members.csv", "w") as f:
        f.write("member,label,nash_quotient\n")
        for i, (label, q) in enumerate(results):
            f.write(f"{i},{label},{FMT % q}\n")
    qs = np.array([q for _, q in results])
    spread = float(qs.max() / qs.min())
    n = _get_int(cfg, "grid.n", 2)
    ref = (4.0 * np.pi) ** (-n / 2.0)
    free_err = abs(results[0][1] - ref) / ref
    rows = [("nash_spread", spread, 2.0, spread < 2.0),
            ("drift_free_vs_gaussian", free_err, 0.1, free_err < 0.1)]
    ok = write_summary(out / "summary.csv", rows)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# scenario: borderline blow-up trend


def blowup_probe_series(assembly, resolution, extent, tau0=0.2, tau1=0.5,
                        probe_radius=0.5, drift_nt=17, dt=None):
    """Per-block solver runs; probe sup over a fixed ball at activation peaks.

    Each block is run in physical coordinates on its own window
    (t0 + tau0 R^2, t0 + tau1 R^2) starting from the assembly subsolution,
    advected by the sampled assembly drift.  Returns (sups, regressors)
    with regressor A_k (t'_k)^{-n/2}.
    """
    n = assembly.n
    sups, regs = [], []
    for blk in assembly.blocks:
        t_start = blk.t0 + tau0 * blk.width
        t_end = blk.t0 + tau1 * blk.width
        grid = Grid(n, (-extent,) * n, (extent,) * n, (resolution,) * n,
                    t_start, t_end, 2, "periodic")
        dgrid = grid.with_times(t_start, t_end, drift_nt)
        drift = FieldDrift(assembly.sample_drift(dgrid))
        pts = np.stack(grid.meshgrid(), axis=-1)
        theta0 = assembly.subsolution_at(t_start, pts)
        run = solve(theta0, drift, grid, SolverConfig(dt=dt))
        r = np.sqrt((pts**2).sum(axis=-1))
        sups.append(float(run.trajectory.samples[-1][r <= probe_radius].max()))
        regs.append(blk.A * blk.t_prime ** (-n / 2.0))
    return np.array(sups), np.array(regs)


def scenario_borderline_blowup(cfg, config_path, jobs):
    K = _get_int(cfg, "assembly.K", 6)
    scale0 = _get_float(cfg, "assembly.scale0", 0.3)
    ratio = _get_float(cfg, "assembly.ratio", 0.8)
    amp_ratio = _get_float(cfg, "assembly.amp_ratio", 0.9)
    travel = _get_float(cfg, "assembly.travel", 1.2)
    end_time = _get_float(cfg, "assembly.end_time", 0.98)
    resolution = _get_int(cfg, "run.resolution", 256)
    extent = _get_float(cfg, "run.extent", 2.0)
    tau0 = _get_float(cfg, "run.tau0", 0.2)
    tau1 = _get_float(cfg, "run.tau1", 0.5)
    probe_radius = _get_float(cfg, "probe.radius", 0.5)
    if travel / 2.0 + 4.2 * scale0 > extent:
        raise ConfigError("run.extent too small for the cap support")
    amplitudes = amp_ratio ** np.arange(K)
    try:
        asm = assemble_borderline(K, amplitudes=amplitudes, scale0=scale0,
                                  ratio=ratio, travel=travel, end_time=end_time,
                                  x_start=(-travel / 2.0, 0.0))
    except ValueError as e:
        raise ConfigError(str(e))
    out = output_dir(cfg, config_path)
    try:
        sups, regs = blowup_probe_series(
            asm, resolution, extent, tau0, tau1, probe_radius,
            drift_nt=_get_int(cfg, "drift.nt", 17),
            dt=_get_float(cfg, "solver.dt"))
    except ValueError as e:
        raise PreconditionError(str(e))

    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.txt").write_text(asm.manifest())
    with open(out / "blocks.csv", "w") as f:
        f.write("block,regressor,probe_sup\n")
        for k in range(K):
            f.write(f"{k + 1},{FMT % regs[k]},{FMT % sups[k]}\n")
    slope = float(np.polyfit(np.log(regs), np.log(sups), 1)[0])
    running = np.maximum.accumulate(sups)
    tail = running[-min(5, K):]
    increasing = bool(np.all(np.diff(tail) > 0))
    rows = [("loglog_slope_vs_regressor", slope, 0.0, slope > 0.0),
            ("running_sup_increasing_tail", float(increasing), 1.0, increasing)]
    ok = write_summary(out / "summary.csv", rows)
    return 0 if ok else 1


SCENARIOS = {
    "diffusion": scenario_diffusion,
    "nash_ensemble": scenario_nash_ensemble,
    "borderline_blowup": scenario_borderline_blowup,
}


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(args):
    cfg = parse_config(args.config)
    kind = _get(cfg, "scenario.kind", required=True)
    if kind not in SCENARIOS:
        raise ConfigError(f"unknown scenario.kind {kind!r}")
    return SCENARIOS[kind](cfg, args.config, args.jobs)


_ORDERS = {"tq": TIME_OUTER, "xt": SPACE_OUTER,
           "sliced-tr": SLICED_TR, "sliced-rt": SLICED_RT}

_CLASS_LABELS = {
    "subcritical_or_critical": "Region A",
    "supercritical_bounded": "Region B",
    "bounded_total_speed": "bounded total speed",
    "unbounded_line": "unbounded line",
    "dimension_reduced_ok": "dimension_reduced_ok",
    "dimension_reduced_fail": "dimension_reduced_fail",
    "unknown": "unknown (open segment)",
}


def _parse_exponent(s):
    if s in ("inf", "Inf", "INF"):
        return np.inf
    return float(s)


def cmd_classify(args):
    try:
        spec = MixedNormSpec(_ORDERS[args.order], args.n,
                             p=_parse_exponent(args.p), q=_parse_exponent(args.q))
        rep = criticality_index(spec)
    except (KeyError, ValueError) as e:
        raise ConfigError(str(e))
    label = _CLASS_LABELS[rep.cls]
    if rep.cls == "dimension_reduced_fail" and "(n-1)/2 endpoint" in rep.governing:
        label += " ((n−1)/2 endpoint)"
    print(f"ζ₀ = {rep.zeta0:.3f}, {label}")
    return 0


def cmd_norm(args):
    try:
        field = read_field(args.dump)
    except (OSError, ValueError) as e:
        raise ConfigError(str(e))
    g = field.grid
    try:
        spec = MixedNormSpec(
            _ORDERS[args.order], g.n, p=_parse_exponent(args.p),
            q=_parse_exponent(args.q), beta=_parse_exponent(args.beta),
            gamma=_parse_exponent(args.gamma), kappa=_parse_exponent(args.kappa))
        center = tuple(float(x) for x in args.center.split(","))
        region = Annulus(center, args.rinner, args.radius,
                         g.t0 if args.t0 is None else args.t0,
                         g.t1 if args.t1 is None else args.t1)
        val = mixed_norm(field, spec, region)
    except (KeyError, ValueError) as e:
        raise ConfigError(str(e))
    print(FMT % val)
    return 0


def cmd_decompose(args):
    try:
        field = read_field(args.dump)
        dec = hodge_decompose(field)
    except (OSError, ValueError) as e:
        raise ConfigError(str(e))
    recon = dec.reconstruct()
    scale = np.abs(field.samples).max()
    err = np.abs(recon.samples - field.samples).max() / max(scale, 1e-300)
    print(f"residual = {FMT % dec.residual}")
    print(f"potential_l2 = {FMT % dec.a_l2()}")
    print(f"reconstruction_error = {FMT % err}")
    return 0 if err < 1e-6 else 1


def cmd_report(args):
    root = Path(args.dir)
    if not root.is_dir():
        raise ConfigError(f"not a directory: {root}")
    failures = 0
    found = 0
    for summary in sorted(root.rglob("summary.csv")):
        found += 1
        print(f"[{summary.parent.relative_to(root)}]")
        for line in summary.read_text().strip().splitlines()[1:]:
            check, value, threshold, passed = line.split(",")
            status = "pass" if passed == "1" else "FAIL"
            if passed != "1":
                failures += 1
            print(f"  {check}: {value} (threshold {threshold}) {status}")
    if found == 0:
        raise ConfigError("no summary.csv files found")
    return 1 if failures else 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="driftlab",
        description="advection-diffusion scenario runner and diagnostics")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario config")
    p.add_argument("config")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers for ensemble members")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("classify", help="classify a mixed-norm drift space")
    p.add_argument("--order", choices=sorted(_ORDERS), required=True)
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("norm", help="mixed norm of a field dump")
    p.add_argument("dump")
    p.add_argument("--order", choices=sorted(_ORDERS), required=True)
    p.add_argument("--p", default="inf")
    p.add_argument("--q", default="inf")
    p.add_argument("--beta", default="inf")
    p.add_argument("--gamma", default="inf")
    p.add_argument("--kappa", default="inf")
    p.add_argument("--center", default="0,0")
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--rinner", type=float, default=0.0)
    p.add_argument("--t0", type=float, default=None)
    p.add_argument("--t1", type=float, default=None)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("decompose", help="Hodge-decompose a drift dump")
    p.add_argument("dump")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("report", help="summarize scenario outputs under a directory")
    p.add_argument("dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except PreconditionError as e:
        print(f"precondition violated: {e}", file=sys.stderr)
        return 3
    except DiagnosticError as e:
        print(f"diagnostic failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
