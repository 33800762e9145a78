"""Diagnostics: residual and sign checks, boundedness and Harnack quotients,
Moser iteration traces, Davies weighted energies, and fundamental-solution
tail verification.

All diagnostics are pure functions of completed runs (or constructed fields);
they report fitted constants and margins rather than asserting theorems.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .fields import SpaceTimeField, gradient, laplacian
from .norms import (
    FBC_PREFACTOR,
    GoodSlices,
    _energy_terms,
    _flux_average,
    _time_selection,
    good_slices,
)


# ---------------------------------------------------------------------------
# fundamental-solution bound parameters


@dataclass(frozen=True)
class FundSolBoundParams:
    """Constants (α₀, M₀, C₀) of the fundamental-solution upper bound."""

    alpha0: float
    M0: float
    C0: float
    theta2: float

    def __post_init__(self):
        if self.alpha0 < 0 or self.M0 <= 0 or self.C0 <= 0:
            raise ValueError("need alpha0 >= 0 and positive M0, C0")


def fundsol_params(spec, b_norm, prefactor=FBC_PREFACTOR):
    """Derive (α₀, M₀, C₀) from a mixed-norm spec and the measured drift norm.

    θ₂ = 1 − ζ₀/2 and α₀ = (ζ₀ − 1)/θ₂ for 1 ≤ ζ₀ < 2 (clamped to 0 in the
    subcritical range); M₀ = C ∥b∥^{1/θ₂} + 1/4.
    """
    z = spec.zeta0
    if not z < 2:
        raise ValueError("spec must be strictly below the zeta0 = 2 line")
    th2 = 1.0 - z / 2.0
    alpha0 = max(0.0, (z - 1.0) / th2)
    M0 = prefactor * b_norm ** (1.0 / th2) + 0.25
    return FundSolBoundParams(alpha0, M0, prefactor, th2)


def drift_free_params(prefactor=FBC_PREFACTOR):
    return FundSolBoundParams(0.0, 0.25, prefactor, 0.5)


# ---------------------------------------------------------------------------
# residuals


@dataclass
class ResidualReport:
    max_residual: float
    residual: SpaceTimeField
    checked: np.ndarray  # boolean mask of points that entered the max
    violations: np.ndarray


def _as_field_and_drift(theta, b):
    if hasattr(theta, "trajectory"):
        run = theta
        field = run.trajectory
        if b is None and run.drift is not None:
            b = run.drift.sample(field.grid)
    else:
        field = theta
    return field, b


def subsolution_residual(theta, b=None, exclude=None, tol=0.0):
    """Discrete residual ∂_t θ − Δθ + b·∇θ away from declared kink sets.

    ``exclude`` is a boolean space-time mask of kink points; it is dilated by
    two cells (≈ 2h) before exclusion.  Boundary frames and the first/last
    stored times are always excluded.  Positive residual above ``tol`` is a
    violation.
    """
    field, b = _as_field_and_drift(theta, b)
    g = field.grid
    if b is not None and (b.grid.shape != g.shape or b.grid.nt != g.nt):
        raise ValueError("field and drift grids do not match")
    res = np.zeros_like(field.samples)
    lap = laplacian(field).samples
    if g.nt < 3:
        raise ValueError("need at least three stored times for the time derivative")
    dt = g.dt
    res[1:-1] = (field.samples[2:] - field.samples[:-2]) / (2.0 * dt)
    res -= lap
    if b is not None:
        gr = gradient(field).samples
        res += (b.samples * gr).sum(axis=-1)

    checked = np.ones(field.samples.shape, dtype=bool)
    checked[0] = checked[-1] = False
    frame = 3
    for a in range(g.n):
        sl = [slice(None)] * (g.n + 1)
        sl[1 + a] = slice(0, frame)
        checked[tuple(sl)] = False
        sl[1 + a] = slice(-frame, None)
        checked[tuple(sl)] = False
    if exclude is not None:
        grown = ndimage.binary_dilation(exclude, iterations=2)
        checked &= ~grown
    vals = res[checked]
    mx = float(vals.max()) if vals.size else -np.inf
    viol = checked & (res > tol)
    return ResidualReport(mx, SpaceTimeField(g, res, allow_nonfinite=True),
                          checked, viol)


# ---------------------------------------------------------------------------
# quotients


@dataclass(frozen=True)
class Cylinder:
    center: tuple
    radius: float
    t0: float
    t1: float

    def contains(self, other):
        c0 = np.asarray(self.center)
        c1 = np.asarray(other.center)
        return (np.linalg.norm(c1 - c0) + other.radius <= self.radius + 1e-12
                and self.t0 <= other.t0 + 1e-12 and other.t1 <= self.t1 + 1e-12)


def _cyl_masks(grid, cyl):
    X = grid.meshgrid()
    r = np.sqrt(sum((X[i] - cyl.center[i]) ** 2 for i in range(grid.n)))
    space = r <= cyl.radius
    times = (grid.times >= cyl.t0 - 1e-12) & (grid.times <= cyl.t1 + 1e-12)
    return space, times


def local_boundedness_quotient(run, inner, outer, gamma=1.0):
    """sup_{Q'} |θ| divided by ∥θ∥_{L^γ(Q \\ Q')} for nested cylinders."""
    if not 0 < gamma <= 2:
        raise ValueError("gamma must lie in (0, 2]")
    if not outer.contains(inner):
        raise ValueError("inner cylinder is not nested in the outer one")
    field = run.trajectory if hasattr(run, "trajectory") else run
    g = field.grid
    si, ti = _cyl_masks(g, inner)
    so, to = _cyl_masks(g, outer)
    th = np.abs(field.samples)
    sup = float(th[ti][:, si].max())
    tidx, tw = _time_selection(g, outer.t0, outer.t1)
    total = 0.0
    for j, w in zip(tidx, tw):
        in_inner_time = inner.t0 - 1e-12 <= g.times[j] <= inner.t1 + 1e-12
        mask = so & ~(si & in_inner_time)
        total += (th[j][mask] ** gamma).sum() * g.cell_volume * w
    return sup / total ** (1.0 / gamma)


@dataclass
class HarnackReport:
    value: float
    kappa: float
    value_at_kappa_tenth: float


def harnack_quotient(run, center, radius, I1, I2, kappa_rel=1e-12):
    """sup over B×I₁ divided by inf over B×I₂ (with the θ + κ device)."""
    if not I1[1] <= I2[0]:
        raise ValueError("I1 must end before I2 begins")
    field = run.trajectory if hasattr(run, "trajectory") else run
    g = field.grid
    space, _ = _cyl_masks(g, Cylinder(tuple(center), radius, g.t0, g.t1))

    def quotient(kappa):
        th = field.samples + kappa
        m1 = (g.times >= I1[0] - 1e-12) & (g.times <= I1[1] + 1e-12)
        m2 = (g.times >= I2[0] - 1e-12) & (g.times <= I2[1] + 1e-12)
        if not m1.any() or not m2.any():
            raise ValueError("intervals contain no stored times")
        sup = th[m1][:, space].max()
        inf = th[m2][:, space].min()
        return float(sup / inf)

    kappa = kappa_rel * float(field.samples.max())
    return HarnackReport(quotient(kappa), kappa, quotient(kappa / 10.0))


# ---------------------------------------------------------------------------
# Moser iteration trace


@dataclass
class MoserTrace:
    chi: float
    betas: np.ndarray
    Ms: np.ndarray
    ladder: list          # (radius_k, tau_k)
    Cbig: float
    predicted_sup: float
    sup_inner: float

    @property
    def amplification(self):
        return self.Ms[1:] / self.Ms[:-1]


def moser_constant(fbc, rho, R, T, tau, R0=None):
    """The aggregate 𝐂 = 1/(δ²(R−r)²) + M R₀^α/(δ^α R₀² (R−r)^α) + 1/(τ−T)."""
    R0 = R0 if R0 is not None else R
    d, a = fbc.delta, fbc.alpha
    return (1.0 / (d**2 * (R - rho) ** 2)
            + fbc.M * R0**a / (d**a * R0**2 * (R - rho) ** a)
            + 1.0 / (tau - T))


def moser_trace(run, center, rho, R, T, tau, t_end, fbc, R0=None, kmax=8):
    """Norm ladder M_k = ∥θ²∥_{L^{β_k}} on shrinking cylinders, β_k = χ^k.

    Cylinder k is B_{ϱ_k} × (τ_k, t_end] with ϱ_k = ϱ + 2^{−k}(R − ϱ) and
    τ_k = τ − 2^{−k}(τ − T); norms are taken in the normalized (probability)
    measure, so M_k increases towards (sup over the inner cylinder)².
    """
    field = run.trajectory if hasattr(run, "trajectory") else run
    g = field.grid
    if not (rho < R and T < tau < t_end):
        raise ValueError("ladder geometry must be nested")
    if field.samples.min() < 0:
        raise ValueError("Moser trace expects a nonnegative field")
    chi = 1.0 + 2.0 / g.n
    betas = chi ** np.arange(kmax + 1)
    X = g.meshgrid()
    r = np.sqrt(sum((X[i] - center[i]) ** 2 for i in range(g.n)))
    Ms = []
    ladder = []
    for k in range(kmax + 1):
        rk = rho + 2.0**-k * (R - rho)
        tk = tau - 2.0**-k * (tau - T)
        ladder.append((rk, tk))
        mask = r <= rk
        tidx, tw = _time_selection(g, tk, t_end)
        vol = g.cell_volume
        meas = mask.sum() * vol * tw.sum()
        th2 = field.samples[tidx][:, mask] ** 2
        Ms.append(float(((th2 ** betas[k]).sum(axis=1) * vol @ tw / meas)
                        ** (1.0 / betas[k])))
    rinf, tinf = rho, tau
    mask = r <= rinf
    tid, _ = _time_selection(g, tinf, t_end)
    sup_inner = float(field.samples[tid][:, mask].max())
    Cbig = moser_constant(fbc, rho, R, T, tau, R0)
    predicted = Cbig ** ((g.n + 2) / 4.0) * np.sqrt(Ms[0])
    return MoserTrace(chi, betas, np.asarray(Ms), ladder, float(Cbig),
                      float(predicted), sup_inner)


# ---------------------------------------------------------------------------
# Davies weighted energy


@dataclass
class DaviesProbe:
    """Radial Lipschitz weight with ψ' = γ·1_A on a good-slice set A.

    ψ = 0 for r ≤ |x₀|/2, constant for r ≥ |x₀|, slope γ on A, so |∇ψ| ≤ γ
    and ψ(x₀) = γ|A| ≥ γ|x₀|/4.
    """

    x0: np.ndarray
    gamma: float
    r_knots: np.ndarray
    psi_knots: np.ndarray
    slices: GoodSlices

    def psi(self, r):
        return np.interp(r, self.r_knots, self.psi_knots,
                         left=0.0, right=self.psi_knots[-1])

    @property
    def psi_at_x0(self):
        return float(self.psi_knots[-1])


def davies_probe(b, x0, gamma, t0=None, t1=None, nr=33):
    """Build the weight from good slices of b on the annulus (|x₀|/2, |x₀|)."""
    x0 = np.asarray(x0, dtype=float)
    R = float(np.linalg.norm(x0))
    if b is None:
        dr = (R / 2.0) / nr
        radii = R / 2.0 + dr * (np.arange(nr) + 0.5)
        slices = GoodSlices(radii, np.zeros(nr), np.ones(nr, dtype=bool), 0.0, dr)
    else:
        g = b.grid
        slices = good_slices(b, (0.0,) * b.grid.n, R / 2.0, R,
                             t0 if t0 is not None else g.t0,
                             t1 if t1 is not None else g.t1, nr=nr)
    edges = np.concatenate([[R / 2.0], slices.radii + slices.dr / 2.0])
    psi = gamma * slices.dr * np.concatenate([[0.0], np.cumsum(slices.mask)])
    return DaviesProbe(x0, float(gamma), edges, psi, slices)


@dataclass
class DaviesReport:
    times: np.ndarray
    J: np.ndarray
    C_fit: float
    rate: float
    bound_ok: bool


def davies_energy(run, probe, params=None, c_max=1e6):
    """J(t) = ½∫ e^{2ψ} θ² and the smallest C making the Gronwall bound hold.

    Checks J(t) ≤ C J(0) exp((Cγ² + C M₀ γ^{2+α₀} + |x₀|⁻²) t − t₀) and
    reports the bisected minimal C.
    """
    field = run.trajectory if hasattr(run, "trajectory") else run
    g = field.grid
    X = g.meshgrid()
    r = np.sqrt(sum(x**2 for x in X))
    w = np.exp(2.0 * probe.psi(r))
    J = 0.5 * (field.samples**2 * w).sum(axis=tuple(range(1, g.n + 1))) * g.cell_volume
    ts = g.times - g.t0
    x0n = float(np.linalg.norm(probe.x0))
    gam = probe.gamma
    m0 = params.M0 if params is not None else 0.0
    a0 = params.alpha0 if params is not None else 0.0

    def ok(C):
        rate = C * gam**2 + C * m0 * gam ** (2.0 + a0) + x0n**-2
        # compare in log space so huge Gronwall rates cannot overflow
        lhs = np.log(np.maximum(J, 1e-300))
        rhs = np.log(C * J[0] + 1e-300) + rate * ts
        return bool(np.all(lhs <= rhs + 1e-12))

    if not ok(c_max):
        return DaviesReport(g.times, J, np.inf, np.nan, False)
    lo, hi = 0.0, c_max
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    C = hi
    rate = C * gam**2 + C * m0 * gam ** (2.0 + a0) + x0n**-2
    return DaviesReport(g.times, J, float(C), float(rate), True)


# ---------------------------------------------------------------------------
# tail verification


@dataclass
class TailReport:
    C: float
    c: float
    r: np.ndarray
    tau: np.ndarray
    values: np.ndarray
    gauss_active: np.ndarray
    outer: np.ndarray
    margins: np.ndarray

    @property
    def stretched_outer_fraction(self):
        if not self.outer.any():
            return 0.0
        return float((~self.gauss_active & self.outer).sum() / self.outer.sum())


def _tail_shape(r, tau, c, params, n):
    p0 = 1.0 + 1.0 / (1.0 + params.alpha0)
    gauss = np.exp(-c * r**2 / tau)
    stretched = np.exp(-c * r**p0 / (tau * params.M0) ** (1.0 / (1.0 + params.alpha0)))
    return tau ** (-n / 2.0) * (gauss + stretched), gauss >= stretched


def tail_check(run, params, source, s, tau_min=None, rmax=None, floor_rel=1e-10,
               c_sweep=None, slack=4.0):
    """Constrained two-exponential majorization fit over all sampled Γ values.

    For each candidate decay rate c, C(c) is the smallest prefactor that
    majorizes every sample; the reported c is the largest one whose C(c) stays
    within ``slack`` of the best achievable C.  Also classifies each sample by
    active branch (Gaussian vs stretched-exponential) and by inner/outer
    regime (outer: M₀^{1/α₀} r/τ ≥ 16, or r ≥ 16√τ when α₀ = 0).
    """
    field = run.trajectory if hasattr(run, "trajectory") else run
    g = field.grid
    h = min(g.h)
    tau_min = tau_min if tau_min is not None else 40.0 * h**2
    L = min(g.hi[i] - g.lo[i] for i in range(g.n))
    rmax = rmax if rmax is not None else 0.4 * L
    source = np.asarray(source, dtype=float)
    X = g.meshgrid()
    r = np.sqrt(sum((X[i] - source[i]) ** 2 for i in range(g.n)))
    taus = g.times - s
    sel_t = taus >= tau_min
    if not sel_t.any():
        raise ValueError("no stored times above the resolution floor")
    peak = field.samples[sel_t].max()
    rs, ts, vals = [], [], []
    for j in np.where(sel_t)[0]:
        m = (r <= rmax) & (field.samples[j] > floor_rel * peak)
        rs.append(r[m])
        ts.append(np.full(m.sum(), taus[j]))
        vals.append(field.samples[j][m])
    rs = np.concatenate(rs)
    ts = np.concatenate(ts)
    vals = np.concatenate(vals)

    c_sweep = c_sweep if c_sweep is not None else np.geomspace(1e-3, 1.0, 60)
    Cs = np.empty(len(c_sweep))
    for i, c in enumerate(c_sweep):
        shape, _ = _tail_shape(rs, ts, c, params, g.n)
        Cs[i] = (vals / shape).max()
    best = Cs.min()
    admissible = np.where(Cs <= slack * best)[0]
    i_star = admissible.max()
    c_star = float(c_sweep[i_star])
    C_star = float(Cs[i_star])
    shape, gauss = _tail_shape(rs, ts, c_star, params, g.n)
    margins = C_star * shape / np.maximum(vals, 1e-300)
    if params.alpha0 > 0:
        outer = params.M0 ** (1.0 / params.alpha0) * rs / ts >= 16.0
    else:
        outer = rs >= 16.0 * np.sqrt(ts)
    return TailReport(C_star, c_star, rs, ts, vals, gauss, outer, margins)


# ---------------------------------------------------------------------------
# FBC-tilde (condition II with varying epsilon)


@dataclass
class FbcTildeReport:
    lhs: float
    rhs: dict           # epsilon -> rhs value
    satisfied: bool
    slices: GoodSlices


def fbc_tilde_test(b, u, params, center, R, t0, t1,
                   eps_sweep=(1e-2, 1e-1, 1.0, 10.0), nr=33):
    """Evaluate the outward-flux inequality at a sweep of ε values.

    lhs = +(1/|A|) ∬_{∂B_A×I} (u²/2)(b·n) with A good slices in (R/2, R);
    rhs(ε) = M₀/(ε^{α₀+1} R^{α₀+2}) ∬_{B_R×I} u²
             + ε (R⁻² ∬_{B_R×I} u² + ∬ |∇u|² + sup_t ∫_{B_R} u²).
    Satisfied iff the inequality holds for every ε in the sweep.
    """
    g = u.grid
    tidx, tw = _time_selection(g, t0, t1)
    slices = good_slices(b, center, R / 2.0, R, t0, t1, nr=nr)
    lhs = _flux_average(b, u, center, slices, tidx, tw)
    e = _energy_terms(u, center, R / 2.0, R, t0, t1)
    rhs = {}
    ok = True
    for eps in eps_sweep:
        val = (params.M0 / (eps ** (params.alpha0 + 1.0) * R ** (params.alpha0 + 2.0))
               * e["bulk_ball"]
               + eps * (e["bulk_ball"] / R**2 + e["grad_ball"] + e["sup_ball"]))
        rhs[eps] = float(val)
        ok = ok and (lhs <= val * (1 + 1e-6) + 1e-12)
    return FbcTildeReport(float(lhs), rhs, bool(ok), slices)
