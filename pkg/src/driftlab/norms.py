"""Mixed space-time Lebesgue norms, criticality classification, good slices,
and empirical testing of the form boundedness condition (FBC).

Norm conventions
----------------
Four integration orders are supported, named by which variable is integrated
last (outermost):

* ``time_outer``   L^q_t L^p_x
* ``space_outer``  L^p_x L^q_t
* ``sliced_tr``    L^q_t L^beta_r L^gamma_sigma   (radial slicing, time outer)
* ``sliced_rt``    L^kappa_r L^q_t L^p_sigma     (radial slicing, radius outer)

Sigma norms use sphere quadrature weights that include the surface measure,
so composing the sigma, r and t integrals reproduces the space-time integral.
Infinite exponents evaluate as sample maxima. kappa may be < 1 (quasi-norm).

The scaling heuristic behind all of this: under u -> u(lx, l^2 t), b -> l b,
the time_outer norm of a drift scales by l^(1 - zeta0) with
zeta0 = 2/q + n/p, and the space_outer norm by the same law with
zeta0 = 3/q + (n-1)/p. zeta0 is the criticality index.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import SpaceTimeField, gradient, shell_restrict

INF = np.inf

TIME_OUTER = "time_outer"
SPACE_OUTER = "space_outer"
SLICED_TR = "sliced_tr"
SLICED_RT = "sliced_rt"

# criticality classes
REGION_A = "subcritical_or_critical"
REGION_B = "supercritical_bounded"
BOUNDED_TOTAL_SPEED = "bounded_total_speed"
UNBOUNDED_LINE = "unbounded_line"
DIMRED_OK = "dimension_reduced_ok"
DIMRED_FAIL = "dimension_reduced_fail"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class MixedNormSpec:
    order: str
    n: int
    p: float = INF
    q: float = INF
    beta: float = INF
    gamma: float = INF
    kappa: float = INF

    def __post_init__(self):
        if self.order not in (TIME_OUTER, SPACE_OUTER, SLICED_TR, SLICED_RT):
            raise ValueError(f"unknown order {self.order!r}")
        for name in ("p", "q", "beta", "gamma"):
            v = getattr(self, name)
            if not v >= 1:
                raise ValueError(f"exponent {name} must be in [1, inf]")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    @property
    def zeta0(self):
        """Criticality index of the spec (time_outer / space_outer laws)."""
        if self.order in (TIME_OUTER,):
            return 2.0 / self.q + self.n / self.p
        if self.order in (SPACE_OUTER, SLICED_RT):
            return 3.0 / self.q + (self.n - 1.0) / self.p
        # sliced_tr
        return 2.0 / self.q + 1.0 / self.beta + (self.n - 1.0) / self.gamma


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    t0: float
    t1: float


@dataclass(frozen=True)
class Annulus:
    center: tuple
    r_inner: float
    r_outer: float
    t0: float
    t1: float


def ball(center, radius, t0, t1):
    return Annulus(tuple(center), 0.0, radius, t0, t1)


def _pnorm(vals, weights, p, axis=-1):
    """(sum w |v|^p)^(1/p) along axis; max for p = inf. Works for p < 1 too."""
    a = np.abs(np.moveaxis(vals, axis, -1))
    if np.isinf(p):
        return a.max(axis=-1)
    return ((a**p) @ weights) ** (1.0 / p)


def _trapz_weights(m, dt):
    w = np.full(m, dt)
    if m == 1:
        return np.array([1.0])
    w[0] = w[-1] = dt / 2.0
    return w


def _time_selection(grid, t0, t1):
    times = grid.times
    idx = np.where((times >= t0 - 1e-12) & (times <= t1 + 1e-12))[0]
    if len(idx) == 0:
        raise ValueError("region time window contains no samples")
    return idx, _trapz_weights(len(idx), grid.dt if grid.nt > 1 else 1.0)


def _magnitude(f):
    return np.abs(f.samples) if f.is_scalar else np.sqrt((f.samples**2).sum(axis=-1))


def _spatial_mask(grid, region):
    X = grid.meshgrid()
    if isinstance(region, Box):
        m = np.ones(grid.shape, dtype=bool)
        for i in range(grid.n):
            m &= (X[i] >= region.lo[i]) & (X[i] <= region.hi[i])
        return m
    c = region.center
    r = np.sqrt(sum((X[i] - c[i]) ** 2 for i in range(grid.n)))
    return (r >= region.r_inner) & (r <= region.r_outer)


def mixed_norm(f, spec, region, nshells=None, npts=None):
    """Nested discrete Lebesgue norm of |f| over the region, in spec order.

    For sliced specs the region must be an Annulus (its center seeds the
    shells). Trapezoidal weights in t and r, cell volumes in x, sphere
    quadrature in sigma.
    """
    g = f.grid
    if spec.order in (SLICED_TR, SLICED_RT) and not isinstance(region, Annulus):
        raise ValueError("sliced norms need an annulus region with a center")
    tidx, tw = _time_selection(g, region.t0, region.t1)
    mag = _magnitude(f)[tidx]

    if spec.order in (TIME_OUTER, SPACE_OUTER):
        mask = _spatial_mask(g, region)
        if not mask.any():
            raise ValueError("region contains no spatial samples")
        vals = mag[:, mask]  # (nt_sel, ncells)
        vol = np.full(vals.shape[1], g.cell_volume)
        if spec.order == TIME_OUTER:
            per_t = _pnorm(vals, vol, spec.p, axis=-1)
            return float(_pnorm(per_t, tw, spec.q, axis=-1))
        per_x = _pnorm(vals.T, tw, spec.q, axis=-1)
        return float(_pnorm(per_x, vol, spec.p, axis=-1))

    # sliced orders: build (r, t, sigma) samples
    r0, r1 = region.r_inner, region.r_outer
    if r0 <= 0:
        raise ValueError("sliced norms need r_inner > 0")
    nr = nshells or max(17, int(np.ceil(3.0 * (r1 - r0) / min(g.h))) | 1)
    radii = np.linspace(r0, r1, nr)
    rw = _trapz_weights(nr, (r1 - r0) / (nr - 1))
    sh = shell_restrict(f, region.center, radii, npts=npts)
    per_rt = np.empty((nr, len(tidx)))
    for j in range(nr):
        s = sh.samples[j]
        m = np.abs(s[tidx]) if f.is_scalar else np.sqrt((s[tidx] ** 2).sum(axis=-1))
        inner_p = spec.gamma if spec.order == SLICED_TR else spec.p
        per_rt[j] = _pnorm(m, sh.weights[j], inner_p, axis=-1)
    if spec.order == SLICED_TR:
        per_t = _pnorm(per_rt.T, rw, spec.beta, axis=-1)  # L^beta_r
        return float(_pnorm(per_t, tw, spec.q, axis=-1))  # L^q_t
    per_r = _pnorm(per_rt, tw, spec.q, axis=-1)  # L^q_t
    return float(_pnorm(per_r, rw, spec.kappa, axis=-1))  # L^kappa_r


# ---------------------------------------------------------------------------
# criticality classification


@dataclass(frozen=True)
class CriticalityReport:
    zeta0: float
    cls: str
    governing: str


def _close(a, b):
    return abs(a - b) < 1e-9


def criticality_index(spec):
    """Classify a drift space by its criticality index zeta0.

    time_outer (L^q_t L^p_x), zeta0 = 2/q + n/p:
      zeta0 <= 1 region A (local boundedness, subcritical or critical);
      1 < zeta0 < 2 region B (supercritical, local boundedness still holds);
      (q, p) = (1, inf) the bounded-total-speed endpoint of the zeta0 = 2 line;
      zeta0 >= 2 with q > 1: local boundedness fails (counterexample line).

    space_outer (L^p_x L^q_t), requires p <= q, zeta0 = 3/q + (n-1)/p:
      zeta0 < 2 dimension-reduced local boundedness; zeta0 > 2 fails;
      on zeta0 = 2 the endpoints (p = q = (n+2)/2 and p = (n-1)/2, q = inf)
      fail while the open segment between them is an open problem ("unknown").
    """
    n = spec.n
    z = spec.zeta0
    if spec.order == TIME_OUTER:
        if _close(spec.q, 1.0) and np.isinf(spec.p):
            return CriticalityReport(z, BOUNDED_TOTAL_SPEED,
                                     "L^1_t L^inf_x: bounded total speed endpoint of the zeta0 = 2 line")
        if z <= 1.0 + 1e-9:
            return CriticalityReport(z, REGION_A,
                                     "2/q + n/p <= 1: subcritical or critical (region A)")
        if z < 2.0 - 1e-9:
            return CriticalityReport(z, REGION_B,
                                     "1 < 2/q + n/p < 2: supercritical, local boundedness holds (region B)")
        return CriticalityReport(z, UNBOUNDED_LINE,
                                 "2/q + n/p >= 2 with q > 1: local boundedness fails")
    if spec.order == SPACE_OUTER:
        note = "" if spec.p <= spec.q + 1e-9 else " [p <= q violated: classification only covers p <= q]"
        if z < 2.0 - 1e-9:
            return CriticalityReport(z, DIMRED_OK,
                                     "3/q + (n-1)/p < 2, p <= q: dimension-reduced local boundedness" + note)
        if z > 2.0 + 1e-9:
            return CriticalityReport(z, DIMRED_FAIL,
                                     "3/q + (n-1)/p > 2: local boundedness fails (self-similar blocks)" + note)
        if _close(spec.p, (n - 1) / 2.0) and np.isinf(spec.q):
            return CriticalityReport(z, DIMRED_FAIL,
                                     "steady endpoint p = (n-1)/2, q = inf: fails ((n-1)/2 endpoint)" + note)
        if _close(spec.p, (n + 2) / 2.0) and _close(spec.q, (n + 2) / 2.0):
            return CriticalityReport(z, DIMRED_FAIL,
                                     "isotropic endpoint p = q = (n+2)/2: fails" + note)
        return CriticalityReport(z, UNKNOWN,
                                 "open segment of the 3/q + (n-1)/p = 2 line: open problem" + note)
    raise ValueError("criticality classification applies to time_outer / space_outer specs")


# ---------------------------------------------------------------------------
# good slices and the form boundedness condition


@dataclass
class GoodSlices:
    radii: np.ndarray
    slice_norms: np.ndarray
    mask: np.ndarray
    threshold: float
    dr: float

    @property
    def measure(self):
        return float(self.mask.sum() * self.dr)

    @property
    def total(self):
        return float(len(self.radii) * self.dr)


def good_slices(b, center, rho, R, t0, t1, q=INF, p=INF, kappa=1.0, nr=33, npts=None):
    """Chebyshev slice selection on r -> ||b||_{L^q_t L^p_sigma(dB_r x I)}^kappa.

    Keeps the radii whose slice norm^kappa is at most twice the kappa-average,
    which guarantees measure(A) >= (R - rho)/2.
    """
    radii = rho + (R - rho) * (np.arange(nr) + 0.5) / nr
    dr = (R - rho) / nr
    g = b.grid
    tidx, tw = _time_selection(g, t0, t1)
    sh = shell_restrict(b, center, radii, npts=npts)
    norms = np.empty(nr)
    for j in range(nr):
        s = sh.samples[j][tidx]
        m = np.abs(s) if b.is_scalar else np.sqrt((s**2).sum(axis=-1))
        per_t = _pnorm(m, sh.weights[j], p, axis=-1)
        norms[j] = _pnorm(per_t, tw, q, axis=-1)
    powered = norms**kappa
    threshold = 2.0 * powered.mean()
    mask = powered <= threshold + 1e-300
    return GoodSlices(radii, norms, mask, float(threshold), dr)


@dataclass(frozen=True)
class FbcParams:
    M: float
    N: float
    alpha: float
    delta: float
    epsilon: float
    theta2: float

    def __post_init__(self):
        if not (0 <= self.epsilon < 0.5):
            raise ValueError("epsilon must lie in [0, 1/2)")
        if not (0 < self.delta <= 1):
            raise ValueError("delta must lie in (0, 1]")


# The proposition's constants contain an absolute constant from the embedding
# and interpolation steps; it is not computed in closed form, so a calibrated
# sufficient value is used.  Raw lhs/rhs are always reported for diagnosis.
FBC_PREFACTOR = 4.0


def fbc_params_sliced(spec, b_norm, R0, prefactor=FBC_PREFACTOR):
    """FBC constants for b in L^q_t L^beta_r L^gamma_sigma, beta >= n/2,
    zeta0 = 2/q + 1/beta + (n-1)/gamma < 2: alpha = 1/theta2, delta = 1,
    N = eps = 1/4, M = C (R0^(1-zeta0) ||b||)^(1/theta2) + 1/4."""
    if spec.order != SLICED_TR:
        raise ValueError("expected a sliced_tr spec")
    z = spec.zeta0
    if not z < 2:
        raise ValueError("spec must be strictly below the zeta0 = 2 line")
    th2 = 1.0 - z / 2.0
    M = prefactor * (R0 ** (1.0 - z) * b_norm) ** (1.0 / th2) + 0.25
    return FbcParams(M=M, N=0.25, alpha=1.0 / th2, delta=1.0, epsilon=0.25, theta2=th2)


def fbc_params_radial(spec, b_norm, R0, prefactor=FBC_PREFACTOR):
    """FBC constants for b in L^kappa_r L^q_t L^p_sigma, p <= q,
    zeta0 = 3/q + (n-1)/p < 2: alpha = (1/kappa + (q-1)/q)/theta2,
    delta = 1/2, N = eps = 1/4.  With kappa = p this covers L^p_x L^q_t."""
    if spec.order != SLICED_RT:
        raise ValueError("expected a sliced_rt spec")
    z = spec.zeta0
    if not z < 2:
        raise ValueError("spec must be strictly below the zeta0 = 2 line")
    th2 = 1.0 - z / 2.0
    alpha = (1.0 / spec.kappa + (spec.q - 1.0) / spec.q) / th2 if not np.isinf(spec.q) \
        else (1.0 / spec.kappa + 1.0) / th2
    M = prefactor * (R0 ** (1.0 - z) * b_norm) ** (1.0 / th2) + 0.25
    return FbcParams(M=M, N=0.25, alpha=alpha, delta=0.5, epsilon=0.25, theta2=th2)


@dataclass
class FbcReport:
    lhs: float
    rhs: float
    satisfied: bool
    slices: GoodSlices
    terms: dict


def _flux_average(b, u, center, slices, tidx, tw):
    """-(1/|A|) * integral over B_A x I of (u^2/2)(b . n), plus its raw value."""
    radii = slices.radii[slices.mask]
    shb = shell_restrict(b, center, radii)
    shu = shell_restrict(u, center, radii)
    total = 0.0
    for j in range(len(radii)):
        bn = (shb.samples[j][tidx] * shb.normals[j]).sum(axis=-1)
        u2 = shu.samples[j][tidx] ** 2
        per_t = ((u2 / 2.0) * bn * shb.weights[j]).sum(axis=-1)
        total += (per_t * tw).sum() * slices.dr
    return total / slices.measure


def _energy_terms(u, center, rho, R, t0, t1):
    g = u.grid
    tidx, tw = _time_selection(g, t0, t1)
    X = g.meshgrid()
    r = np.sqrt(sum((X[i] - center[i]) ** 2 for i in range(g.n)))
    ann = (r >= rho) & (r <= R)
    ballm = r <= R
    u2 = u.samples[tidx] ** 2
    vol = g.cell_volume
    bulk_ann = float((u2[:, ann].sum(axis=1) * vol * tw).sum())
    bulk_ball = float((u2[:, ballm].sum(axis=1) * vol * tw).sum())
    gu = gradient(u).samples[tidx]
    g2 = (gu**2).sum(axis=-1)
    grad_ann = float((g2[:, ann].sum(axis=1) * vol * tw).sum())
    grad_ball = float((g2[:, ballm].sum(axis=1) * vol * tw).sum())
    sup_ball = float((u2[:, ballm].sum(axis=1) * vol).max())
    return dict(bulk_annulus=bulk_ann, bulk_ball=bulk_ball, grad_annulus=grad_ann,
                grad_ball=grad_ball, sup_ball=sup_ball)


def fbc_test(b, u, params, center, rho, R, t0, t1, R0=None,
             slice_q=INF, slice_p=INF, kappa=1.0, nr=33):
    """Evaluate both sides of the form boundedness condition.

    lhs = -(1/|A|) iint_{B_A x I} (u^2/2)(b.n), with A from good_slices;
    rhs = M R0^a/(d^a R0^2 (R-rho)^a) * iint_{(B_R\\B_rho) x I} u^2
          + N iint |grad u|^2 + eps sup_t int_{B_R} u^2.
    """
    R0 = R0 if R0 is not None else R
    g = u.grid
    tidx, tw = _time_selection(g, t0, t1)
    slices = good_slices(b, center, rho, R, t0, t1, q=slice_q, p=slice_p,
                         kappa=kappa, nr=nr)
    lhs = -_flux_average(b, u, center, slices, tidx, tw)
    e = _energy_terms(u, center, rho, R, t0, t1)
    a, d = params.alpha, params.delta
    rhs = (params.M * R0**a / (d**a * R0**2 * (R - rho) ** a) * e["bulk_annulus"]
           + params.N * e["grad_annulus"] + params.epsilon * e["sup_ball"])
    ok = lhs <= rhs * (1.0 + 1e-6) + 1e-12
    return FbcReport(float(lhs), float(rhs), bool(ok), slices, e)
