"""Symbols and multiplier-condition checkers.

A symbol is a scalar function psi(t, xi) of time and frequency. Two
families matter:

* class M (order gamma): real, positive, time-independent symbols with
  kappa |xi|^gamma <= psi(xi) and |d^a psi(xi)| <= mu |xi|^{gamma-|a|};
  these generate the Bessel scales (1 + L_phi)^{alpha/2}.
* class S (order gamma): complex, possibly time-dependent symbols with
  Re psi(t, xi) <= -kappa |xi|^gamma and the same derivative control;
  these generate the evolution operator.

The checkers sample the defining conditions on dyadic frequency sets with
central finite differences and report the worst empirical constants. A
"passed" verdict is sampled evidence, not a proof: the constants kappa and
mu are declared by whoever builds the SymbolSpec and verified a
posteriori here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import SymbolClassError
from .reports import MultiplierReport

DEFAULT_DYADIC_LO = -8
DEFAULT_DYADIC_HI = 8
DEFAULT_CAP = 1e6
STABILITY_RATIO = 1.10
STABILITY_LAG = 4


@dataclass(frozen=True)
class SymbolSpec:
    """A symbol with its declared class metadata.

    eval maps (t, xi) -> complex values, where xi has shape (..., d) and
    the result has shape (...). gamma is the order; kappa and mu are the
    declared lower/upper constants; n_depth is the largest multi-index
    order the symbol claims to control. at_zero, when set, overrides the
    value used at xi = 0 on discrete grids (the limit rule).
    """

    eval: callable
    gamma: float
    kappa: float
    mu: float
    n_depth: int
    time_dependent: bool
    d: int
    name: str = "custom"
    params: dict = field(default_factory=dict)
    at_zero: complex | None = None

    def __post_init__(self):
        if not (self.gamma > 0 and self.kappa > 0 and self.mu > 0):
            raise ValueError("gamma, kappa, mu must be strictly positive")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.n_depth < self.d // 2 + 1:
            raise ValueError("n_depth must be at least floor(d/2)+1")

    def __call__(self, t, xi):
        return self.eval(t, np.asarray(xi, dtype=float))


def _radius(xi):
    return np.sqrt(np.sum(np.square(xi), axis=-1))


# ---------------------------------------------------------------------------
# builtin symbols


def power_symbol(gamma=2.0, d=1):
    """psi(xi) = |xi|^gamma, the canonical class-M symbol."""
    def ev(t, xi):
        return _radius(xi) ** gamma
    return SymbolSpec(eval=ev, gamma=gamma, kappa=1.0, mu=2.0 * gamma + 2.0,
                      n_depth=4, time_dependent=False, d=d,
                      name="power", params={"gamma": gamma})


def power_exp_symbol(a=1.0, b=1.0, gamma=2.0, d=1):
    """psi(xi) = |xi|^gamma (a + b exp(-|xi|^gamma)); class M with kappa=a."""
    def ev(t, xi):
        r = _radius(xi) ** gamma
        return r * (a + b * np.exp(-r))
    mu = 2.0 * (a + b) * (gamma + 1.0) ** 2
    return SymbolSpec(eval=ev, gamma=gamma, kappa=a, mu=mu,
                      n_depth=4, time_dependent=False, d=d,
                      name="power_exp", params={"a": a, "b": b, "gamma": gamma})


def heat_symbol(gamma=2.0, scale=1.0, d=1):
    """psi(t, xi) = -scale |xi|^gamma; time-independent class-S symbol."""
    def ev(t, xi):
        return -scale * _radius(xi) ** gamma + 0j
    return SymbolSpec(eval=ev, gamma=gamma, kappa=scale, mu=scale * (2.0 * gamma + 2.0),
                      n_depth=4, time_dependent=False, d=d,
                      name="heat", params={"gamma": gamma, "scale": scale})


def oscillating_heat_symbol(gamma=2.0, d=1):
    """psi(t, xi) = -(1 + sin^2 t) |xi|^gamma; time-dependent class S.

    The time factor stays in [1, 2], so kappa = 1 and the derivative
    constants are twice the heat case.
    """
    def ev(t, xi):
        return -(1.0 + np.sin(t) ** 2) * _radius(xi) ** gamma + 0j
    return SymbolSpec(eval=ev, gamma=gamma, kappa=1.0, mu=2.0 * (2.0 * gamma + 2.0),
                      n_depth=4, time_dependent=True, d=d,
                      name="heat_osc", params={"gamma": gamma})


def wrong_sign_symbol(gamma=2.0, d=1):
    """psi(t, xi) = +|xi|^gamma; deliberately violates the class-S sign."""
    def ev(t, xi):
        return _radius(xi) ** gamma + 0j
    return SymbolSpec(eval=ev, gamma=gamma, kappa=1.0, mu=2.0 * gamma + 2.0,
                      n_depth=4, time_dependent=False, d=d,
                      name="wrong_sign", params={"gamma": gamma})


def exp_symbol(d=1):
    """psi(xi) = exp(|xi|); positive but with unbounded derivative constants."""
    def ev(t, xi):
        with np.errstate(over="ignore"):
            return np.exp(_radius(xi))
    return SymbolSpec(eval=ev, gamma=1.0, kappa=1.0, mu=1.0,
                      n_depth=4, time_dependent=False, d=d, name="exp")


def constant_symbol(c=1.0, d=1):
    def ev(t, xi):
        return np.full(np.shape(xi)[:-1], c, dtype=complex)
    return SymbolSpec(eval=ev, gamma=1.0, kappa=1e-12 if c == 0 else abs(c), mu=max(abs(c), 1e-12),
                      n_depth=4, time_dependent=False, d=d,
                      name="constant", params={"c": c}, at_zero=c)


def m1_symbol(phi: SymbolSpec, s: float):
    """m1(xi) = (1 + phi(xi))^{-s} for a class-M symbol phi and s >= 0."""
    def ev(t, xi):
        return (1.0 + np.real(phi.eval(0.0, xi))) ** (-s)
    return SymbolSpec(eval=ev, gamma=phi.gamma, kappa=phi.kappa, mu=phi.mu,
                      n_depth=phi.n_depth, time_dependent=False, d=phi.d,
                      name="m1", params={"s": s, "phi": phi.name}, at_zero=1.0)


def m2_symbol(phi: SymbolSpec, psi: SymbolSpec, t_exp: float, s_exp: float):
    """m2(xi) = phi(xi)^t / (1 + psi(xi))^s with s >= t >= 0."""
    def ev(t, xi):
        num = np.real(phi.eval(0.0, xi)) ** t_exp
        return num / (1.0 + np.real(psi.eval(0.0, xi))) ** s_exp
    at0 = 1.0 if t_exp == 0 else 0.0
    return SymbolSpec(eval=ev, gamma=phi.gamma, kappa=phi.kappa, mu=phi.mu,
                      n_depth=phi.n_depth, time_dependent=False, d=phi.d,
                      name="m2", params={"t": t_exp, "s": s_exp}, at_zero=at0)


def m3_symbol(phi: SymbolSpec, psi: SymbolSpec, t_exp: float, s_exp: float):
    """m3(xi) = (1 + phi(xi))^t / (1 + psi(xi)^s) with s >= t >= 0."""
    def ev(t, xi):
        num = (1.0 + np.real(phi.eval(0.0, xi))) ** t_exp
        return num / (1.0 + np.real(psi.eval(0.0, xi)) ** s_exp)
    at0 = 1.0 if s_exp > 0 else 0.5
    return SymbolSpec(eval=ev, gamma=phi.gamma, kappa=phi.kappa, mu=phi.mu,
                      n_depth=phi.n_depth, time_dependent=False, d=phi.d,
                      name="m3", params={"t": t_exp, "s": s_exp}, at_zero=at0)


def product_power_symbol(a_exps, d=None):
    """m(xi) = |xi_1|^{a_1} ... |xi_d|^{a_d} / |xi|^{a_1+...+a_d}.

    Scale-invariant and smooth away from the coordinate hyperplanes; the
    classical example of a multiplier that satisfies the rectangle
    condition but not the radial one.
    """
    a_exps = tuple(float(a) for a in a_exps)
    d = len(a_exps) if d is None else d
    total = sum(a_exps)

    def ev(t, xi):
        num = np.ones(np.shape(xi)[:-1])
        for i, a in enumerate(a_exps):
            num = num * np.abs(xi[..., i]) ** a
        return num / _radius(xi) ** total
    return SymbolSpec(eval=ev, gamma=1.0, kappa=1.0, mu=4.0,
                      n_depth=4, time_dependent=False, d=d,
                      name="product_power", params={"a": list(a_exps)}, at_zero=0.0)


def log_symbol(d=1):
    """m(xi) = log(1 + |xi|), unbounded (fails every multiplier condition)."""
    def ev(t, xi):
        return np.log1p(_radius(xi))
    return SymbolSpec(eval=ev, gamma=1.0, kappa=1.0, mu=1.0,
                      n_depth=4, time_dependent=False, d=d, name="log1p", at_zero=0.0)


def coordinate_symbol(i=0, d=2):
    """m(xi) = xi_i, unbounded."""
    def ev(t, xi):
        return xi[..., i] + 0.0
    return SymbolSpec(eval=ev, gamma=1.0, kappa=1.0, mu=1.0,
                      n_depth=4, time_dependent=False, d=d,
                      name="coordinate", params={"i": i}, at_zero=0.0)


_BUILTIN_SYMBOLS = {
    "power": power_symbol,
    "power_exp": power_exp_symbol,
    "heat": heat_symbol,
    "heat_osc": oscillating_heat_symbol,
    "wrong_sign": wrong_sign_symbol,
    "exp": exp_symbol,
    "constant": constant_symbol,
    "log1p": log_symbol,
    "coordinate": coordinate_symbol,
    "product_power": product_power_symbol,
}


def builtin_symbol(name, **params):
    """Construct a builtin symbol by name; used by the config layer."""
    try:
        ctor = _BUILTIN_SYMBOLS[name]
    except KeyError:
        raise KeyError(f"unknown symbol {name!r}; have {sorted(_BUILTIN_SYMBOLS)}")
    return ctor(**params)


# ---------------------------------------------------------------------------
# sampling and finite differences


def dyadic_directions(d):
    """Fixed unit directions bounded away from the coordinate hyperplanes."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = np.pi / 8.0 + np.arange(8) * np.pi / 4.0
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    if d == 3:
        az = np.pi / 8.0 + np.arange(4) * np.pi / 2.0
        polar = np.array([np.pi / 3.0, np.pi / 2.0 + 0.3, 2.2])
        dirs = []
        for p in polar:
            for a in az:
                dirs.append([np.sin(p) * np.cos(a), np.sin(p) * np.sin(a), np.cos(p)])
        return np.asarray(dirs)
    raise NotImplementedError("dyadic sampling implemented for d <= 3")


def dyadic_samples(d, lo=DEFAULT_DYADIC_LO, hi=DEFAULT_DYADIC_HI):
    """Return (radii, points) with points of shape (n_levels, n_dirs, d).

    Radii are 2^lo ... 2^hi; directions avoid xi = 0 and the coordinate
    hyperplanes, where the symbols may be non-smooth or undefined.
    """
    radii = 2.0 ** np.arange(lo, hi + 1, dtype=float)
    dirs = dyadic_directions(d)
    return radii, radii[:, None, None] * dirs[None, :, :]


_STENCILS = {
    0: ((0.0, 1.0),),
    1: ((-1.0, -0.5), (1.0, 0.5)),
    2: ((-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)),
}


def fd_partial(fun, xi, alpha, rel_step=1e-4):
    """Central finite-difference mixed partial d^alpha fun at points xi.

    xi has shape (N, d); alpha is a per-axis order tuple with entries in
    {0, 1, 2}. The step is rel_step * |xi| per coordinate, which keeps
    homogeneous quantities scale free.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    d = xi.shape[-1]
    if len(alpha) != d:
        raise ValueError("alpha length must match dimension")
    if any(a not in _STENCILS for a in alpha):
        raise ValueError("per-axis derivative order must be 0, 1 or 2")
    h = rel_step * _radius(xi)[..., None]
    acc = None
    for combo in itertools.product(*(_STENCILS[a] for a in alpha)):
        offsets = np.array([c[0] for c in combo])
        weight = np.prod([c[1] for c in combo])
        vals = fun(xi + offsets * h)
        acc = weight * vals if acc is None else acc + weight * vals
    order = sum(alpha)
    return acc / h[..., 0] ** order if order else acc


def _multi_indices(d, max_total, max_per_axis=2, include_zero=True):
    out = []
    for alpha in itertools.product(range(max_per_axis + 1), repeat=d):
        if sum(alpha) <= max_total and (include_zero or sum(alpha) > 0):
            out.append(alpha)
    return sorted(out, key=sum)


def _cumulative_stable(per_level_sup, ratio=STABILITY_RATIO, lag=STABILITY_LAG,
                       floor=1e-9):
    """True when the running sup over dyadic levels has stopped growing."""
    cum = np.maximum.accumulate(per_level_sup)
    if not np.isfinite(cum[-1]):
        return False
    if len(cum) <= lag:
        return True
    return cum[-1] <= max(cum[-1 - lag] * ratio, floor)


# ---------------------------------------------------------------------------
# checkers


def check_class_M(sym: SymbolSpec, xi_samples=None, max_order=None, tol=0.05,
                  cap=DEFAULT_CAP):
    """Scan the class-M conditions on dyadic samples.

    Estimates inf psi(xi)/|xi|^gamma and sup |d^a psi(xi)| |xi|^{|a|-gamma}
    over the sample set, |a| up to max_order (default: the Mihlin depth
    floor(d/2)+1). Passed iff the inf witnesses kappa (within tol) and the
    sup witnesses mu (within tol). A non-positive or non-real value raises
    SymbolClassError since every downstream use assumes positivity.
    """
    if sym.time_dependent:
        raise SymbolClassError("class-M symbols must be time-independent")
    if xi_samples is None:
        _, pts = dyadic_samples(sym.d)
        xi_samples = pts.reshape(-1, sym.d)
    xi_samples = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    if np.any(np.all(xi_samples == 0.0, axis=-1)):
        raise ValueError("xi samples must exclude 0")
    max_order = min(sym.n_depth, sym.d // 2 + 1) if max_order is None else max_order

    def f(pts):
        return sym.eval(0.0, pts)

    vals = np.asarray(f(xi_samples))
    if np.any(np.abs(np.imag(vals)) > 1e-10 * (1.0 + np.abs(vals))):
        raise SymbolClassError("class-M symbol must be real")
    vals = np.real(vals)
    if np.any(vals <= 0.0):
        bad = xi_samples[int(np.argmin(vals))]
        raise SymbolClassError(f"class-M symbol non-positive at xi={bad.tolist()}")

    r = _radius(xi_samples)
    lower = vals / r ** sym.gamma
    inf_ratio = float(np.min(lower))

    worst = -np.inf
    worst_loc = ((0,) * sym.d, xi_samples[0])
    with np.errstate(over="ignore", invalid="ignore"):
        for alpha in _multi_indices(sym.d, max_order):
            der = np.abs(fd_partial(f, xi_samples, alpha))
            scaled = der * r ** (sum(alpha) - sym.gamma)
            idx = int(np.nanargmax(scaled))
            if scaled[idx] > worst:
                worst, worst_loc = float(scaled[idx]), (alpha, xi_samples[idx])

    passed = (np.isfinite(worst) and worst <= sym.mu * (1.0 + tol) and worst <= cap
              and inf_ratio >= sym.kappa * (1.0 - tol))
    return MultiplierReport(
        condition_name="class_M", worst_constant=worst,
        worst_location=(worst_loc[0], worst_loc[1].tolist()),
        passed=bool(passed), samples_used=len(xi_samples),
        details={"inf_ratio": inf_ratio, "kappa": sym.kappa, "mu": sym.mu,
                 "max_order": max_order})


def check_class_S(sym: SymbolSpec, t_samples=None, xi_samples=None, tol=0.05,
                  cap=DEFAULT_CAP):
    """Scan the class-S conditions pointwise on a (t, xi) sample grid.

    Condition 1: Re psi(t, xi) <= -kappa |xi|^gamma. Condition 2: the
    same derivative control as class M, uniformly in t. A violated sign
    marks the report failed with the offending sample as worst_location.
    """
    if t_samples is None:
        t_samples = np.linspace(0.0, 1.5, 7) if sym.time_dependent else np.array([0.0])
    t_samples = np.atleast_1d(np.asarray(t_samples, dtype=float))
    if xi_samples is None:
        _, pts = dyadic_samples(sym.d)
        xi_samples = pts.reshape(-1, sym.d)
    xi_samples = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    max_order = min(sym.n_depth, sym.d // 2 + 1)

    r = _radius(xi_samples)
    worst_s1 = -np.inf
    s1_loc = (float(t_samples[0]), xi_samples[0])
    worst_der = -np.inf
    der_loc = ((0,) * sym.d, xi_samples[0])
    with np.errstate(over="ignore", invalid="ignore"):
        for t in t_samples:
            vals = np.asarray(sym.eval(t, xi_samples))
            margin = np.real(vals) / r ** sym.gamma
            i = int(np.argmax(margin))
            if margin[i] > worst_s1:
                worst_s1, s1_loc = float(margin[i]), (float(t), xi_samples[i])
            for alpha in _multi_indices(sym.d, max_order):
                der = np.abs(fd_partial(lambda p: sym.eval(t, p), xi_samples, alpha))
                scaled = der * r ** (sum(alpha) - sym.gamma)
                j = int(np.nanargmax(scaled))
                if scaled[j] > worst_der:
                    worst_der, der_loc = float(scaled[j]), (alpha, xi_samples[j])

    s1_ok = worst_s1 <= -sym.kappa * (1.0 - tol)
    s2_ok = np.isfinite(worst_der) and worst_der <= sym.mu * (1.0 + tol) and worst_der <= cap
    return MultiplierReport(
        condition_name="class_S", worst_constant=worst_der,
        worst_location=(der_loc[0], der_loc[1].tolist()),
        passed=bool(s1_ok and s2_ok),
        samples_used=len(xi_samples) * len(t_samples),
        details={"worst_re_ratio": worst_s1, "s1_location": (s1_loc[0], s1_loc[1].tolist()),
                 "s1_ok": bool(s1_ok), "s2_ok": bool(s2_ok),
                 "kappa": sym.kappa, "mu": sym.mu})


def check_mihlin(m: SymbolSpec, xi_samples=None, cap=DEFAULT_CAP,
                 lo=DEFAULT_DYADIC_LO, hi=DEFAULT_DYADIC_HI):
    """Mihlin-condition scan: sup |d^a m(xi)| |xi|^{|a|} for |a| <= floor(d/2)+1.

    Passed iff the constant is finite, below cap, and the running sup over
    increasing dyadic levels has stabilized (growth over the last four
    levels below 10%). Unbounded symbols like xi_1 or log(1+|xi|) keep
    growing level over level and fail.
    """
    if xi_samples is None:
        radii, pts = dyadic_samples(m.d, lo, hi)
    else:
        pts = np.atleast_2d(np.asarray(xi_samples, float)).reshape(-1, 1, m.d)
        radii = _radius(pts[:, 0, :])
        order = np.argsort(radii)
        radii, pts = radii[order], pts[order]
    n_lev, n_dir, d = pts.shape
    depth = m.d // 2 + 1

    def f(p):
        return m.eval(0.0, p)

    flat = pts.reshape(-1, d)
    r = _radius(flat)
    worst = -np.inf
    worst_loc = ((0,) * d, flat[0])
    per_level = np.zeros(n_lev)
    with np.errstate(over="ignore", invalid="ignore"):
        for alpha in _multi_indices(d, depth):
            scaled = np.abs(fd_partial(f, flat, alpha)) * r ** sum(alpha)
            scaled = np.nan_to_num(scaled, nan=np.inf).reshape(n_lev, n_dir)
            lev_sup = scaled.max(axis=1)
            per_level = np.maximum(per_level, lev_sup)
            i = int(np.argmax(scaled))
            if scaled.flat[i] > worst:
                worst = float(scaled.flat[i])
                worst_loc = (alpha, flat[i])

    stable = _cumulative_stable(per_level)
    passed = bool(np.isfinite(worst) and worst <= cap and stable)
    return MultiplierReport(
        condition_name="mihlin", worst_constant=worst,
        worst_location=(worst_loc[0], worst_loc[1].tolist()),
        passed=passed, samples_used=flat.shape[0],
        details={"stable": bool(stable), "depth": depth,
                 "per_level_sup": per_level.tolist()})


def check_hormander(m: SymbolSpec, lo=DEFAULT_DYADIC_LO, hi=DEFAULT_DYADIC_HI,
                    nodes=24, cap=DEFAULT_CAP):
    """Hormander-condition scan over dyadic annuli (d = 1 or 2).

    Computes sup_R R^{-d+2|a|} int_{R<|xi|<2R} |d^a m|^2 dxi by quadrature
    and applies the same finiteness-plus-stability verdict as the Mihlin
    checker.
    """
    if m.d > 2:
        raise NotImplementedError("annulus quadrature implemented for d <= 2")
    radii = 2.0 ** np.arange(lo, hi + 1, dtype=float)
    gl_x, gl_w = np.polynomial.legendre.leggauss(nodes)
    depth = m.d // 2 + 1

    def f(p):
        return m.eval(0.0, p)

    worst = -np.inf
    worst_loc = ((0,) * m.d, np.zeros(m.d))
    per_level = np.zeros(len(radii))
    with np.errstate(over="ignore", invalid="ignore"):
        for li, R in enumerate(radii):
            rr = R * (1.5 + 0.5 * gl_x)
            wr = 0.5 * R * gl_w
            if m.d == 1:
                pts = np.concatenate([rr, -rr])[:, None]
                wts = np.concatenate([wr, wr])
            else:
                ang = np.pi / nodes + np.arange(nodes) * 2.0 * np.pi / nodes
                ca, sa = np.cos(ang), np.sin(ang)
                pts = np.stack([np.outer(rr, ca), np.outer(rr, sa)], -1).reshape(-1, 2)
                wts = np.outer(wr * rr, np.full(nodes, 2.0 * np.pi / nodes)).ravel()
            for alpha in _multi_indices(m.d, depth):
                der2 = np.abs(fd_partial(f, pts, alpha)) ** 2
                integ = float(np.sum(np.nan_to_num(der2, nan=np.inf) * wts))
                val = R ** (-m.d + 2 * sum(alpha)) * integ
                per_level[li] = max(per_level[li], val)
                if val > worst:
                    worst, worst_loc = val, (alpha, pts[int(np.argmax(der2))])

    stable = _cumulative_stable(per_level)
    passed = bool(np.isfinite(worst) and worst <= cap and stable)
    return MultiplierReport(
        condition_name="hormander", worst_constant=worst,
        worst_location=(worst_loc[0], np.asarray(worst_loc[1]).tolist()),
        passed=passed, samples_used=len(radii) * (2 * nodes if m.d == 1 else nodes * nodes),
        details={"stable": bool(stable), "per_level_sup": per_level.tolist()})


def check_marcinkiewicz(m: SymbolSpec, rectangle_budget=4096,
                        lo=DEFAULT_DYADIC_LO, hi=DEFAULT_DYADIC_HI,
                        nodes_per_axis=12, cap=DEFAULT_CAP):
    """Rectangle-condition scan.

    For every nonempty coordinate subset S, integrates the mixed first
    partial |d_S m| over dyadic rectangles in the S coordinates (all sign
    patterns), with the remaining coordinates frozen at dyadic values, and
    takes the sup. Boundedness of m itself is scanned as well. The
    verdict combines finiteness, the cap, and running-sup stability over
    dyadic levels.
    """
    d = m.d
    levels = np.arange(lo, hi, dtype=int)  # rectangle (2^k, 2^{k+1}]
    gl_x, gl_w = np.polynomial.legendre.leggauss(nodes_per_axis)

    def f(p):
        return m.eval(0.0, p)

    # boundedness scan on dyadic points
    radii, pts = dyadic_samples(d, lo, hi)
    flat = pts.reshape(-1, d)
    with np.errstate(over="ignore", invalid="ignore"):
        mvals = np.abs(np.asarray(f(flat)))
    sup_per_level = np.nan_to_num(mvals, nan=np.inf).reshape(len(radii), -1).max(axis=1)
    worst = float(np.max(sup_per_level))
    worst_loc = ((0,) * d, flat[int(np.argmax(mvals))])
    level_tracks = [sup_per_level]

    subsets = [s for k in range(1, d + 1) for s in itertools.combinations(range(d), k)]
    fixed_vals = np.concatenate([2.0 ** np.arange(lo, hi + 1, 4, dtype=float),
                                 -(2.0 ** np.arange(lo, hi + 1, 4, dtype=float))])
    with np.errstate(over="ignore", invalid="ignore"):
        for S in subsets:
            alpha = tuple(1 if i in S else 0 for i in range(d))
            free = [i for i in range(d) if i not in S]
            combos = list(itertools.product(levels, repeat=len(S)))
            if len(combos) * max(1, len(fixed_vals) ** len(free)) > rectangle_budget:
                stride = max(1, (len(combos) * max(1, len(fixed_vals) ** len(free)))
                             // rectangle_budget)
                combos = combos[::stride]
            track = np.zeros(len(levels))
            for ks in combos:
                # tensor quadrature nodes on the rectangle, every sign pattern
                axes_nodes, axes_wts = [], []
                for k in ks:
                    a, b = 2.0 ** k, 2.0 ** (k + 1)
                    axes_nodes.append(0.5 * (b + a) + 0.5 * (b - a) * gl_x)
                    axes_wts.append(0.5 * (b - a) * gl_w)
                mesh = np.meshgrid(*axes_nodes, indexing="ij")
                wmesh = np.meshgrid(*axes_wts, indexing="ij")
                base = np.stack([g.ravel() for g in mesh], -1)
                wts = np.prod(np.stack([w.ravel() for w in wmesh], -1), axis=-1)
                fixed_choices = (itertools.product(fixed_vals, repeat=len(free))
                                 if free else [()])
                for fixed in fixed_choices:
                    for signs in itertools.product((1.0, -1.0), repeat=len(S)):
                        p = np.zeros((base.shape[0], d))
                        for col, i in enumerate(S):
                            p[:, i] = signs[col] * base[:, col]
                        for col, i in enumerate(free):
                            p[:, i] = fixed[col]
                        der = np.abs(fd_partial(f, p, alpha))
                        integ = float(np.sum(np.nan_to_num(der, nan=np.inf) * wts))
                        li = int(max(ks) - lo)
                        track[li] = max(track[li], integ)
                        if integ > worst:
                            worst, worst_loc = integ, (alpha, p[0])
            level_tracks.append(track)

    stable = all(_cumulative_stable(t) for t in level_tracks)
    passed = bool(np.isfinite(worst) and worst <= cap and stable)
    return MultiplierReport(
        condition_name="marcinkiewicz", worst_constant=worst,
        worst_location=(worst_loc[0], np.asarray(worst_loc[1]).tolist()),
        passed=passed, samples_used=int(sum(len(t) for t in level_tracks)),
        details={"stable": bool(stable),
                 "per_level_sup": [t.tolist() for t in level_tracks]})


def empirical_multiplier_norm(m: SymbolSpec, p, trials, grid, seed):
    """Max over random band-limited test functions of the L^p ratio
    ||inverse_transform(m * transform(f))||_p / ||f||_p on the grid.

    Deterministic given the seed. Functions with negligible norm are
    resampled.
    """
    from . import rng as _rng
    from .spectral import Field, apply_multiplier, lp_norm, symbol_on_grid

    if p <= 1:
        raise ValueError("p must exceed 1")
    gen = _rng.substream(seed, _rng.MULT_NORM)
    mult = symbol_on_grid(m, 0.0, grid)
    n, d = grid.n, grid.d
    shape = (n,) * d
    keep = np.abs(np.fft.fftfreq(n, 1.0 / n)) <= n // 4
    mask = keep
    for _ in range(d - 1):
        mask = np.multiply.outer(mask, keep)
    best = 0.0
    done = 0
    while done < trials:
        raw = gen.standard_normal(shape)
        fv = np.fft.ifftn(np.fft.fftn(raw) * mask).real.reshape(1, -1)
        f = Field(grid, 1, fv.astype(complex))
        denom = lp_norm(f, p)
        if denom < 1e-12:
            continue
        num = lp_norm(apply_multiplier(f, mult), p)
        best = max(best, num / denom)
        done += 1
    return float(best)
