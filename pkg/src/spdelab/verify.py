"""Empirical ratio checkers for the inequalities in scope.

Every check reduces an inequality lhs <= C * rhs to a RatioReport: the
discretized lhs, the discretized rhs components, their ratio, and a
refinement trace.  Since only existence of the constants is asserted, a
check passes when the ratio is finite and stable under refinement; golden
values are frozen in the test suite, not here.
"""

from __future__ import annotations

import numpy as np

from .covariance import CovarianceKernel
from .errors import HypothesisViolationError
from .gaussian import QSpec
from .malliavin import ElementaryProcess, JointDesign, mixed_norm_terms
from .reports import RatioReport
from .solver import SPDEProblem, solve
from .spectral import GridSpec, symbol_cumulative_integrals, symbol_on_grid
from .symbols import SymbolSpec

_DU_CHUNK = 1 << 24   # float budget for the (n, P, P) derivative-norm arrays

_trapz = getattr(np, "trapezoid", None) or np.trapz


# ---------------------------------------------------------------------------
# maximal inequality


def maximal_inequality_check(u: ElementaryProcess, kernel: CovarianceKernel,
                             q: QSpec, p, q_exp, n_samples, seed,
                             sup_levels=(64, 128, 256), r_exp=None,
                             block=2048, name=None) -> RatioReport:
    """E sup_t ||int_0^t u dbeta||^p against the two mixed-norm rhs terms.

    The running integral is evaluated at the nodes of the canonical
    partition enriched with `level` uniform cells, where the partial
    Skorohod sums are exact.  Each refinement level reruns the Monte
    Carlo on the finer partition with the same seed.
    """
    r = float(kernel.r_exp) if r_exp is None else float(r_exp)
    if not (p >= q_exp >= max(2.0, r)):
        raise HypothesisViolationError(
            f"need p >= q >= max(2, r); got p={p}, q={q_exp}, r={r}")
    trace = []
    lhs = rhs1 = rhs2 = 0.0
    level_rows = []
    for lev in sup_levels:
        extra = np.linspace(0.0, u.T, int(lev) + 1)
        design = JointDesign(u, kernel, q, extra_times=extra)
        sup_acc = 0.0
        t1_acc = 0.0
        t2_acc = 0.0
        n_acc = 0
        for bi, lo in enumerate(range(0, int(n_samples), block)):
            nb = min(block, int(n_samples) - lo)
            delta = design.draw(nb, seed, block=bi)
            run = design.running_skorohod(delta)
            sup = np.max(np.sum(run ** 2, axis=2), axis=1) ** (p / 2.0)
            sup_acc += float(np.sum(sup))
            sub = max(1, _DU_CHUNK // (design.P * design.P))
            for lo2 in range(0, nb, sub):
                part = delta[lo2:lo2 + sub]
                t1, t2 = mixed_norm_terms(design, part, p, q_exp, r)
                t1_acc += t1 * part.shape[0]
                t2_acc += t2 * part.shape[0]
            n_acc += nb
        lhs = sup_acc / n_acc
        rhs1, rhs2 = t1_acc / n_acc, t2_acc / n_acc
        denom = rhs1 + rhs2
        ratio = lhs / denom if denom > 0 else (0.0 if lhs == 0 else np.inf)
        trace.append((float(lev), float(ratio)))
        level_rows.append({"level": int(lev), "lhs": lhs,
                           "rhs": [rhs1, rhs2], "ratio": float(ratio)})
    return RatioReport.make(
        name or f"maximal[{kernel.name}]", lhs, [rhs1, rhs2],
        refinement_trace=trace, seed=int(seed), n_samples=int(n_samples),
        details={"p": p, "q": q_exp, "r": r, "levels": level_rows})


# ---------------------------------------------------------------------------
# Littlewood-Paley


def _theta_grid(n_theta):
    """Midpoint grid and weight on the unit theta-interval."""
    pts = (np.arange(n_theta) + 0.5) / n_theta
    return pts, 1.0 / n_theta


def _sample_time_slices(f_fn, mids, X, theta):
    """Stack f(t_c, x, theta) -> (n_cells, n_theta, m, n_points)."""
    rows = []
    for t in mids:
        v = np.asarray(f_fn(t, X, theta), dtype=complex)
        if v.ndim == 1:
            v = v[None, None, :]
        elif v.ndim == 2:
            v = v[:, None, :]
        rows.append(v)
    return np.stack(rows)


def lp_inequality_check(phi: SymbolSpec, psi: SymbolSpec, f_fn, p, q_exp,
                        r_exp, levels=((32, 16), (64, 32), (128, 64)),
                        a=0.0, b=1.0, box=2 * np.pi, n_theta=1,
                        name=None) -> RatioReport:
    """Space-time ratio for the square-function inequality.

    lhs: int_x int_t [ int_a^t (t-s)^{q g_phi/g_psi - 1}
         (int ||L_phi T_psi(t,s) f(s,.,theta)(x)||^r dtheta)^{q/r} ds ]^{p/q}
    rhs: int_t [ int (int ||f||^p dx)^{r/p} dtheta ]^{p/r}.
    Midpoint rule in t and s (s strictly below t), counting measure with
    weight 1/n_theta in theta; n_theta = 1 collapses to the scalar form.
    """
    if not (q_exp >= max(2.0, r_exp)) or not (p >= q_exp):
        raise HypothesisViolationError(
            f"need p >= q >= max(2, r); got p={p}, q={q_exp}, r={r_exp}")
    wpow = q_exp * phi.gamma / psi.gamma - 1.0
    theta, w_th = _theta_grid(n_theta)
    trace = []
    lhs = rhs = 0.0
    for n, n_t in levels:
        grid = GridSpec(d=phi.d, n=int(n), L=box)
        edges = np.linspace(a, b, int(n_t) + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        dt = (b - a) / n_t
        X = grid.x_grid()
        fv = _sample_time_slices(f_fn, mids, X, theta)
        shape = fv.shape[:-1] + grid.shape
        axes = tuple(range(3, 3 + grid.d))
        f_hat = np.fft.fftn(fv.reshape(shape), axes=axes,
                            norm="ortho").reshape(fv.shape)
        phim = np.real(symbol_on_grid(phi, 0.0, grid))
        cums = symbol_cumulative_integrals(psi, mids, grid)
        lhs = 0.0
        for it in range(1, n_t):
            inner = np.zeros(grid.n_points)
            for isr in range(it):
                mult = phim * np.exp(cums[it] - cums[isr])
                lf = np.fft.ifftn((mult * f_hat[isr]).reshape(shape[1:]),
                                  axes=tuple(range(2, 2 + grid.d)),
                                  norm="ortho").reshape(f_hat[isr].shape)
                hn2 = np.sum(np.abs(lf) ** 2, axis=1)          # (th, n_pts)
                th_int = np.sum(w_th * hn2 ** (r_exp / 2.0),
                                axis=0) ** (q_exp / r_exp)
                inner += dt * (mids[it] - mids[isr]) ** wpow * th_int
            lhs += dt * float(np.sum(inner ** (p / q_exp))) * grid.cell_volume
        rhs = 0.0
        for ic in range(n_t):
            xn = np.sum(np.sum(np.abs(fv[ic]) ** 2, axis=1) ** (p / 2.0),
                        axis=-1) * grid.cell_volume                    # (th,)
            rhs += dt * float(np.sum(w_th * xn ** (r_exp / p))) ** (p / r_exp)
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
        trace.append((float(n), float(ratio)))
    return RatioReport.make(
        name or "littlewood-paley", lhs, [rhs], refinement_trace=trace,
        details={"p": p, "q": q_exp, "r": r_exp, "n_theta": n_theta,
                 "weight_power": wpow})


# ---------------------------------------------------------------------------
# Bessel equivalence


def bessel_equivalence_check(phi: SymbolSpec, alpha, p, fields) -> dict:
    """Empirical sandwich constants for the lifted norm.

    For each field, ratio = ||(1+L_phi)^{a/2} u||_p / (||u||_p +
    ||L_phi^{a/2} u||_p); reports the min (C1_hat) and max (C2_hat).
    """
    from .spectral import apply_multiplier, bessel_norm, lp_norm

    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    ratios = []
    for u in fields:
        base = np.real(symbol_on_grid(phi, 0.0, u.grid))
        num = bessel_norm(u, phi, alpha, p)
        mult = np.maximum(base, 0.0) ** (alpha / 2.0)
        den = lp_norm(u, p) + lp_norm(apply_multiplier(u, mult), p)
        ratios.append(num / den if den > 0 else np.nan)
    ratios = [float(r) for r in ratios]
    finite = [r for r in ratios if np.isfinite(r)]
    return {
        "name": f"bessel-equivalence[{phi.name},alpha={alpha}]",
        "alpha": float(alpha),
        "p": float(p),
        "ratios": ratios,
        "C1_hat": float(min(finite)) if finite else np.nan,
        "C2_hat": float(max(finite)) if finite else np.nan,
        "passed": bool(finite and len(finite) == len(ratios)),
    }


# ---------------------------------------------------------------------------
# the G operator


def g_operator_check(phi: SymbolSpec, psi: SymbolSpec, f_fns, p,
                     levels=((32, 16), (64, 32), (128, 64)),
                     a=0.0, b=1.0, box=2 * np.pi, name=None) -> RatioReport:
    """||G f||_p / ||f||_p with G f(t) = int_{-infty}^t L_phi T_psi(t,s) f(s) ds.

    Requires matching symbol orders.  The s-integral is exact per cell for
    piecewise-constant-in-time f (time-independent psi), which avoids the
    stiffness of naive quadrature on high modes.
    """
    if abs(phi.gamma - psi.gamma) > 1e-12:
        raise HypothesisViolationError("operator check needs gamma_phi == gamma_psi")
    if psi.time_dependent:
        raise ValueError("exact cell integration needs time-independent psi")
    if not isinstance(f_fns, (list, tuple)):
        f_fns = [f_fns]
    trace = []
    worst = (0.0, [1.0])
    for n, n_t in levels:
        grid = GridSpec(d=phi.d, n=int(n), L=box)
        edges = np.linspace(a, b, int(n_t) + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        dt = (b - a) / n_t
        X = grid.x_grid()
        phim = np.real(symbol_on_grid(phi, 0.0, grid)).astype(complex)
        psim = symbol_on_grid(psi, 0.0, grid)
        small = np.abs(psim) < 1e-14
        psim_safe = np.where(small, 1.0, psim)
        level_ratio = 0.0
        for f_fn in f_fns:
            fv = _sample_time_slices(f_fn, mids, X, np.array([0.5]))[:, 0]
            shape = (n_t,) + (fv.shape[1],) + grid.shape
            axes = tuple(range(2, 2 + grid.d))
            f_hat = np.fft.fftn(fv.reshape(shape), axes=axes,
                                norm="ortho").reshape(fv.shape)
            lhs_p = 0.0
            rhs_p = 0.0
            for it in range(n_t):
                t = mids[it]
                acc = np.zeros_like(f_hat[0])
                for ic in range(it + 1):
                    hi = min(edges[ic + 1], t)
                    lo = edges[ic]
                    # int_lo^hi phi e^{(t-s)psi} ds, exact in s
                    coef = np.where(
                        small,
                        phim * (hi - lo),
                        phim / psim_safe * (np.exp((t - hi) * psim)
                                            - np.exp((t - lo) * psim)))
                    acc += coef * f_hat[ic]
                gf = np.fft.ifftn(acc.reshape(shape[1:]),
                                  axes=tuple(range(1, 1 + grid.d)),
                                  norm="ortho").reshape(acc.shape)
                lhs_p += dt * float(np.sum(np.sum(np.abs(gf) ** 2, axis=0)
                                           ** (p / 2.0))) * grid.cell_volume
                rhs_p += dt * float(np.sum(np.sum(np.abs(fv[it]) ** 2, axis=0)
                                           ** (p / 2.0))) * grid.cell_volume
            lhs = lhs_p ** (1.0 / p)
            rhs = rhs_p ** (1.0 / p)
            r = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
            if r >= level_ratio:
                level_ratio = r
                worst = (lhs, [rhs])
        trace.append((float(n), float(level_ratio)))
    return RatioReport.make(name or "g-operator", worst[0], worst[1],
                            refinement_trace=trace,
                            details={"p": p, "n_functions": len(f_fns)})


# ---------------------------------------------------------------------------
# kernel envelope


def envelope_fields(phi: SymbolSpec, psi: SymbolSpec, tau, grid: GridSpec,
                    fd_frac=0.01):
    """(|L_phi p|, |grad L_phi p|, |d/ds L_phi p|, periodic |x|) on the grid."""
    from .spectral import symbol_time_integral

    def lphi_kernel(t, s):
        mult = np.real(symbol_on_grid(phi, 0.0, grid)).astype(complex) \
            * np.exp(symbol_time_integral(psi, t, s, grid))
        vals = np.fft.ifftn(mult.reshape(grid.shape)) * (grid.n / grid.L) ** grid.d
        return vals.reshape(-1), mult

    k_vals, mult = lphi_kernel(tau, 0.0)
    freq = grid.freq_grid()
    grads = np.stack([
        (np.fft.ifftn((1j * freq[:, ax] * mult).reshape(grid.shape))
         * (grid.n / grid.L) ** grid.d).reshape(-1)
        for ax in range(grid.d)])
    h = fd_frac * tau
    k_plus, _ = lphi_kernel(tau - h, 0.0)     # s -> s + h
    k_minus, _ = lphi_kernel(tau + h, 0.0)
    ds_vals = (k_plus - k_minus) / (2.0 * h)
    x = grid.x_grid()
    xper = np.minimum(x % grid.L, grid.L - (x % grid.L))
    xdist = np.sqrt(np.sum(xper ** 2, axis=1))
    return (np.abs(k_vals), np.sqrt(np.sum(np.abs(grads) ** 2, axis=0)),
            np.abs(ds_vals), xdist)


def kernel_envelope_check(phi: SymbolSpec, psi: SymbolSpec, t_minus_s,
                          grid: GridSpec, var_tol=0.2,
                          interior_frac=0.5) -> dict:
    """Fit the smallest constants in the three kernel envelope bounds.

    Each bound reads |field(x)| <= C min(|x|^-a, tau^{-a/gamma_psi}) with
    a = gamma_phi + d (kernel), + 1 (gradient), + gamma_psi (s-derivative).
    Reports C per tau and flags <= var_tol relative variation.  The fit runs
    on the interior |x| <= interior_frac * L; the box must be large enough
    that the kernel tail has decayed there, else periodic wrap-around
    contaminates the far field and the constants drift with tau.
    """
    d = grid.d
    exps = {
        "kernel": phi.gamma + d,
        "grad": phi.gamma + 1 + d,
        "ds": phi.gamma + psi.gamma + d,
    }
    consts = {k: [] for k in exps}
    sups = []
    for tau in t_minus_s:
        k_abs, g_abs, ds_abs, xdist = envelope_fields(phi, psi, float(tau), grid)
        keep = xdist <= interior_frac * grid.L
        fields = {"kernel": k_abs, "grad": g_abs, "ds": ds_abs}
        sups.append(float(np.max(k_abs)))
        for key, vals in fields.items():
            apow = exps[key]
            with np.errstate(divide="ignore"):
                env = np.minimum(
                    np.where(xdist[keep] > 0, xdist[keep] ** (-apow), np.inf),
                    float(tau) ** (-apow / psi.gamma))
            consts[key].append(float(np.max(vals[keep] / env)))
    stable = {}
    for key, cs in consts.items():
        lo, hi = min(cs), max(cs)
        stable[key] = bool(np.isfinite(hi) and lo > 0
                           and hi / lo - 1.0 <= var_tol)
    return {
        "name": f"kernel-envelope[{phi.name},{psi.name}]",
        "taus": [float(t) for t in t_minus_s],
        "C_kernel": consts["kernel"],
        "C_grad": consts["grad"],
        "C_ds": consts["ds"],
        "sup_kernel": sups,
        "exponents": exps,
        "stable": stable,
        "passed": bool(all(stable.values())),
        "var_tol": var_tol,
    }


# ---------------------------------------------------------------------------
# a-priori solution estimate


def _bessel_mult(phi, grid, alpha):
    base = np.real(symbol_on_grid(phi, 0.0, grid))
    return (1.0 + base) ** (alpha / 2.0)


def _lp_of_hat(values_hat, grid, p, comp_axes):
    """L^p norm from spectral values: ifft then Riemann; (... batch dims)."""
    lead = values_hat.shape[:-1]
    axes = tuple(range(len(lead), len(lead) + grid.d))
    vals = np.fft.ifftn(values_hat.reshape(lead + grid.shape), axes=axes,
                        norm="ortho").reshape(lead + (grid.n_points,))
    ptw = np.sqrt(np.sum(np.abs(vals) ** 2, axis=comp_axes))
    return (np.sum(ptw ** p, axis=-1) * grid.cell_volume) ** (1.0 / p)


def apriori_estimate_check(problem: SPDEProblem, n_samples, seed,
                           estimator="pathwise", name=None) -> RatioReport:
    """Solution-space norm of the computed ensemble against the data norms.

    lhs sums the four norm pieces of the solution space (u at order
    2 g_psi/g_phi, Du = L_psi u + f at order 0, Su = g at order
    2 g_psi/(q' g_phi), and the initial value); rhs holds the three data
    norms.  Deterministic f and g make the g-norm Malliavin term vanish.
    """
    if problem.phi is None:
        raise ValueError("a-priori check needs the Bessel-scale symbol phi")
    pb = problem
    grid, p, qe = pb.grid, pb.p, pb.q_exp
    qprime = qe / (qe - 1.0)
    s_ratio = 2.0 * pb.psi.gamma / pb.phi.gamma
    alpha_u = s_ratio
    alpha_g = 2.0 * pb.psi.gamma / (qprime * pb.phi.gamma)
    alpha_0 = s_ratio * (1.0 - 1.0 / p)

    ens = solve(pb, int(n_samples), seed, estimator=estimator)
    u_hat = np.fft.fftn(
        ens.samples.reshape(ens.samples.shape[:-1] + grid.shape),
        axes=tuple(range(3, 3 + grid.d)), norm="ortho",
    ).reshape(ens.samples.shape)

    # E int_0^T ||u||^p at order alpha_u (trapezoid in t, mean over draws)
    mu = _bessel_mult(pb.phi, grid, alpha_u)
    norms_u = _lp_of_hat(u_hat * mu, grid, p, comp_axes=2)       # (n, n_t)
    term_u = float(np.mean(_trapz(norms_u ** p, pb.times, axis=1))) ** (1.0 / p)

    # Du = L_psi u + f at order 0
    psim = symbol_on_grid(pb.psi, 0.0, grid) if not pb.psi.time_dependent else None
    if psim is None:
        du_hat = np.stack([symbol_on_grid(pb.psi, t, grid) for t in pb.times]
                          )[None, :, None, :] * u_hat
    else:
        du_hat = psim[None, None, None, :] * u_hat
    if pb.f is not None:
        f_hat = np.fft.fftn(pb.f.reshape(pb.f.shape[:-1] + grid.shape),
                            axes=tuple(range(2, 2 + grid.d)),
                            norm="ortho").reshape(pb.f.shape)
        du_hat = du_hat + f_hat[None]
    norms_du = _lp_of_hat(du_hat, grid, p, comp_axes=2)
    term_du = float(np.mean(_trapz(norms_du ** p, pb.times, axis=1))) ** (1.0 / p)

    # Su = g at order alpha_g; deterministic g => exact step-in-time integral
    if pb.g is not None:
        mg = _bessel_mult(pb.phi, grid, alpha_g)
        g_hat = np.fft.fftn(pb.g.reshape(pb.g.shape[:-1] + grid.shape),
                            axes=tuple(range(3, 3 + grid.d)),
                            norm="ortho").reshape(pb.g.shape)
        norms_g = _lp_of_hat(g_hat * mg, grid, p, comp_axes=(1, 2))  # (n_t-1,)
        term_g = float(np.sum(norms_g ** p * np.diff(pb.times))) ** (1.0 / p)
    else:
        term_g = 0.0

    u0_hat = np.fft.fftn(pb.u0.values.reshape((pb.m,) + grid.shape),
                         axes=tuple(range(1, 1 + grid.d)),
                         norm="ortho").reshape(pb.m, -1)
    m0 = _bessel_mult(pb.phi, grid, alpha_0)
    term_0 = float(_lp_of_hat((u0_hat * m0)[None], grid, p, comp_axes=1)[0])

    if pb.f is not None:
        norms_f = _lp_of_hat(f_hat[None], grid, p, comp_axes=2)[0]
        term_f = float(_trapz(norms_f ** p, pb.times)) ** (1.0 / p)
    else:
        term_f = 0.0

    lhs = term_u + term_du + term_g + term_0
    rhs = [term_0, term_f, term_g]
    return RatioReport.make(
        name or f"apriori[{pb.kernel.name}]", lhs, rhs,
        refinement_trace=[(float(grid.n), lhs / sum(rhs) if sum(rhs) else 0.0)],
        seed=int(seed), n_samples=int(n_samples),
        details={"term_u": term_u, "term_du": term_du, "term_g": term_g,
                 "term_u0": term_0, "term_f": term_f, "estimator": estimator,
                 "alpha_u": alpha_u, "alpha_g": alpha_g, "alpha_0": alpha_0})


def apriori_refinement(problem_builder, levels, n_samples, seed,
                       estimator="pathwise", name=None) -> RatioReport:
    """Run the a-priori check over (n, n_t) levels and combine the trace."""
    trace = []
    last = None
    for n, n_t in levels:
        rep = apriori_estimate_check(problem_builder(int(n), int(n_t)),
                                     n_samples, seed, estimator=estimator)
        trace.append((float(n), rep.ratio))
        last = rep
    return RatioReport.make(name or last.name, last.lhs, last.rhs_components,
                            refinement_trace=trace, seed=int(seed),
                            n_samples=int(n_samples), details=last.details)
