"""Independent oracles for the test suite.

Every golden value asserted by the tests is derived here through a route
different from the library's own (closed forms, generic scipy quadrature,
or brute-force simulation with a separate seed), so agreement is evidence
rather than tautology.
"""

import numpy as np
from scipy import integrate, special

# ---------------------------------------------------------------------------
# covariance kernels


def fbm_R(H, t, s):
    return 0.5 * (abs(t) ** (2 * H) + abs(s) ** (2 * H) - abs(t - s) ** (2 * H))


def fbm_rectangle_quad(H, t0, t1, s0, s1):
    """Rectangle mass of the fbm density by adaptive quadrature (slow)."""
    c = H * (2 * H - 1)

    def inner(t):
        v, _ = integrate.quad(lambda s: c * abs(t - s) ** (2 * H - 2), s0, s1,
                              points=[t] if s0 < t < s1 else None, limit=200)
        return v
    v, _ = integrate.quad(inner, t0, t1, limit=200)
    return v


def fbm_KR_indicator(H, t):
    """(K_R 1_{[0,1]})(t) = H (t^{2H-1} + (1-t)^{2H-1}) in closed form."""
    return H * (t ** (2 * H - 1) + (1 - t) ** (2 * H - 1))


def heat_density(delta, u):
    return np.exp(-u * u / (4 * delta)) / np.sqrt(4 * np.pi * delta)


def heat_R_quad(delta, t, s):
    v, _ = integrate.dblquad(lambda y, x: heat_density(delta, x - y),
                             0, t, 0, s, epsabs=1e-12, epsrel=1e-12)
    return v


def bessel_density_closed(delta, u):
    """(sqrt(pi) Gamma(d/2))^{-1} (|u|/2)^{(d-1)/2} K_{(1-d)/2}(|u|)."""
    u = abs(u)
    c = 1.0 / (np.sqrt(np.pi) * special.gamma(delta / 2.0))
    return c * (u / 2.0) ** ((delta - 1.0) / 2.0) * special.kv((1.0 - delta) / 2.0, u)


def bessel_mass_quad(delta):
    v, _ = integrate.quad(lambda u: bessel_density_closed(delta, u),
                          0, np.inf, limit=300)
    return 2.0 * v


def bessel_KR_indicator_quad(delta, t):
    """int_0^1 density(t - s) ds by adaptive quadrature (singular at s=t)."""
    pts = [t] if 0.0 < t < 1.0 else None
    v, _ = integrate.quad(lambda s: bessel_density_closed(delta, t - s),
                          0.0, 1.0, points=pts, limit=300)
    return v


# ---------------------------------------------------------------------------
# time integrals of symbols


def int_one_plus_sin_sq(t):
    """int_0^t (1 + sin^2 r) dr = 3t/2 - sin(2t)/4."""
    return 1.5 * t - 0.25 * np.sin(2.0 * t)


# ---------------------------------------------------------------------------
# mild-solution mode answers


def forced_mode(psi_k, fhat_k, t):
    """u_hat(t) = fhat (1 - e^{psi t}) / (-psi) for constant forcing, u0=0."""
    if abs(psi_k) < 1e-14:
        return fhat_k * t
    return fhat_k * (1.0 - np.exp(psi_k * t)) / (-psi_k)


def ito_mode_variance(psi_k, ghat_sq, t):
    """E|int_0^t e^{psi(t-s)} g dB_s|^2 = |g|^2 (1 - e^{2 psi t}) / (-2 psi)."""
    if abs(psi_k) < 1e-14:
        return ghat_sq * t
    return ghat_sq * (1.0 - np.exp(2.0 * psi_k * t)) / (-2.0 * psi_k)


# ---------------------------------------------------------------------------
# Gaussian moment constants (standard normal Z, derived by Isserlis)
#
# E Z^4 = 3, E Z^6 = 15, E Z^8 = 105
# X = Z^2 - 1:  E X = 0, E X^2 = 2,
# E X^4 = E Z^8 - 4 E Z^6 + 6 E Z^4 - 4 E Z^2 + 1 = 105 - 60 + 18 - 4 + 1 = 60
# => Var(X^2) = 60 - 4 = 56

VAR_CHI2_CENTERED = 2.0
VAR_OF_SQUARED_CHI2_CENTERED = 56.0


# ---------------------------------------------------------------------------
# brute-force simulations


def sup_brownian_sq(times, n_samples, seed):
    """(mean, se) of E max_i B_{t_i}^2 by direct random-walk simulation.

    Standard Brownian increments on exactly the given nodes; independent
    of the library's sampling machinery (plain default_rng stream).
    """
    times = np.asarray(times, float)
    dt = np.diff(times)
    gen = np.random.default_rng(seed)
    vals = np.empty(n_samples)
    block = max(1, int(2e7) // max(1, len(dt)))
    for lo in range(0, n_samples, block):
        nb = min(block, n_samples - lo)
        z = gen.standard_normal((nb, len(dt))) * np.sqrt(dt)[None, :]
        b = np.cumsum(z, axis=1)
        if abs(times[0]) < 1e-12:
            b = np.concatenate([np.zeros((nb, 1)), b], axis=1)
        vals[lo:lo + nb] = np.max(b * b, axis=1)
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / np.sqrt(n_samples))


def wiener_quadratic_variance(n_samples, seed):
    """(mean, se) of (Z^2-1)^2 for standard normal Z: MC cross-check of 2/56."""
    gen = np.random.default_rng(seed)
    z = gen.standard_normal(n_samples)
    x = (z * z - 1.0) ** 2
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(n_samples))
