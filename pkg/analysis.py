"""
Analytic Bound Toolkit

Closed forms for the Osgood modulus mu(s) = -s ln s on (0, e^{-2}], the
Osgood bound, the Gronwall exponential-moment bound with its constant K,
the recursive propagation-of-chaos speed, and the log-log regression used
to read rates off experiments.

Author: meanjump Team
Purpose: Pure functions; every bound used by reports lives here
"""

import math

import numpy as np
from scipy import integrate, stats

from exceptions import ConfigError, MeasureDomainError

OSGOOD_CAP = math.exp(-2.0)


def osgood_modulus(s):
    """mu(s) = -s ln s."""
    return -s * math.log(s)


def _check_osgood_domain(x):
    if not 0.0 < x <= OSGOOD_CAP:
        raise MeasureDomainError(f"Osgood argument must lie in (0, e^-2], got {x!r}")


def osgood_m(x):
    """
    M(x) = int_x^{e^-2} ds / (-s ln s) = ln(-ln x) - ln 2.

    Raises:
        MeasureDomainError: if x is outside (0, e^-2]
    """
    _check_osgood_domain(x)
    return math.log(-math.log(x)) - math.log(2.0)


def osgood_m_of_log(log_x):
    """M as a function of ln x, for ln x <= -2; stays exact where x underflows."""
    if not log_x <= -2.0:
        raise MeasureDomainError(f"ln x must be <= -2, got {log_x!r}")
    return math.log(-log_x) - math.log(2.0)


def osgood_log_m_inverse(y):
    """ln M^{-1}(y) = -2 e^y for y >= 0."""
    if y < 0:
        raise MeasureDomainError(f"M^-1 is defined on [0, inf), got {y!r}")
    return -2.0 * math.exp(y)


def osgood_m_inverse(y):
    """M^{-1}(y) = exp(-2 e^y) for y >= 0; underflows to 0 past y ~ 5.9."""
    return math.exp(osgood_log_m_inverse(y))


def osgood_bound(c, gamma_integral):
    """
    Osgood bound rho(t) <= M^{-1}(M(c) - int gamma).

    Returns e^-2 (the vacuous domain cap) once M(c) - int gamma <= 0.
    """
    _check_osgood_domain(c)
    if gamma_integral < 0:
        raise MeasureDomainError(f"gamma_integral must be >= 0, got {gamma_integral!r}")
    y = osgood_m(c) - gamma_integral
    if y <= 0:
        return OSGOOD_CAP
    return osgood_m_inverse(y)


def osgood_m_quadrature(x, modulus=osgood_modulus, upper=OSGOOD_CAP):
    """
    Generic M(x) = int_x^upper ds / modulus(s) by adaptive quadrature.

    The integral is taken in the variable log s, where the integrand is
    smooth over many decades.
    """
    if not 0.0 < x <= upper:
        raise MeasureDomainError(f"Quadrature argument must lie in (0, {upper}], got {x!r}")
    value, _ = integrate.quad(lambda r: math.exp(r) / modulus(math.exp(r)),
                              math.log(x), math.log(upper), epsabs=1e-13, epsrel=1e-12, limit=200)
    return value


def osgood_bound_quadrature(c, gamma_integral, modulus=osgood_modulus, upper=OSGOOD_CAP):
    """
    Osgood bound for an arbitrary modulus: the largest rho in (0, upper] with
    M(rho) >= M(c) - gamma_integral, found by bisection on log rho.
    """
    target = osgood_m_quadrature(c, modulus, upper) - gamma_integral
    if target <= 0:
        return upper
    # M is decreasing and M(c) >= target, so the answer lies in [c, upper]
    lo, hi = math.log(c), math.log(upper)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if osgood_m_quadrature(math.exp(mid), modulus, upper) >= target:
            lo = mid
        else:
            hi = mid
    return math.exp(lo)


def gronwall_constant(spec, collective=False):
    """
    K = a ||b|| + a^2 ||sigma||^2 / 2 + ||f|| sup int e^{a|Phi|} drho.

    With collective=True the particle-system term ||f|| sup int e^{a|Theta|} dnu
    is added.

    Raises:
        ConfigError: if a bound the constant needs is not declared
    """
    bounds = spec.bounds
    a = spec.exp_exponent
    needed = {'drift': bounds.drift, 'diffusion': bounds.diffusion, 'rate': bounds.rate,
              'phi_exp': bounds.phi_exp}
    if collective:
        needed['theta_exp'] = bounds.theta_exp
    missing = sorted(key for key, value in needed.items() if value is None)
    if missing:
        raise ConfigError(f"Model {spec.name!r} does not declare: {', '.join(missing)}")
    k = a * bounds.drift + 0.5 * a * a * bounds.diffusion ** 2 + bounds.rate * bounds.phi_exp
    if collective:
        k += bounds.rate * bounds.theta_exp
    return k


def gronwall_exp_moment_bound(spec, e_exp_x0, t, collective=False):
    """
    sup_{s<=t} E e^{a|X_s|} <= E e^{a|X_0|} e^{K t}.

    Raises:
        ConfigError: missing bounds
        MeasureDomainError: e_exp_x0 < 1 or t < 0
    """
    if e_exp_x0 < 1.0:
        raise MeasureDomainError(f"E e^(a|X0|) is at least 1, got {e_exp_x0!r}")
    if t < 0:
        raise MeasureDomainError(f"Time must be >= 0, got {t!r}")
    return e_exp_x0 * math.exp(gronwall_constant(spec, collective) * t)


def chaos_rate_bound(s0, n_particles, c1, c2, k):
    """
    Recursive chaos speed: S_0 = s0, S_j = c1 (S_{j-1} + N^{-1/2})^{c2}.

    Returns:
        S_k

    Raises:
        MeasureDomainError: k < 0, N < 1, c1 <= 0 or c2 outside (0, 1]
    """
    if k < 0:
        raise MeasureDomainError(f"k must be >= 0, got {k}")
    if n_particles < 1:
        raise MeasureDomainError(f"N must be >= 1, got {n_particles}")
    if c1 <= 0:
        raise MeasureDomainError(f"c1 must be > 0, got {c1}")
    if not 0.0 < c2 <= 1.0:
        raise MeasureDomainError(f"c2 must lie in (0, 1], got {c2}")
    value = float(s0)
    step = n_particles ** -0.5
    for _ in range(int(k)):
        value = c1 * (value + step) ** c2
    return value


def fit_power_law(xs, ys):
    """
    Least squares on (ln x, ln y).

    Returns:
        (slope, intercept, r2); r2 is 1 for an exact fit, including the
        degenerate constant case

    Raises:
        MeasureDomainError: fewer than 3 points or non-positive values
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3 or xs.size != ys.size:
        raise MeasureDomainError("fit_power_law needs at least 3 (x, y) pairs")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise MeasureDomainError("fit_power_law needs positive values")
    log_x, log_y = np.log(xs), np.log(ys)
    fit = stats.linregress(log_x, log_y)
    residual = log_y - (fit.intercept + fit.slope * log_x)
    total = np.sum((log_y - log_y.mean()) ** 2)
    r2 = 1.0 if total == 0 else 1.0 - float(np.sum(residual ** 2)) / float(total)
    return float(fit.slope), float(fit.intercept), r2


def fit_chaos_constants(window_errors, ns):
    """
    Fit C1, C2 of S_k = C1 (S_{k-1} + N^{-1/2})^{C2} on windows 1-2 and
    predict window 3.

    Args:
        window_errors: array (len(ns), >= 3) of cumulative errors after
            windows 1, 2, 3, ... (window 0 error S_0 = 0)
        ns: particle counts

    Returns:
        dict with c1, c2, predicted and observed window-3 errors and the
        worst prediction factor max(pred/obs, obs/pred)
    """
    errors = np.asarray(window_errors, dtype=float)
    ns = np.asarray(ns, dtype=float)
    if errors.ndim != 2 or errors.shape[1] < 3:
        raise MeasureDomainError("Need errors for at least three windows")
    step = ns ** -0.5
    previous = np.column_stack([np.zeros(len(ns)), errors[:, 0]])
    predictors = np.log(previous + step[:, None]).ravel()
    responses = np.log(np.maximum(errors[:, :2], 1e-300)).ravel()
    fit = stats.linregress(predictors, responses)
    c1, c2 = float(math.exp(fit.intercept)), float(fit.slope)
    predicted = c1 * (errors[:, 1] + step) ** c2
    observed = errors[:, 2]
    with np.errstate(divide='ignore'):
        factors = np.maximum(predicted / observed, observed / predicted)
    return {
        'c1': c1,
        'c2': c2,
        'predicted': predicted.tolist(),
        'observed': observed.tolist(),
        'max_factor': float(np.max(factors)),
    }
