"""Modified Bessel function of the first kind, order one.

Power series below ``x = 20``, Hankel asymptotic expansion above.  Both
branches are evaluated exponentially scaled so densities can combine them
with other exponentials in log space.
"""

import numpy as np

_SWITCH = 20.0


def _i1e_series(x):
    # sum_m (x/2)^{2m+1} / (m! (m+1)!), scaled by e^{-x}
    half = 0.5 * x
    q = half * half
    term = half.copy()
    total = term.copy()
    m = 0
    while True:
        m += 1
        term = term * q / (m * (m + 1))
        total += term
        if np.all(term <= 1e-17 * total):
            break
    return total * np.exp(-x)


def _i1e_asymptotic(x):
    # e^{-x} I_1(x) ~ (2 pi x)^{-1/2} sum_k (-1)^k a_k / x^k,  mu = 4
    mu = 4.0
    term = np.ones_like(x)
    total = term.copy()
    for k in range(1, 60):
        new = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        # asymptotic series: stop before terms start growing
        if np.all(np.abs(new) >= np.abs(term)):
            break
        term = np.where(np.abs(new) < np.abs(term), new, 0.0)
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total / np.sqrt(2.0 * np.pi * x)


def i1e(x):
    """``exp(-|x|) I_1(x)``."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(np.atleast_1d(x))
    out = np.zeros_like(ax)
    small = ax < _SWITCH
    if np.any(small):
        out[small] = _i1e_series(ax[small])
    if np.any(~small):
        out[~small] = _i1e_asymptotic(ax[~small])
    out = np.copysign(out, np.atleast_1d(x))
    return float(out[0]) if x.ndim == 0 else out


def i1(x):
    """``I_1(x)``; overflows to inf beyond ``|x| ~ 713``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        return i1e(x) * np.exp(np.abs(x))
