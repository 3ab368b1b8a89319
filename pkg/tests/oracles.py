"""Independent reference implementations used only by the tests.

Each one follows a definition directly (double loops, term-by-term sums,
exact rational arithmetic) and shares no code with the package.
"""

import math
from fractions import Fraction

import numpy as np
from scipy import integrate


def brute_rank_counts(values):
    strict = [sum(1 for b in values if b < a) for a in values]
    weak = [sum(1 for b in values if b <= a) for a in values]
    return strict, weak


def brute_utilities(values, weights):
    strict, weak = brute_rank_counts(values)
    out = []
    for s, k in zip(strict, weak):
        out.append(math.fsum(weights[s:k]) / (k - s))
    return out


def brute_pair_counts(f, g):
    """The four pair counters of tau-b by enumerating all pairs."""
    n = len(f)
    n_a = n_b = n_c = n_d = 0
    for i in range(n):
        for j in range(i + 1, n):
            df = f[i] - f[j]
            dg = g[i] - g[j]
            if df == 0:
                n_a += 1
            if dg == 0:
                n_b += 1
            if df * dg > 0:
                n_c += 1
            elif df * dg < 0:
                n_d += 1
    return n * (n - 1) // 2, n_a, n_b, n_c, n_d


def brute_pair_counts_np(f, g):
    """Same four counters over the full ``n x n`` sign matrices, upper triangle only."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    n = f.size
    iu = np.triu_indices(n, 1)
    sf = np.sign(f[:, None] - f[None, :])[iu]
    sg = np.sign(g[:, None] - g[None, :])[iu]
    prod = sf * sg
    return (n * (n - 1) // 2, int(np.count_nonzero(sf == 0)), int(np.count_nonzero(sg == 0)),
            int(np.count_nonzero(prod > 0)), int(np.count_nonzero(prod < 0)))


def brute_tau_b_np(f, g):
    n0, n_a, n_b, n_c, n_d = brute_pair_counts_np(f, g)
    return (n_c - n_d) / math.sqrt((n0 - n_a) * (n0 - n_b))


def brute_tau_b(f, g):
    n0, n_a, n_b, n_c, n_d = brute_pair_counts(f, g)
    return (n_c - n_d) / math.sqrt((n0 - n_a) * (n0 - n_b))


def u_termwise(weights, p):
    lam = len(weights)
    return lam * math.fsum(
        w * math.comb(lam - 1, i) * p**i * (1 - p) ** (lam - 1 - i) for i, w in enumerate(weights)
    )


def _poly_mul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _u_power_basis(weights):
    """Exact power-basis coefficients of u, weights taken as exact binary fractions."""
    lam = len(weights)
    coef = [Fraction(0)] * lam
    for i, w in enumerate(weights):
        # C(lam-1, i) p^i (1-p)^(lam-1-i), expanded
        for k in range(lam - i):
            term = Fraction(math.comb(lam - 1, i) * math.comb(lam - 1 - i, k) * (-1) ** k)
            coef[i + k] += lam * Fraction(w) * term
    return coef


def exact_integrals(weights):
    """``(int_0^1 u, int_0^1 u^2)`` in exact rational arithmetic."""
    c = _u_power_basis(weights)
    c2 = _poly_mul(c, c)
    return (float(sum(a / (k + 1) for k, a in enumerate(c))),
            float(sum(a / (k + 1) for k, a in enumerate(c2))))


def conditional_weight_lam3(weights, p):
    """``E[W_1]`` when the probe sits at quantile ``p`` among two uniform competitors, by quadrature."""
    def w_at(u2, u1):
        better = (u1 < p) + (u2 < p)
        return weights[better]

    # split both axes at p so every piece has a constant integrand
    cuts = ((0.0, p), (p, 1.0))
    val = 0.0
    for a1, b1 in cuts:
        for a2, b2 in cuts:
            if b1 > a1 and b2 > a2:
                val += integrate.dblquad(w_at, a1, b1, a2, b2, epsabs=1e-12)[0]
    return val


def mc_mean_se(vals):
    vals = np.asarray(vals, dtype=float)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))
