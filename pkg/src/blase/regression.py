"""Joint outcome model on linked pairs, its Gibbs draws, and imputations.

y1 | y2, key ~ N(x1(key, y2) . beta, sigma1^2)
y2 | key     ~ N(x2(key) . eta,      sigma2^2)

with the flat scale-invariant prior p(Theta) proportional to
(1/sigma1^2)(1/sigma2^2).  A pool's likelihood is the product of the
joint pair densities over its current links, imputed outcomes standing
in on dummy slots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .design import DesignCache
from .pools import Pool

LOG_2PI = math.log(2.0 * math.pi)


class SingularDesignError(ValueError):
    pass


class DegenerateStateError(ValueError):
    pass


@dataclass
class Theta:
    beta: np.ndarray        # y1 design coefficients
    sigma1_sq: float
    eta: np.ndarray         # y2 design coefficients
    sigma2_sq: float

    def copy(self) -> "Theta":
        return Theta(self.beta.copy(), self.sigma1_sq, self.eta.copy(), self.sigma2_sq)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.beta, [self.sigma1_sq], self.eta, [self.sigma2_sq]])


class ThetaView:
    """Theta plus per-key linear predictors, memoised for one iteration.

    a(key) is the y1 design row times beta with the y2 column zeroed, so a
    pair's y1 mean is a(key) + b_y2 * y2; m(key) is the y2 mean.
    """

    def __init__(self, theta: Theta, cache: DesignCache):
        self.theta = theta
        self.cache = cache
        col = cache.y2_col
        self.b_y2 = float(theta.beta[col]) if col >= 0 else 0.0
        self.s1 = float(theta.sigma1_sq)
        self.s2 = float(theta.sigma2_sq)
        self.inv2s1 = 0.5 / self.s1
        self.inv2s2 = 0.5 / self.s2
        # additive constants of the two log densities
        self.c1 = -0.5 * (LOG_2PI + math.log(self.s1))
        self.c2 = -0.5 * (LOG_2PI + math.log(self.s2))
        self._am: dict[tuple, tuple[float, float]] = {}

    def a_m(self, key: tuple) -> tuple[float, float]:
        am = self._am.get(key)
        if am is None:
            a = float(self.cache.x1_base(key) @ self.theta.beta)
            m = float(self.cache.x2(key) @ self.theta.eta)
            am = self._am[key] = (a, m)
        return am

    def loglik_pair(self, y1: float, y2: float, key: tuple) -> float:
        a, m = self.a_m(key)
        r1 = y1 - a - self.b_y2 * y2
        r2 = y2 - m
        return self.c1 - r1 * r1 * self.inv2s1 + self.c2 - r2 * r2 * self.inv2s2


def loglik_pool(pool: Pool, view: ThetaView, y1_all: np.ndarray,
                y2_all: np.ndarray, include_t1: bool = True) -> float:
    """Sum of joint pair log densities over the pool's current links."""
    key = pool.key
    a, m = view.a_m(key)
    b, c1, c2, i2s1, i2s2 = view.b_y2, view.c1, view.c2, view.inv2s1, view.inv2s2
    y1s = pool.y1_slots(y1_all)
    y2s = pool.y2_slots(y2_all)
    total = 0.0
    for slot_a, slot_p in enumerate(pool.perm):
        y1 = y1s[slot_a]
        y2 = y2s[slot_p]
        r1 = y1 - a - b * y2
        r2 = y2 - m
        total += c1 - r1 * r1 * i2s1 + c2 - r2 * r2 * i2s2
    if include_t1:
        for i1, i2 in pool.t1_pairs:
            y1 = y1_all[i1]
            y2 = y2_all[i2]
            r1 = y1 - a - b * y2
            r2 = y2 - m
            total += c1 - r1 * r1 * i2s1 + c2 - r2 * r2 * i2s2
    return total


# ---------------------------------------------------------------------------
# Imputation of outcomes on dummy slots.

def impute_y2(y1: float, key: tuple, view: ThetaView, rng) -> float:
    """Draw the missing y2 of a pair whose y1 is observed.

    Normal posterior combining the y2 marginal with the y1 regression:
    precision 1/sigma2^2 + b^2/sigma1^2, mean weighted accordingly.
    """
    a, m = view.a_m(key)
    b = view.b_y2
    prec = 1.0 / view.s2 + b * b / view.s1
    var = 1.0 / prec
    mu = var * (m / view.s2 + b * (y1 - a) / view.s1)
    return mu + math.sqrt(var) * rng.standard_normal()


def impute_y1(y2: float, key: tuple, view: ThetaView, rng) -> float:
    """Draw the missing y1 of a pair whose y2 is observed."""
    a, _ = view.a_m(key)
    mu = a + view.b_y2 * y2
    return mu + math.sqrt(view.s1) * rng.standard_normal()


def impute_pool_dummies(pool: Pool, view: ThetaView, y1_all, y2_all, rng,
                        only_missing: bool = False):
    """Refresh imputed outcomes on the pool's dummy slots.

    With only_missing=True just fills NaN placeholders left by rebalancing.
    Each dummy is linked to a real record (never to another dummy), and the
    draw conditions on that partner's outcome.
    """
    n1, n2 = pool.n1, pool.n2
    key = pool.key
    for a, p in enumerate(pool.perm):
        if a >= n1:  # file-1 side dummy, impute y1 given linked y2
            if only_missing and not math.isnan(pool.f1_dummy_y[a - n1]):
                continue
            y2 = y2_all[pool.f2_rows[p]] if p < n2 else pool.f2_dummy_y[p - n2]
            pool.f1_dummy_y[a - n1] = impute_y1(y2, key, view, rng)
        elif p >= n2:  # file-2 side dummy
            if only_missing and not math.isnan(pool.f2_dummy_y[p - n2]):
                continue
            y1 = y1_all[pool.f1_rows[a]]
            pool.f2_dummy_y[p - n2] = impute_y2(y1, key, view, rng)


# ---------------------------------------------------------------------------
# Completed-data assembly and the Theta Gibbs draws.

def assemble_completed(pools_sorted: list[Pool], cache: DesignCache,
                       y1_all: np.ndarray, y2_all: np.ndarray):
    """Stack design matrices and completed outcomes over all link positions."""
    N = sum(p.n_total for p in pools_sorted)
    p_dim, q_dim = cache.design.p, cache.design.q
    X1 = np.empty((N, p_dim))
    X2 = np.empty((N, q_dim))
    v1 = np.empty(N)
    v2 = np.empty(N)
    r = 0
    col = cache.y2_col
    for pool in pools_sorted:
        y1s = pool.y1_slots(y1_all)
        y2s = pool.y2_slots(y2_all)
        block = pool.n_total
        if block == 0:
            continue
        X1[r:r + block] = cache.x1_base(pool.key)
        X2[r:r + block] = cache.x2(pool.key)
        k = r
        for a, pp in enumerate(pool.perm):
            v1[k] = y1s[a]
            v2[k] = y2s[pp]
            k += 1
        for i1, i2 in pool.t1_pairs:
            v1[k] = y1_all[i1]
            v2[k] = y2_all[i2]
            k += 1
        if col >= 0:
            X1[r:r + block, col] = v2[r:r + block]
        r += block
    return X1, v1, X2, v2


def check_design_rank(XtX: np.ndarray, labels: list[str], tol: float = 1e-10):
    """Reject a numerically rank-deficient design, naming offending columns."""
    w, V = np.linalg.eigh(XtX)
    if w[-1] <= 0 or w[0] / w[-1] < tol:
        v = np.abs(V[:, 0])
        bad = [labels[i] for i in np.nonzero(v > 0.5 * v.max())[0]]
        raise SingularDesignError(
            f"design is numerically singular (eigenvalue ratio {w[0] / max(w[-1], 1e-300):.3e}); "
            f"columns involved: {', '.join(bad)}")


def _draw_block(X, y, coef_current, labels, rng):
    """One (sigma^2, coef) draw under the flat prior.

    sigma^2 from inverse-gamma with shape (N - p)/2 and scale SSE/2, the
    residual sum of squares taken at the passed-in coefficients; then the
    coefficient vector from its exact normal conditional around the
    least-squares fit.
    """
    N, p = X.shape
    if N - p <= 0:
        raise DegenerateStateError(
            f"{N} linked positions cannot identify {p} coefficients")
    XtX = X.T @ X
    check_design_rank(XtX, labels)
    resid = y - X @ coef_current
    sse = float(resid @ resid)
    g = rng.gamma(0.5 * (N - p))
    sigma_sq = 0.5 * sse / g
    coef_hat = np.linalg.solve(XtX, X.T @ y)
    L = np.linalg.cholesky(XtX)
    z = rng.standard_normal(p)
    coef = coef_hat + math.sqrt(sigma_sq) * np.linalg.solve(L.T, z)
    return coef, sigma_sq


def sample_theta(theta: Theta, cache: DesignCache, pools_sorted: list[Pool],
                 y1_all, y2_all, rng) -> Theta:
    X1, v1, X2, v2 = assemble_completed(pools_sorted, cache, y1_all, y2_all)
    beta, s1 = _draw_block(X1, v1, theta.beta, cache.design.y1_labels(), rng)
    eta, s2 = _draw_block(X2, v2, theta.eta, cache.design.y2_labels(), rng)
    return Theta(beta, s1, eta, s2)


def draw_theta_from_complete(cache: DesignCache, X1, v1, X2, v2, rng) -> Theta:
    """Flat-prior posterior draw from fully observed pairs (initialisation).

    No previous coefficients exist yet, so SSE is taken at the
    least-squares fit, which is the standard joint draw.
    """
    b_hat = np.linalg.lstsq(X1, v1, rcond=None)[0]
    e_hat = np.linalg.lstsq(X2, v2, rcond=None)[0]
    beta, s1 = _draw_block(X1, v1, b_hat, cache.design.y1_labels(), rng)
    eta, s2 = _draw_block(X2, v2, e_hat, cache.design.y2_labels(), rng)
    return Theta(beta, s1, eta, s2)


def predict_y1(theta: Theta, cache: DesignCache, key: tuple, y2: float,
               rng) -> float:
    """One posterior-predictive style draw of y1 at a covariate point."""
    x = cache.x1(key, y2)
    mu = float(x @ theta.beta)
    return mu + math.sqrt(theta.sigma1_sq) * rng.standard_normal()
