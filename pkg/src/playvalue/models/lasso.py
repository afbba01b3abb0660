"""LASSO by cyclic coordinate descent with K-fold CV and the one-SE rule.

The objective at penalty ``lam`` is::

    (1 / 2n) * ||y - b0 - X beta||^2 + lam * ||beta||_1

Coordinate descent runs on the centred Gram matrix, so each update costs
O(p). Sweeps alternate between the active set and full passes until the
subgradient optimality conditions hold within ``tol``. Stopping on the
gradient rather than on coefficient changes matters here because many
feature columns are exact linear combinations of others.
"""

import warnings

import numpy as np

from .base import LASSO, EmptyTrainingSet, ModelError


class NonConvergence(ModelError, UserWarning):
    def __init__(self, lam, sweeps):
        super().__init__(f"coordinate descent did not converge at lambda={lam:.6g} after {sweeps} sweeps")
        self.lam = lam


def soft_threshold(z, t):
    return np.sign(z) * max(abs(z) - t, 0.0)


class _Centered:
    def __init__(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.n = len(y)
        self.x_mean = X.mean(axis=0)
        self.y_mean = y.mean()
        Xc = X - self.x_mean
        self.G = Xc.T @ Xc / self.n
        self.c = Xc.T @ (y - self.y_mean) / self.n


def lambda_max(X, y):
    """Smallest penalty with an all-zero solution."""
    cen = _Centered(X, y)
    return float(np.max(np.abs(cen.c))) if len(cen.c) else 0.0


def _violation(r, beta, lam, coords=None):
    """Largest KKT violation given ``r = c - G beta`` (the negative gradient)."""
    if coords is not None:
        r, beta = r[coords], beta[coords]
    zero = beta == 0
    v = np.where(zero, np.abs(r) - lam, np.abs(r - lam * np.sign(beta)))
    return float(np.max(v, initial=0.0))


def _polish(G, c, lam, beta, usable, tol):
    """Solve the stationarity equations on the current support.

    With the support ``A`` and signs ``s`` fixed, the optimum satisfies
    ``G_AA beta_A = c_A - lam * s``. The candidate is accepted only when the
    signs survive and every optimality condition holds within ``tol``.
    """
    A = np.flatnonzero(beta)
    if len(A) == 0:
        return None
    s = np.sign(beta[A])
    sol = np.linalg.lstsq(G[np.ix_(A, A)], c[A] - lam * s, rcond=None)[0]
    if np.any(np.sign(sol) != s):
        return None
    cand = np.zeros_like(beta)
    cand[A] = sol
    r = c - G @ cand
    if _violation(r, cand, lam, usable) <= tol:
        return cand, r
    return None


def _descend(G, c, lam, beta, max_sweeps, tol):
    """Coordinate descent from ``beta`` (updated in place).

    Stops once a full sweep leaves every subgradient condition satisfied
    within ``tol``. Returns the number of sweeps used, or -1.
    """
    p = len(c)
    diag = np.diag(G).copy()
    r = c - G @ beta
    usable = diag > 0

    GT = np.ascontiguousarray(G.T)
    d = diag.tolist()

    def sweep(coords):
        for j in coords:
            dj = d[j]
            if dj <= 0.0:
                continue
            old = float(beta[j])
            z = float(r[j]) + dj * old
            if z > lam:
                new = (z - lam) / dj
            elif z < -lam:
                new = (z + lam) / dj
            else:
                new = 0.0
            if new != old:
                r[:] -= GT[j] * (new - old)
                beta[j] = new

    all_coords = range(p)
    sweeps = 0
    while sweeps < max_sweeps:
        sweep(all_coords)
        sweeps += 1
        if _violation(r, beta, lam, usable) <= tol:
            return sweeps
        polished = _polish(G, c, lam, beta, usable, tol)
        if polished is not None:
            beta[:] = polished[0]
            return sweeps
        active = np.flatnonzero(beta).tolist()
        while sweeps < max_sweeps and len(active):
            sweep(active)
            sweeps += 1
            if _violation(r, beta, lam, active) <= tol:
                break
    return -1


def lasso_path(X, y, lambdas, max_sweeps=3000, tol=1e-9):
    """Warm-started solutions along a decreasing penalty grid.

    Returns
    -------
    intercepts : (k,) ndarray
    coefs : (k, p) ndarray
    converged : (k,) bool ndarray
    """
    cen = _Centered(X, y)
    p = len(cen.c)
    beta = np.zeros(p)
    coefs = np.zeros((len(lambdas), p))
    intercepts = np.zeros(len(lambdas))
    converged = np.ones(len(lambdas), dtype=bool)
    for k, lam in enumerate(lambdas):
        used = _descend(cen.G, cen.c, float(lam), beta, max_sweeps, tol)
        if used < 0:
            converged[k] = False
            warnings.warn(NonConvergence(float(lam), max_sweeps))
        coefs[k] = beta
        intercepts[k] = cen.y_mean - cen.x_mean @ beta
    return intercepts, coefs, converged


def lasso_gradient(X, y, intercept, beta):
    """Gradient of the smooth part, ``-(1/n) X^T (y - b0 - X beta)``."""
    X = np.asarray(X, dtype=float)
    resid = np.asarray(y, dtype=float) - intercept - X @ beta
    return -(X.T @ resid) / len(resid)


def kkt_violation(X, y, intercept, beta, lam):
    """Largest violation of the subgradient optimality conditions.

    Zero coefficients need ``|g_j| <= lam``; nonzero ones need
    ``g_j = -lam * sign(beta_j)``.
    """
    g = lasso_gradient(X, y, intercept, beta)
    zero = beta == 0
    v_zero = np.maximum(np.abs(g[zero]) - lam, 0.0)
    v_active = np.abs(g[~zero] + lam * np.sign(beta[~zero]))
    return float(max(v_zero.max(initial=0.0), v_active.max(initial=0.0)))


def default_lambda_grid(X, y, n_lambda=50, min_ratio=1e-2):
    top = lambda_max(X, y)
    if top <= 0:
        return np.array([0.0])
    return np.geomspace(top, top * min_ratio, n_lambda)


class LassoModel:
    """LASSO with the penalty chosen by grouped K-fold CV and the one-SE rule."""

    family = LASSO

    def __init__(self, params=None):
        params = params or {}
        self.n_lambda = params.get("n_lambda", 50)
        self.lambda_min_ratio = params.get("lambda_min_ratio", 1e-2)
        self.lambda_grid = params.get("lambda_grid")
        self.k_folds = params.get("k_folds", 5)
        self.max_sweeps = params.get("max_sweeps", 3000)
        self.tol = params.get("tol", 1e-9)

    def fit(self, X, y, groups=None, rng=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(y) == 0:
            raise EmptyTrainingSet("LASSO needs at least one target")
        rng = np.random.default_rng(0) if rng is None else rng
        if self.lambda_grid is not None:
            lambdas = np.sort(np.asarray(self.lambda_grid, dtype=float))[::-1]
        else:
            lambdas = default_lambda_grid(X, y, self.n_lambda, self.lambda_min_ratio)
        self.lambdas = lambdas
        self.path_intercepts, self.path_coefs, self.converged = lasso_path(
            X, y, lambdas, self.max_sweeps, self.tol
        )
        groups = np.arange(len(y)) if groups is None else np.asarray(groups)
        uniq = np.unique(groups)
        k = min(self.k_folds, len(uniq))
        self.cv_mean = np.full(len(lambdas), np.nan)
        self.cv_se = np.full(len(lambdas), np.nan)
        usable = self.converged.copy()
        if k >= 2 and len(lambdas) > 1:
            fold_of_group = dict(zip(uniq[rng.permutation(len(uniq))], np.arange(len(uniq)) % k))
            fold = np.array([fold_of_group[g] for g in groups])
            errors = np.zeros((k, len(lambdas)))
            for f in range(k):
                tr, te = fold != f, fold == f
                b0, B, ok = lasso_path(X[tr], y[tr], lambdas, self.max_sweeps, self.tol)
                usable &= ok
                pred = b0[None, :] + X[te] @ B.T
                errors[f] = np.mean((y[te, None] - pred) ** 2, axis=0)
            self.cv_mean = errors.mean(axis=0)
            self.cv_se = errors.std(axis=0, ddof=1) / np.sqrt(k)
            candidates = np.flatnonzero(usable)
            if len(candidates) == 0:
                raise NonConvergence(float(lambdas[-1]), self.max_sweeps)
            best = candidates[np.argmin(self.cv_mean[candidates])]
            limit = self.cv_mean[best] + self.cv_se[best]
            within = candidates[self.cv_mean[candidates] <= limit]
            self.selected = int(within.min())  # largest penalty: grid is decreasing
        else:
            candidates = np.flatnonzero(usable)
            self.selected = int(candidates[-1]) if len(candidates) else len(lambdas) - 1
        self.intercept = float(self.path_intercepts[self.selected])
        self.coef = self.path_coefs[self.selected].copy()
        self.lam = float(lambdas[self.selected])
        self.history = {"selected_lambda": self.lam, "nonconverged": lambdas[~self.converged].tolist()}
        return self

    def predict(self, X, groups=None):
        return self.intercept + np.asarray(X, dtype=float) @ self.coef

    def state(self):
        return {
            "intercept": self.intercept,
            "coef": self.coef.tolist(),
            "lambda": self.lam,
            "lambdas": self.lambdas.tolist(),
            "path_intercepts": self.path_intercepts.tolist(),
            "path_coefs": self.path_coefs.tolist(),
            "cv_mean": self.cv_mean.tolist(),
            "cv_se": self.cv_se.tolist(),
            "selected": self.selected,
        }

    @classmethod
    def from_state(cls, params, state):
        m = cls(params)
        m.intercept = state["intercept"]
        m.coef = np.array(state["coef"], dtype=float)
        m.lam = state["lambda"]
        m.lambdas = np.array(state["lambdas"], dtype=float)
        m.path_intercepts = np.array(state["path_intercepts"], dtype=float)
        m.path_coefs = np.array(state["path_coefs"], dtype=float).reshape(len(m.lambdas), -1)
        m.cv_mean = np.array(state["cv_mean"], dtype=float)
        m.cv_se = np.array(state["cv_se"], dtype=float)
        m.selected = state["selected"]
        return m
