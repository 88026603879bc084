"""Complete-data regression on imputed scores.

Each completed dataset is fit with an intercept plus the J scores, by OLS
for a continuous outcome and by Newton/IRLS for a binary one.  The score
coefficients b_j map back to beta(t) = sum_j b_j v_j(t).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.special import expit

from .dataset import GridFunction, GridKernel
from .errors import NotConverged, Separation, SingularDesign
from .fpca import EigenSystem
from .impute import CompletedScoreData

IRLS_TOL = 1e-8
IRLS_MAX_ITER = 50
MAX_HALVINGS = 20
SEPARATION_ETA = 30.0


@dataclass(frozen=True, eq=False)
class CompleteDataFit:
    intercept: float
    coefs: np.ndarray
    coef_cov: np.ndarray  # (J+1) x (J+1), intercept first
    converged: bool = True
    iterations: int = 0

    def to_json(self) -> dict:
        return {
            "intercept": float(self.intercept),
            "coefs": np.asarray(self.coefs).tolist(),
            "coef_cov": np.asarray(self.coef_cov).tolist(),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }


def _design(data: CompletedScoreData) -> np.ndarray:
    n = data.scores.shape[0]
    return np.column_stack([np.ones(n), data.scores])


def fit_linear_scores(data: CompletedScoreData) -> CompleteDataFit:
    X = _design(data)
    y = np.asarray(data.outcomes, dtype=float)
    n, p = X.shape
    if n <= p:
        raise SingularDesign(f"{n} subjects cannot support {p} coefficients")
    Q, R = np.linalg.qr(X)
    d = np.abs(np.diag(R))
    if d.min() <= 1e-10 * d.max():
        raise SingularDesign("score design is rank deficient")
    coef = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ coef
    sigma2 = float(resid @ resid) / (n - p)
    Rinv = np.linalg.solve(R, np.eye(p))
    cov = sigma2 * (Rinv @ Rinv.T)
    cov = 0.5 * (cov + cov.T)
    return CompleteDataFit(float(coef[0]), coef[1:].copy(), cov, True, 1)


def _loglik(eta: np.ndarray, y: np.ndarray) -> float:
    # sum y*eta - log(1 + e^eta), computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _is_separable(X: np.ndarray, y: np.ndarray) -> bool:
    """LP check for complete or quasi-complete separation."""
    sgn = 2.0 * y - 1.0
    Xs = X * sgn[:, None]
    p = X.shape[1]
    res = linprog(
        c=-Xs.sum(axis=0),
        A_ub=-Xs,
        b_ub=np.zeros(X.shape[0]),
        bounds=[(-1.0, 1.0)] * p,
        method="highs",
    )
    return bool(res.status == 0 and -res.fun > 1e-7)


def fit_logistic_scores(data: CompletedScoreData) -> CompleteDataFit:
    """Maximum-likelihood logistic fit by Newton steps with step halving."""
    X = _design(data)
    y = np.asarray(data.outcomes, dtype=float)
    n, p = X.shape
    if n <= p:
        raise SingularDesign(f"{n} subjects cannot support {p} coefficients")
    if not (np.any(y == 1.0) and np.any(y == 0.0)):
        raise Separation("only one outcome class is present")

    ybar = y.mean()
    beta = np.zeros(p)
    beta[0] = np.log(ybar / (1.0 - ybar))
    eta = X @ beta
    ll = _loglik(eta, y)
    converged = False
    it = 0
    for it in range(1, IRLS_MAX_ITER + 1):
        prob = expit(eta)
        score = X.T @ (y - prob)
        if np.max(np.abs(score)) < IRLS_TOL:
            converged = True
            it -= 1
            break
        info = (X * (prob * (1.0 - prob))[:, None]).T @ X
        step = np.linalg.lstsq(info, score, rcond=None)[0]
        # near the optimum a full step can move the log-likelihood by less than rounding
        slack = 64.0 * np.finfo(float).eps * (1.0 + abs(ll))
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + t * step
            eta_c = X @ cand
            ll_c = _loglik(eta_c, y)
            if ll_c >= ll - slack:
                break
            t *= 0.5
        else:
            raise NotConverged("step halving could not increase the log-likelihood", beta)
        decreased_dev = ll_c > ll
        beta, eta, ll = cand, eta_c, ll_c
        if decreased_dev:
            for cls in (0.0, 1.0):
                if np.all(np.abs(eta[y == cls]) > SEPARATION_ETA):
                    raise Separation("linear predictor diverges for a whole outcome class")
    else:
        prob = expit(eta)
        if np.max(np.abs(X.T @ (y - prob))) < IRLS_TOL:
            converged = True
        elif _is_separable(X, y):
            raise Separation("outcome classes are separable by the scores")
        else:
            raise NotConverged(f"IRLS did not converge in {IRLS_MAX_ITER} iterations", beta)

    if np.max(np.abs(eta)) > 15.0 and _is_separable(X, y):
        raise Separation("outcome classes are separable by the scores")

    prob = expit(eta)
    info = (X * (prob * (1.0 - prob))[:, None]).T @ X
    cov = np.linalg.pinv(info, hermitian=True)
    cov = 0.5 * (cov + cov.T)
    return CompleteDataFit(float(beta[0]), beta[1:].copy(), cov, converged, it)


def fit_moment_scores(data: CompletedScoreData, eig: EigenSystem) -> CompleteDataFit:
    """Naive moment estimator b_j = mean_i(xi_ij Y_i) / lambda_j.

    Coefficient covariance is the sample covariance of the per-subject
    terms divided by N; the intercept is the outcome mean.
    """
    xi = data.scores
    y = np.asarray(data.outcomes, dtype=float)
    n = y.size
    terms = xi * y[:, None] / eig.eigenvalues[None, :]
    coefs = terms.mean(axis=0)
    full = np.column_stack([y, terms])
    cov = np.atleast_2d(np.cov(full, rowvar=False, ddof=1)) / n
    return CompleteDataFit(float(y.mean()), coefs, 0.5 * (cov + cov.T), True, 0)


def coef_to_beta(fit: CompleteDataFit, eig: EigenSystem) -> tuple[GridFunction, GridKernel, float]:
    """Coefficient function and its covariance kernel on the eigenfunction grid."""
    V = eig.eigenfunctions  # J x M
    coefs = np.asarray(fit.coefs, dtype=float)
    if coefs.size != eig.J:
        raise ValueError(f"fit has {coefs.size} score coefficients but the eigensystem has {eig.J}")
    beta = coefs @ V
    S = np.asarray(fit.coef_cov)[1:, 1:]
    cov = V.T @ S @ V
    cov = 0.5 * (cov + cov.T)
    return GridFunction(eig.grid, beta), GridKernel(eig.grid, cov), float(fit.intercept)
