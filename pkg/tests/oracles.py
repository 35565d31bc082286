"""Independent reference computations used by the tests.

Nothing here imports the package's filtering code; the dense Gaussian
likelihood is built by stacking every observation into one vector.
"""

import numpy as np


def dense_moments(Z, T, R, Q, H, a1, P1, diffuse, n):
    """Mean, covariance and diffuse design of the stacked observations.

    Returns (mu, Sigma, X, rows) where rows lists (t, i) for each stacked entry.
    The diffuse initial states enter as X @ beta with beta flat.
    """
    m = T.shape[0]
    g = R.shape[1]
    k = m + g * (n - 1)
    G = np.zeros((m, k))
    G[:, :m] = np.eye(m)
    cov_u = np.zeros((k, k))
    cov_u[:m, :m] = P1
    for s in range(n - 1):
        cov_u[m + g * s: m + g * (s + 1), m + g * s: m + g * (s + 1)] = Q
    mean_u = np.zeros(k)
    mean_u[:m] = np.where(diffuse, 0.0, a1)
    p = H.shape[0]
    Zs, rows = [], []
    for t in range(n):
        Zt = Z[t] if Z.ndim == 3 else Z
        for i in range(p):
            Zs.append(Zt[i] @ G)
            rows.append((t, i))
        if t < n - 1:
            Gn = T @ G
            Gn[:, m + g * t: m + g * (t + 1)] += R
            G = Gn
    A = np.array(Zs)
    hdiag = np.tile(np.diag(H), n)
    Sigma = A @ cov_u @ A.T + np.diag(hdiag)
    mu = A @ mean_u
    X = A[:, :m][:, diffuse]
    return mu, Sigma, X, rows


def flat_prior_loglik(y, mu, Sigma, X):
    """Marginal log density of y = mu + X b + u, u ~ N(0, Sigma), b flat.

    With no diffuse columns this is the ordinary Gaussian log density.
    """
    N = y.size
    r = y - mu
    Si = np.linalg.inv(Sigma)
    _, logdet = np.linalg.slogdet(Sigma)
    kx = X.shape[1]
    if kx == 0:
        return -0.5 * (N * np.log(2 * np.pi) + logdet + r @ Si @ r)
    XS = X.T @ Si
    A = XS @ X
    _, logdetA = np.linalg.slogdet(A)
    M = Si - XS.T @ np.linalg.solve(A, XS)
    return -0.5 * ((N - kx) * np.log(2 * np.pi) + logdet + logdetA + r @ M @ r)


def dense_conditional_loglik(model_parts, y, d):
    """log p(y_{d+1:n} | y_{1:d}) computed from the stacked Gaussian."""
    Z, T, R, Q, H, a1, P1, diffuse = model_parts
    n = y.shape[0]
    mu, Sigma, X, rows = dense_moments(Z, T, R, Q, H, a1, P1, diffuse, n)
    yv = np.array([y[t, i] for t, i in rows])
    obs = ~np.isnan(yv)
    first = np.array([t < d for t, _ in rows]) & obs
    full = flat_prior_loglik(yv[obs], mu[obs], Sigma[np.ix_(obs, obs)], X[obs])
    if not first.any():
        return full
    head = flat_prior_loglik(yv[first], mu[first], Sigma[np.ix_(first, first)], X[first])
    return full - head


def soft_threshold(z, g):
    return np.sign(z) * np.maximum(np.abs(z) - g, 0.0)


def bowman_shenton_reference(x):
    """Jarque-Bera statistic via scipy, used as a cross-check."""
    from scipy import stats
    res = stats.jarque_bera(x)
    return res.statistic, res.pvalue
