"""Random model generators shared by tests."""

import numpy as np

from hdnowcast import ssm


def random_model(rng, max_m=4, max_p=3, n=12, time_varying=False):
    m = int(rng.integers(1, max_m + 1))
    p = int(rng.integers(1, max_p + 1))
    g = int(rng.integers(1, m + 1))
    T = rng.normal(size=(m, m)) * 0.5
    if rng.random() < 0.5:
        T[0, 0] = 1.0
    R = rng.normal(size=(m, g))
    A = rng.normal(size=(g, g))
    Q = A @ A.T + 0.1 * np.eye(g)
    Z = rng.normal(size=(n, p, m)) if time_varying else rng.normal(size=(p, m))
    H = np.diag(rng.uniform(0.1, 2.0, p))
    diffuse = rng.random(m) < 0.4
    B = rng.normal(size=(m, m))
    P1 = B @ B.T
    P1[diffuse, :] = 0.0
    P1[:, diffuse] = 0.0
    a1 = rng.normal(size=m)
    a1[diffuse] = 0.0
    return ssm.StateSpaceModel(Z, T, R, Q, H, a1, P1, diffuse), (Z, T, R, Q, H, a1, P1, diffuse)


def random_data(rng, n, p, miss=0.2):
    y = rng.normal(size=(n, p)) * 2.0
    y[rng.random((n, p)) < miss] = np.nan
    return y


def oracle_cases(seed, count, n=12):
    """Random models with mixed missing cells whose diffuse phase ends within the burn-in."""
    from oracles import dense_conditional_loglik

    rng = np.random.default_rng(seed)
    cases = []
    while len(cases) < count:
        model, parts = random_model(rng, n=n, time_varying=rng.random() < 0.3)
        y = random_data(rng, n, model.p)
        out = ssm.filter(model, y)
        if out.diffuse_steps[model.d:].any():
            continue
        cases.append((model, parts, y, dense_conditional_loglik(parts, y, model.d)))
    return cases
