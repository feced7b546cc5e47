"""Independent reference values and slow-but-simple reference algorithms.

The constants were computed once by 30-digit arbitrary-precision radial
quadrature (split at r = 1/2, 9/10, 99/100) and are frozen here; nothing in this file
calls into the package under test except to build inputs.
"""

import itertools
import math

import numpy as np

# k(d) and K(d) for the bump exp(-1/(1-|u|^2)) on the unit ball
MOLLIFIER_K = {
    1: (2.2522836210435810105, 12.576977273625815928),
    2: (2.143565775792236601, 29.72853111790659249),
    3: (2.2671167396083264584, 50.921086711232913921),
    4: (2.6111325086271231646, 75.844512159603032024),
}

TRIG_K = math.pi / 2

# sup_x of the Coulomb potential of the uniform unit ball in R^3 (at the centre)
UNIFORM_BALL_POTENTIAL_SUP = 1.5


def gaussian_sqrt_grad_energy(sigma, d=1):
    """``\\int |grad sqrt(rho)|^2`` for an isotropic Gaussian: ``d / (4 sigma^2)``."""
    return d / (4.0 * sigma**2)


# --- dense simplex with Bland's rule -------------------------------------------


def simplex(c, A, b, tol=1e-11, max_pivots=200000):
    """Minimise ``c.x`` subject to ``A x = b, x >= 0`` (two-phase, Bland's rule).

    Returns ``(value, x)`` or ``(inf, None)`` when infeasible.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.array(c, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # tableau with artificials
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n, n + m))

    def run(cost_row, allowed):
        T[-1, :] = 0.0
        T[-1, :len(cost_row)] = cost_row
        for i, j in enumerate(basis):
            if T[-1, j] != 0:
                T[-1, :] -= T[-1, j] * T[i, :]
        for _ in range(max_pivots):
            red = T[-1, :allowed]
            enter = next((j for j in range(allowed) if red[j] < -tol), None)
            if enter is None:
                return True
            col = T[:m, enter]
            ratios = [(T[i, -1] / col[i], basis[i], i) for i in range(m) if col[i] > tol]
            if not ratios:
                return False
            best = min(r[0] for r in ratios)
            leave = min((r for r in ratios if r[0] <= best + tol), key=lambda r: r[1])[2]
            T[leave, :] /= T[leave, enter]
            for i in range(m + 1):
                if i != leave and T[i, enter] != 0:
                    T[i, :] -= T[i, enter] * T[leave, :]
            basis[leave] = enter
        raise RuntimeError("pivot limit reached")

    phase1 = np.concatenate([np.zeros(n), np.ones(m)])
    run(phase1, n + m)
    if -T[-1, -1] > 1e-9:
        return math.inf, None
    # drive remaining artificials out of the basis where possible
    for i, j in enumerate(basis):
        if j >= n:
            k = next((k for k in range(n) if abs(T[i, k]) > tol), None)
            if k is not None:
                T[i, :] /= T[i, k]
                for r in range(m + 1):
                    if r != i and T[r, k] != 0:
                        T[r, :] -= T[r, k] * T[i, :]
                basis[i] = k
    T[:, n:n + m] = 0.0
    for i, j in enumerate(basis):
        if j >= n:
            T[i, :] = 0.0
    if not run(c, n):
        return -math.inf, None
    x = np.zeros(n)
    for i, j in enumerate(basis):
        if j < n:
            x[j] = T[i, -1]
    return float(c @ x), x


def reference_mmot_1d(masses, centers, N):
    """Coulomb MMOT on 1-d atoms with coincident tuples excluded, by :func:`simplex`."""
    M = len(masses)
    cells = [t for t in itertools.product(range(M), repeat=N) if len(set(t)) == N]
    if not cells:
        return math.inf
    cost = []
    for t in cells:
        cost.append(sum(1.0 / abs(centers[t[i]] - centers[t[j]])
                        for i, j in itertools.combinations(range(N), 2)))
    A = np.zeros((N * M, len(cells)))
    for col, t in enumerate(cells):
        for k in range(N):
            A[k * M + t[k], col] = 1.0
    b = np.tile(np.asarray(masses, dtype=float), N)
    value, _ = simplex(cost, A, b)
    return value


# --- generators ----------------------------------------------------------------


def random_offdiagonal_plan_masses(rng, M, band, density_of_support=0.3):
    """Random symmetric ``M x M`` mass matrix vanishing on ``|i - j| < band``."""
    i, j = np.indices((M, M))
    keep = (np.abs(i - j) >= band) & (rng.random((M, M)) < density_of_support)
    P = np.where(keep, rng.random((M, M)), 0.0)
    P = P + P.T
    if P.sum() == 0:
        P[0, M - 1] = P[M - 1, 0] = 1.0
    return P / P.sum()


def cutoff_amplitude(grid, N, alpha, sigma=1.2):
    """Symmetric Gaussian amplitude times a smooth cutoff vanishing where ``|x_i - x_j| <= alpha``."""
    d = grid.d
    c = [grid.axis_centers(k) for k in range(d)]
    X = np.meshgrid(*[c[k] for _ in range(N) for k in range(d)], indexing="ij", sparse=True)
    out = np.exp(-sum(x**2 for x in X) / (2 * sigma**2))
    for p, q in itertools.combinations(range(N), 2):
        dist2 = sum((X[p * d + k] - X[q * d + k]) ** 2 for k in range(d))
        t = (dist2 - alpha**2) / alpha**2
        out = out * np.where(t > 0, np.exp(-1 / np.where(t > 0, t, 1.0)), 0.0)
    return out


def two_bump_1d(x, centres=(-1.0, 1.0), sigma=0.35):
    return sum(np.exp(-(x - m) ** 2 / (2 * sigma**2)) for m in centres)
