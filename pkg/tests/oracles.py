"""Independent reference implementations used to validate the library.

Everything here is deliberately written from first principles (adaptive
Simpson quadrature, dense linear solves, finite differences, exhaustive
vertex enumeration) rather than reusing library code paths.
"""

import itertools

import numpy as np


def adaptive_simpson(f, a, b, tol=1e-12, max_depth=50):
    """Classic recursive adaptive Simpson quadrature."""

    def simpson(lo, hi):
        mid = 0.5 * (lo + hi)
        return mid, (hi - lo) / 6.0 * (f(lo) + 4.0 * f(mid) + f(hi))

    def recurse(lo, hi, whole, eps, depth):
        mid, _ = simpson(lo, hi)
        _, left = simpson(lo, mid)
        _, right = simpson(mid, hi)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * eps:
            return left + right + delta / 15.0
        return recurse(lo, mid, left, eps / 2.0, depth - 1) + recurse(
            mid, hi, right, eps / 2.0, depth - 1
        )

    if a == b:
        return 0.0
    _, whole = simpson(a, b)
    return recurse(a, b, whole, tol, max_depth)


def dense_spectral_matrix(nodes, sigma, xi, dim=2):
    """Symmetric dense matrix of the per-frequency nodal system, assembled
    directly in the physical variables h_k (no g-substitution)."""
    nodes = np.asarray(nodes, dtype=float)
    rho = np.diff(nodes)
    n = rho.size
    chi = (2.0 * np.pi * nodes[:-1] ** 2) ** (-dim / 2.0) * np.exp(
        2.0 * np.pi**2 * nodes[:-1] ** 2 * xi**2
    )
    coth = np.cosh(sigma * rho) / np.sinh(sigma * rho)
    isnh = 1.0 / np.sinh(sigma * rho)
    mat = np.zeros((n + 1, n + 1))
    mat[0, 0] = -sigma * chi[0] * coth[0]
    mat[0, 1] = sigma * chi[0] * isnh[0]
    for k in range(1, n):
        mat[k, k - 1] = sigma * chi[k - 1] * isnh[k - 1]
        mat[k, k] = -sigma * (chi[k] * coth[k] + chi[k - 1] * coth[k - 1])
        mat[k, k + 1] = sigma * chi[k] * isnh[k]
    mat[n, n - 1] = sigma * chi[n - 1] * isnh[n - 1]
    mat[n, n] = -sigma * chi[n - 1] * coth[n - 1]
    return mat


def dense_spectral_solve(nodes, sigma, xi, dim=2):
    """All nodal spectra at one frequency via a dense LU solve."""
    mat = dense_spectral_matrix(nodes, sigma, xi, dim)
    rhs = -np.eye(mat.shape[0])
    return np.linalg.solve(mat, rhs)


def central_difference_gradient(func, x, h=1e-6):
    """Central finite differences of a scalar function of a flat array."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        grad[i] = (func(xp) - func(xm)) / (2.0 * h)
    return grad


def lp_vertex_minimum(c, a_ub, b_ub, tol=1e-9):
    """Minimum of c.x over {a_ub x <= b_ub} by exhaustive vertex enumeration.

    Only for tiny instances; assumes the feasible region is bounded in the
    directions that matter (the epigraph variable is bounded below by the
    data, so the minimum is attained at a vertex).
    """
    a_ub = np.asarray(a_ub, dtype=float)
    b_ub = np.asarray(b_ub, dtype=float)
    c = np.asarray(c, dtype=float)
    nvar = a_ub.shape[1]
    best = np.inf
    for rows in itertools.combinations(range(a_ub.shape[0]), nvar):
        sub = a_ub[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b_ub[list(rows)])
        if np.all(a_ub.dot(x) <= b_ub + tol):
            best = min(best, c.dot(x))
    return best


def brute_piecewise_integral(nodes, lam1, lam2, r):
    """Piecewise-constant Gaussian scale integral by explicit interval sums."""
    nodes = np.asarray(nodes, dtype=float)
    total = 0.0
    for k in range(nodes.size - 1):
        lo = max(nodes[k], lam1)
        hi = min(nodes[k + 1], lam2)
        if hi > lo:
            total += (hi - lo) * np.exp(-(r**2) / (2.0 * nodes[k] ** 2))
    return total
