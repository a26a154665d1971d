"""Independent brute-force oracles used by the test suite.

These deliberately avoid the library code paths they check.
"""

import numpy as np


def jacobi_eigensystem(matrix, tol=1e-14, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors-as-columns) sorted descending.
    """
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(i + 1, n)))
        if off <= tol * max(scale, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akq = a[k, p], a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p, k], a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp, vkq = v[k, p], v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues)[::-1]
    return eigenvalues[order], v[:, order]


def explicit_covariance(samples):
    """Covariance by explicit double loop over centered samples (m-1 norm)."""
    x = np.asarray(samples, dtype=float)
    m, n = x.shape
    mean = x.sum(axis=0) / m
    cov = np.zeros((n, n))
    for row in x:
        d = row - mean
        cov += np.outer(d, d)
    return cov / (m - 1)


def point_in_hull_lp(point, vertices, tol=1e-9):
    """Convex-hull membership via linear programming (convex combination)."""
    from scipy.optimize import linprog

    vertices = np.asarray(vertices, dtype=float)
    m = len(vertices)
    a_eq = np.vstack([vertices.T, np.ones(m)])
    b_eq = np.concatenate([np.asarray(point, dtype=float), [1.0]])
    res = linprog(np.zeros(m), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * m, method="highs")
    return res.status == 0 and res.success


def tetrahedron_volume(a, b, c, d):
    return abs(np.linalg.det(np.array([b - a, c - a, d - a]))) / 6.0


def circumsphere(a, b, c, d):
    """Center and radius of the sphere through four points."""
    m = 2.0 * np.array([b - a, c - a, d - a])
    rhs = np.array([
        b @ b - a @ a,
        c @ c - a @ a,
        d @ d - a @ a,
    ])
    center = np.linalg.solve(m, rhs)
    return center, np.linalg.norm(center - a)
