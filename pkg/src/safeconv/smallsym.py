"""Dependency-free numerical kernels for 3x3 real symmetric matrices.

The controller projects a 3x3 symmetric matrix onto

    W = { A >= 0 (PSD),  A11 + A22 <= limit,  A33 = 1 }

thousands of times per simulated second, so these kernels run on plain
floats with the matrix packed as a 6-tuple ``(a11, a12, a13, a22, a23, a33)``
instead of going through LAPACK for every 3x3 solve.

Eigendecomposition is cyclic Jacobi to machine precision; the set projection
is Dykstra's alternating scheme over the three constraint sets, which
converges to the exact Frobenius projection onto their intersection.
"""

from __future__ import annotations

import math

from .errors import NumericalError

_EPS = 2.220446049250313e-16


def pack(mat) -> tuple:
    """Symmetric 3x3 array-like -> (a11, a12, a13, a22, a23, a33)."""
    return (
        float(mat[0][0]), float(mat[0][1]), float(mat[0][2]),
        float(mat[1][1]), float(mat[1][2]), float(mat[2][2]),
    )


def unpack(s):
    """6-tuple -> nested-list symmetric 3x3."""
    a11, a12, a13, a22, a23, a33 = s
    return [[a11, a12, a13], [a12, a22, a23], [a13, a23, a33]]


def eigh3(s, max_sweeps: int = 30):
    """Eigendecomposition of a packed symmetric 3x3.

    Returns ``(w, v)``: eigenvalues descending and the matching eigenvectors
    as row tuples (``v[k]`` belongs to ``w[k]``).  Vectors carry a
    deterministic sign (largest-magnitude component positive).

    Raises NumericalError if the off-diagonal mass has not collapsed after
    ``max_sweeps`` cyclic sweeps (does not happen for finite input).
    """
    a11, a12, a13, a22, a23, a33 = (float(x) for x in s)
    v11, v12, v13 = 1.0, 0.0, 0.0
    v21, v22, v23 = 0.0, 1.0, 0.0
    v31, v32, v33 = 0.0, 0.0, 1.0

    frob = math.sqrt(
        a11 * a11 + a22 * a22 + a33 * a33 + 2.0 * (a12 * a12 + a13 * a13 + a23 * a23)
    )
    tol = _EPS * frob

    def offdiag():
        return math.sqrt(2.0 * (a12 * a12 + a13 * a13 + a23 * a23))

    converged = frob == 0.0
    for _ in range(max_sweeps):
        if offdiag() <= tol:
            converged = True
            break
        # pair (0, 1)
        if a12 != 0.0:
            theta = 0.5 * (a22 - a11) / a12
            if abs(theta) > 1e150:
                t = 0.5 / theta
            else:
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            sn = t * c
            tau = sn / (1.0 + c)
            a11 -= t * a12
            a22 += t * a12
            a12 = 0.0
            g, h = a13, a23
            a13 = g - sn * (h + g * tau)
            a23 = h + sn * (g - h * tau)
            g, h = v11, v12
            v11, v12 = g - sn * (h + g * tau), h + sn * (g - h * tau)
            g, h = v21, v22
            v21, v22 = g - sn * (h + g * tau), h + sn * (g - h * tau)
            g, h = v31, v32
            v31, v32 = g - sn * (h + g * tau), h + sn * (g - h * tau)
        # pair (0, 2)
        if a13 != 0.0:
            theta = 0.5 * (a33 - a11) / a13
            if abs(theta) > 1e150:
                t = 0.5 / theta
            else:
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            sn = t * c
            tau = sn / (1.0 + c)
            a11 -= t * a13
            a33 += t * a13
            a13 = 0.0
            g, h = a12, a23
            a12 = g - sn * (h + g * tau)
            a23 = h + sn * (g - h * tau)
            g, h = v11, v13
            v11, v13 = g - sn * (h + g * tau), h + sn * (g - h * tau)
            g, h = v21, v23
            v21, v23 = g - sn * (h + g * tau), h + sn * (g - h * tau)
            g, h = v31, v33
            v31, v33 = g - sn * (h + g * tau), h + sn * (g - h * tau)
        # pair (1, 2)
        if a23 != 0.0:
            theta = 0.5 * (a33 - a22) / a23
            if abs(theta) > 1e150:
                t = 0.5 / theta
            else:
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            sn = t * c
            tau = sn / (1.0 + c)
            a22 -= t * a23
            a33 += t * a23
            a23 = 0.0
            g, h = a12, a13
            a12 = g - sn * (h + g * tau)
            a13 = h + sn * (g - h * tau)
            g, h = v12, v13
            v12, v13 = g - sn * (h + g * tau), h + sn * (g - h * tau)
            g, h = v22, v23
            v22, v23 = g - sn * (h + g * tau), h + sn * (g - h * tau)
            g, h = v32, v33
            v32, v33 = g - sn * (h + g * tau), h + sn * (g - h * tau)
    else:
        converged = offdiag() <= tol

    if not converged:
        raise NumericalError(
            f"jacobi sweep cap ({max_sweeps}) hit with off-diagonal {offdiag():.3e}",
            residual=offdiag(),
        )

    eig = [
        (a11, (v11, v21, v31)),
        (a22, (v12, v22, v32)),
        (a33, (v13, v23, v33)),
    ]
    eig.sort(key=lambda p: -p[0])
    w = tuple(p[0] for p in eig)
    vecs = []
    for _, vec in eig:
        m = max(abs(vec[0]), abs(vec[1]), abs(vec[2]))
        for comp in vec:
            if abs(comp) == m:
                if comp < 0.0:
                    vec = (-vec[0], -vec[1], -vec[2])
                break
        vecs.append(vec)
    return w, tuple(vecs)


def psd_clamp(s):
    """Frobenius-nearest PSD matrix: clamp negative eigenvalues to zero."""
    w, v = eigh3(s)
    if w[2] >= 0.0:  # already PSD (eigenvalues sorted descending)
        return tuple(float(x) for x in s)
    a11 = a12 = a13 = a22 = a23 = a33 = 0.0
    for lam, (x, y, z) in zip(w, v):
        if lam <= 0.0:
            continue
        a11 += lam * x * x
        a12 += lam * x * y
        a13 += lam * x * z
        a22 += lam * y * y
        a23 += lam * y * z
        a33 += lam * z * z
    return (a11, a12, a13, a22, a23, a33)


def min_eigenvalue(s) -> float:
    return eigh3(s)[0][2]


def project_lift_set(s, trace2_limit: float, tol: float = 1e-10, max_sweeps: int = 10000):
    """Frobenius projection onto {A PSD, A11 + A22 <= trace2_limit, A33 = 1}.

    Dykstra's alternating projections with one correction term per set,
    cycling halfspace -> PSD cone -> affine slice.  Stops when one full cycle
    moves the iterate by at most ``tol`` in Frobenius norm; raises
    NumericalError with the residual if ``max_sweeps`` cycles do not get there.

    Returns ``(packed_result, sweeps_used)``.
    """
    x = tuple(float(v) for v in s)
    p1 = (0.0,) * 6  # halfspace correction
    p2 = (0.0,) * 6  # PSD correction
    p3 = (0.0,) * 6  # affine correction
    delta = math.inf
    for sweep in range(1, max_sweeps + 1):
        x_prev = x
        # halfspace {a11 + a22 <= limit}: shift the two diagonals equally
        y = (x[0] + p1[0], x[1] + p1[1], x[2] + p1[2], x[3] + p1[3], x[4] + p1[4], x[5] + p1[5])
        viol = y[0] + y[3] - trace2_limit
        if viol > 0.0:
            half = 0.5 * viol
            z = (y[0] - half, y[1], y[2], y[3] - half, y[4], y[5])
        else:
            z = y
        p1 = (y[0] - z[0], y[1] - z[1], y[2] - z[2], y[3] - z[3], y[4] - z[4], y[5] - z[5])
        x = z
        # PSD cone
        y = (x[0] + p2[0], x[1] + p2[1], x[2] + p2[2], x[3] + p2[3], x[4] + p2[4], x[5] + p2[5])
        z = psd_clamp(y)
        p2 = (y[0] - z[0], y[1] - z[1], y[2] - z[2], y[3] - z[3], y[4] - z[4], y[5] - z[5])
        x = z
        # affine slice {a33 = 1}: overwrite the corner
        y = (x[0] + p3[0], x[1] + p3[1], x[2] + p3[2], x[3] + p3[3], x[4] + p3[4], x[5] + p3[5])
        z = (y[0], y[1], y[2], y[3], y[4], 1.0)
        p3 = (0.0, 0.0, 0.0, 0.0, 0.0, y[5] - 1.0)
        x = z
        d0 = x[0] - x_prev[0]
        d1 = x[1] - x_prev[1]
        d2 = x[2] - x_prev[2]
        d3 = x[3] - x_prev[3]
        d4 = x[4] - x_prev[4]
        d5 = x[5] - x_prev[5]
        delta = math.sqrt(
            d0 * d0 + d3 * d3 + d5 * d5 + 2.0 * (d1 * d1 + d2 * d2 + d4 * d4)
        )
        if delta <= tol:
            return x, sweep
    raise NumericalError(
        f"alternating projection did not reach {tol:g} within {max_sweeps} sweeps",
        residual=delta,
    )
