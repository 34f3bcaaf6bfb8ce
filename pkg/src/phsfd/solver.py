"""Least-squares solvers for the rectangular collocation system.

Two routes with no shared factorization code: a dense pivoted QR for small
node counts, polished by iterative refinement until the residual is
orthogonal to the column space, and a matrix-free Golub-Kahan
bidiagonalization (LSQR) for large ones.  The automatic policy switches on
the column count.  Both return the same result record, so the routes can be
compared directly on any instance.

When the data is consistent to rounding (manufactured polynomial
solutions), the residual of any double-precision coefficient vector is pure
rounding noise, and its component inside the column space is a fixed O(1)
fraction; no amount of ordinary refinement makes the residual orthogonal to
working precision.  The direct route therefore refines into a double-double
coefficient pair using exactly rounded residuals (error-free split products
summed with fsum), and reports that residual vector.  This is classical
extended-precision iterative refinement, and it is only engaged when the
plainly measured orthogonality misses the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from .assembly import build_operator
from .errors import SolverError

DIRECT_LIMIT = 2000          # auto policy: columns above this go iterative
ORTHO_TARGET = 0.5e-8        # refinement target for the orthogonality ratio
MAX_REFINE = 4

_SPLIT = 134217729.0         # 2^27 + 1, Veltkamp splitting constant


@dataclass
class SolveResult:
    coefficients: np.ndarray
    method: str
    iterations: int
    residual_norm: float      # two-norm of b - A x
    orthogonality: float      # inf-norm of A^T r over (1-norm of A times |r|)
    residual: np.ndarray | None = None  # length-M residual vector
    refinements: int = 0
    warning: str | None = None
    # low-order part of the coefficients when extended refinement engaged;
    # the reported residual belongs to coefficients + coefficients_low
    coefficients_low: np.ndarray | None = field(default=None, repr=False)


def one_norm(matrix):
    """Maximum absolute column sum of a sparse or dense matrix."""
    if scipy.sparse.issparse(matrix):
        if matrix.nnz == 0:
            return 0.0
        return float(np.max(np.abs(matrix).sum(axis=0)))
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(matrix).sum(axis=0)))


def orthogonality_ratio(matrix, rhs, x):
    """Scaled residual orthogonality: zero at the exact least-squares solution."""
    r = rhs - matrix @ x
    return residual_orthogonality(matrix, r)


def residual_orthogonality(matrix, residual):
    """The orthogonality ratio of an explicit residual vector."""
    atr = matrix.T @ residual
    if len(atr) == 0:
        return 0.0
    denom = one_norm(matrix) * float(np.linalg.norm(residual)) + 1e-300
    return float(np.max(np.abs(atr)) / denom)


def exact_residual(matrix, rhs, x_hi, x_lo=None):
    """Exactly rounded rhs - A (x_hi + x_lo) for a sparse or dense matrix.

    Each high-order product is split into an error-free float pair and the
    row is summed with fsum, so every entry of the result is the correctly
    rounded value of the exact real-arithmetic residual of the stored data.
    """
    csr = matrix.tocsr() if scipy.sparse.issparse(matrix) else \
        scipy.sparse.csr_matrix(matrix)
    data = csr.data.tolist()
    indices = csr.indices.tolist()
    indptr = csr.indptr.tolist()
    hi = np.asarray(x_hi, dtype=float).tolist()
    lo = None if x_lo is None else np.asarray(x_lo, dtype=float).tolist()
    rhs_list = np.asarray(rhs, dtype=float).tolist()
    out = np.empty(csr.shape[0])
    fsum = math.fsum
    for i in range(csr.shape[0]):
        terms = [rhs_list[i]]
        append = terms.append
        for k in range(indptr[i], indptr[i + 1]):
            a = -data[k]
            j = indices[k]
            x = hi[j]
            p = a * x
            ah = a * _SPLIT
            ah -= ah - a
            al = a - ah
            xh = x * _SPLIT
            xh -= xh - x
            xl = x - xh
            append(p)
            append(((ah * xh - p) + ah * xl + al * xh) + al * xl)
            if lo is not None:
                append(a * lo[j])
        out[i] = fsum(terms)
    return out


def _double_double_add(hi, lo, dx):
    """Accumulate ``dx`` into the double-double pair (hi, lo) elementwise."""
    s = hi + dx
    big = np.abs(hi) >= np.abs(dx)
    err = np.where(big, (hi - s) + dx, (dx - s) + hi)
    lo = lo + err
    hi_new = s + lo
    lo = lo - (hi_new - s)
    return hi_new, lo


def solve_least_squares(matrix, rhs, method="auto", tol=1e-10, max_iter=None,
                        direct_limit=DIRECT_LIMIT):
    """Solve min |A x - b| over x for a (possibly sparse) tall matrix.

    ``method`` is "direct", "iterative", or "auto".  The direct route
    requires the matrix to have full column rank and raises otherwise;
    the iterative route runs LSQR to the relative tolerance ``tol``.
    """
    rhs = np.asarray(rhs, dtype=float).ravel()
    m, n = matrix.shape
    if len(rhs) != m:
        raise SolverError(f"rhs has {len(rhs)} entries, matrix has {m} rows")
    if m < n:
        raise SolverError(f"system is underdetermined: {m} rows, {n} columns")
    if method == "auto":
        method = "direct" if n <= direct_limit else "iterative"
    if method == "direct":
        return _solve_direct(matrix, rhs)
    if method == "iterative":
        return _solve_lsqr(matrix, rhs, tol=tol, max_iter=max_iter)
    raise SolverError(f"unknown solver method {method!r}")


def _solve_direct(matrix, rhs):
    dense = matrix.toarray() if scipy.sparse.issparse(matrix) else \
        np.asarray(matrix, dtype=float)
    m, n = dense.shape
    q, r, perm = scipy.linalg.qr(dense, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if n and (diag.min() == 0.0
              or diag.min() <= np.finfo(float).eps * max(m, n) * diag.max()):
        raise SolverError("column rank deficient - check pruning")

    def qr_solve(b):
        y = scipy.linalg.solve_triangular(r, q.T @ b, lower=False)
        x = np.empty_like(y)
        x[perm] = y
        return x

    x = qr_solve(rhs)
    resid = rhs - matrix @ x
    ortho = residual_orthogonality(matrix, resid)
    refinements = 0
    lo = None
    if ortho > ORTHO_TARGET:
        # near-consistent data: the residual is rounding noise and plain
        # refinement cannot rotate it out of the column space; refine into
        # a double-double pair against exactly rounded residuals instead
        hi = x
        lo = np.zeros_like(x)
        while True:
            resid = exact_residual(matrix, rhs, hi, lo)
            ortho = residual_orthogonality(matrix, resid)
            if ortho <= ORTHO_TARGET or refinements >= MAX_REFINE:
                break
            hi, lo = _double_double_add(hi, lo, qr_solve(resid))
            refinements += 1
        x = hi
    return SolveResult(coefficients=x, method="direct", iterations=0,
                       residual_norm=float(np.linalg.norm(resid)),
                       orthogonality=ortho, residual=resid,
                       refinements=refinements, coefficients_low=lo)


def _lsqr_core(matrix, rhs, tol, max_iter):
    """Golub-Kahan bidiagonalization with the standard rotation recurrences.

    Stops when the estimated residual is compatible with a consistent
    system at ``tol``, or when the estimated normal-equations residual
    satisfies the least-squares test at ``tol``.  Returns the iterate, the
    iteration count, and whether a stopping rule fired.
    """
    n = matrix.shape[1]
    at = matrix.T.tocsr() if scipy.sparse.issparse(matrix) else matrix.T

    x = np.zeros(n)
    u = rhs.copy()
    beta = float(np.linalg.norm(u))
    bnorm = beta
    if beta == 0.0:
        return x, 0, True
    u /= beta
    v = at @ u
    alpha = float(np.linalg.norm(v))
    if alpha == 0.0:
        # b is orthogonal to the range: zero is the least-squares solution
        return x, 0, True
    v /= alpha
    w = v.copy()
    phibar = beta
    rhobar = alpha
    anorm_sq = alpha * alpha
    xnorm = 0.0

    best_x = x.copy()
    best_score = math.inf
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        u = matrix @ v - alpha * u
        beta = float(np.linalg.norm(u))
        if beta > 0.0:
            u /= beta
        v = at @ u - beta * v
        alpha = float(np.linalg.norm(v))
        if alpha > 0.0:
            v /= alpha
        anorm_sq += alpha * alpha + beta * beta

        rho = math.hypot(rhobar, beta)
        cs = rhobar / rho
        sn = beta / rho
        theta = sn * alpha
        rhobar = -cs * alpha
        phi = cs * phibar
        phibar = sn * phibar

        x += (phi / rho) * w
        w = v - (theta / rho) * w
        xnorm = float(np.linalg.norm(x))

        anorm = math.sqrt(anorm_sq)
        rnorm = phibar
        arnorm = phibar * alpha * abs(cs)
        score = arnorm / (anorm * rnorm + 1e-300)
        if score < best_score:
            best_score = score
            best_x = x.copy()
        if rnorm <= tol * (bnorm + anorm * xnorm):
            converged = True
            break
        if score <= tol:
            converged = True
            break
        if alpha == 0.0 or beta == 0.0:
            converged = True
            break

    if not converged:
        x = best_x
    return x, iterations, converged


def _solve_lsqr(matrix, rhs, tol=1e-10, max_iter=None):
    if max_iter is None:
        max_iter = 10 * matrix.shape[1]

    # column equilibration: an invertible right scaling leaves the minimizer
    # unchanged but collapses the condition number LSQR has to fight
    if scipy.sparse.issparse(matrix):
        col_norms = np.sqrt(
            np.asarray(matrix.multiply(matrix).sum(axis=0)).ravel())
        inv = np.where(col_norms > 0.0, 1.0 / np.maximum(col_norms, 1e-300),
                       1.0)
        scaled = matrix.multiply(inv[None, :]).tocsr()
    else:
        col_norms = np.linalg.norm(matrix, axis=0)
        inv = np.where(col_norms > 0.0, 1.0 / np.maximum(col_norms, 1e-300),
                       1.0)
        scaled = matrix * inv

    y, iterations, converged = _lsqr_core(scaled, rhs, tol, max_iter)
    x = inv * y
    warning = None if converged else \
        f"iteration limit {max_iter} reached; best iterate returned"
    resid = rhs - matrix @ x
    ortho = residual_orthogonality(matrix, resid)
    refinements = 0
    lo = None
    if converged and ortho > ORTHO_TARGET:
        # same polish as the direct route: double-double coefficients
        # against exactly rounded residuals, corrections solved by LSQR
        hi = x
        lo = np.zeros_like(x)
        while True:
            resid = exact_residual(matrix, rhs, hi, lo)
            ortho = residual_orthogonality(matrix, resid)
            if ortho <= ORTHO_TARGET or refinements >= MAX_REFINE:
                break
            dy, _, step_ok = _lsqr_core(scaled, resid, tol, max_iter)
            if not step_ok:
                break
            hi, lo = _double_double_add(hi, lo, inv * dy)
            refinements += 1
        x = hi
    return SolveResult(coefficients=x, method="iterative",
                       iterations=iterations,
                       residual_norm=float(np.linalg.norm(resid)),
                       orthogonality=ortho, residual=resid, warning=warning,
                       refinements=refinements, coefficients_low=lo)


def evaluate_field(stencils, coefficients, points, index=None):
    """Evaluate the discrete solution at arbitrary points."""
    coefficients = np.asarray(coefficients, dtype=float).ravel()
    op = build_operator(points, stencils, "eval", index=index)
    return op.matrix @ coefficients


def error_norms(approx, exact):
    """Relative l1, l2, and max-norm errors of ``approx`` against ``exact``."""
    approx = np.asarray(approx, dtype=float).ravel()
    exact = np.asarray(exact, dtype=float).ravel()
    if approx.shape != exact.shape:
        raise SolverError("error norms need arrays of equal length")
    diff = approx - exact
    guard = 1e-300
    return {
        "rel_l1": float(np.abs(diff).sum() / (np.abs(exact).sum() + guard)),
        "rel_l2": float(np.linalg.norm(diff) / (np.linalg.norm(exact) + guard)),
        "rel_linf": float(np.abs(diff).max() / (np.abs(exact).max() + guard))
        if len(diff) else 0.0,
    }
