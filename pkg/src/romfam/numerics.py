"""Dense and sparse linear-algebra kernels used by every other module.

Everything works on plain numpy arrays and scipy sparse matrices in double
precision. Factorizations compare their pivots against a relative threshold
(``1e-14`` times the 1-norm of the input by default) so that singular inputs
fail loudly instead of silently returning garbage. All routines are pure
functions or immutable handles; independent factorizations may run
concurrently.
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    InstabilityError,
    RankDeficiencyError,
    SingularMatrixError,
    SizeCapError,
)

#: Relative pivot / rank threshold used by every factorization in the package.
DEFAULT_PIVOT_RTOL = 1e-14

#: Order above which dense O(n^3) solvers (Lyapunov, eigen) refuse to run.
MAX_DENSE_ORDER = 2000


def as_dense(M) -> np.ndarray:
    """Return ``M`` as a 2-D numpy array (densifying sparse input)."""
    if sp.issparse(M):
        return M.toarray()
    return np.atleast_2d(np.asarray(M))


def onenorm(M) -> float:
    """Matrix 1-norm for dense or sparse input."""
    if sp.issparse(M):
        return float(np.max(np.asarray(abs(M).sum(axis=0)))) if M.nnz else 0.0
    M = np.atleast_2d(np.asarray(M))
    return float(np.max(np.sum(np.abs(M), axis=0))) if M.size else 0.0


def _check_square(M, name: str) -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")


def lu_solve(A, B, pivot_rtol: float | None = None):
    """Solve ``A X = B`` by dense LU with partial pivoting.

    Parameters
    ----------
    A : (n, n) array_like
        Square coefficient matrix (real or complex).
    B : (n,) or (n, k) array_like
        Right-hand side(s).
    pivot_rtol : float, optional
        Pivot threshold relative to ``norm1(A)``; defaults to
        :data:`DEFAULT_PIVOT_RTOL`.

    Raises
    ------
    SingularMatrixError
        If any pivot of U falls below the threshold.
    """
    A = np.asarray(A)
    _check_square(A, "A")
    B = np.asarray(B)
    if B.shape[0] != A.shape[0]:
        raise ValueError(f"B has {B.shape[0]} rows, expected {A.shape[0]}")
    rtol = DEFAULT_PIVOT_RTOL if pivot_rtol is None else pivot_rtol
    lu, piv = sla.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if A.shape[0] and pivots.min() <= rtol * max(onenorm(A), 1e-300):
        raise SingularMatrixError(
            f"matrix is singular to working precision (pivot {pivots.min():.3e})"
        )
    X = sla.lu_solve((lu, piv), B)
    # one pass of iterative refinement: recovers the digits badly scaled
    # systems lose to conditioning, at the cost of a single extra solve
    X = X + sla.lu_solve((lu, piv), B - A @ X)
    return X


class ShiftedSolver:
    """Reusable factorization of ``sigma*E - A`` for one real shift.

    The handle is immutable and valid only for the shift it was built with;
    ``solve`` and ``solve_transpose`` may be called repeatedly and from
    several threads.
    """

    def __init__(self, E, A, sigma: float, pivot_rtol: float | None = None):
        if E.shape != A.shape:
            raise ValueError(f"E {E.shape} and A {A.shape} must have equal shapes")
        if E.shape[0] != E.shape[1]:
            raise ValueError(f"E must be square, got shape {E.shape}")
        self.sigma = float(sigma)
        rtol = DEFAULT_PIVOT_RTOL if pivot_rtol is None else pivot_rtol
        if sp.issparse(E) or sp.issparse(A):
            M = (self.sigma * sp.csc_matrix(E) - sp.csc_matrix(A)).tocsc()
            scale = max(onenorm(M), 1e-300)
            try:
                self._lu = spla.splu(M)
            except RuntimeError as exc:  # "Factor is exactly singular"
                raise SingularMatrixError(
                    f"sigma*E - A is singular at sigma={self.sigma:g}: {exc}"
                ) from exc
            umin = np.abs(self._lu.U.diagonal()).min()
            if umin <= rtol * scale:
                raise SingularMatrixError(
                    f"sigma*E - A is numerically singular at sigma={self.sigma:g}"
                )
            self._dense = None
        else:
            M = self.sigma * np.asarray(E, dtype=float) - np.asarray(A, dtype=float)
            scale = max(onenorm(M), 1e-300)
            lu, piv = sla.lu_factor(M)
            if np.abs(np.diag(lu)).min() <= rtol * scale:
                raise SingularMatrixError(
                    f"sigma*E - A is numerically singular at sigma={self.sigma:g}"
                )
            self._dense = (lu, piv)
            self._lu = None
        self._M = M

    def _raw_solve(self, b, trans: bool):
        if self._dense is not None:
            return sla.lu_solve(self._dense, b, trans=1 if trans else 0)
        if b.ndim == 1:
            return self._lu.solve(b, trans="T" if trans else "N")
        return np.column_stack(
            [self._lu.solve(b[:, j], trans="T" if trans else "N")
             for j in range(b.shape[1])]
        )

    def _refined_solve(self, b, trans: bool):
        b = np.asarray(b, dtype=float)
        x = self._raw_solve(b, trans)
        # Two refinement passes keep the forward error near machine precision
        # even for the badly scaled operators FEM assembly produces.
        for _ in range(2):
            if trans:
                r = b - (self._M.T @ x if sp.issparse(self._M) else self._M.T @ x)
            else:
                r = b - self._M @ x
            x = x + self._raw_solve(r, trans)
        return x

    def solve(self, b):
        """Return x with ``(sigma*E - A) x = b``."""
        return self._refined_solve(b, trans=False)

    def solve_transpose(self, b):
        """Return x with ``(sigma*E - A)^T x = b``."""
        return self._refined_solve(b, trans=True)


def shifted_factor(E, A, sigma: float, pivot_rtol: float | None = None) -> ShiftedSolver:
    """Factor ``sigma*E - A`` once for repeated resolvent solves."""
    return ShiftedSolver(E, A, sigma, pivot_rtol=pivot_rtol)


def gen_eig(A, E=None, return_vectors: bool = False):
    """Eigenvalues of the matrix pencil ``(A, E)``, deterministically ordered.

    Eigenvalues lambda satisfy ``A v = lambda E v`` and are sorted by
    (real part, imaginary part) ascending, so repeat calls on identical input
    return identical output.

    Parameters
    ----------
    A, E : (n, n) array_like
        Pencil matrices; ``E=None`` means the identity. Sparse input is
        densified (order capped at :data:`MAX_DENSE_ORDER`).
    return_vectors : bool
        Also return right eigenvectors as columns, reordered consistently.

    Raises
    ------
    SingularMatrixError
        If E is singular (infinite eigenvalues).
    SizeCapError
        If the order exceeds the dense cap.
    """
    Ad = as_dense(A).astype(float)
    _check_square(Ad, "A")
    if Ad.shape[0] > MAX_DENSE_ORDER:
        raise SizeCapError(
            f"order {Ad.shape[0]} exceeds dense eigen cap {MAX_DENSE_ORDER}"
        )
    if E is None:
        out = sla.eig(Ad, right=return_vectors)
    else:
        Ed = as_dense(E).astype(float)
        if Ed.shape != Ad.shape:
            raise ValueError(f"A {Ad.shape} and E {Ed.shape} must have equal shapes")
        out = sla.eig(Ad, Ed, right=return_vectors)
    w = out[0] if return_vectors else out
    if not np.all(np.isfinite(w)):
        raise SingularMatrixError("pencil has infinite eigenvalues (E is singular)")
    order = np.lexsort((w.imag, w.real))
    if return_vectors:
        return w[order], out[1][:, order]
    return w[order]


def lyapunov_solve(A, E, Q, check_stability: bool = True) -> np.ndarray:
    """Solve the generalized continuous Lyapunov equation.

    Returns the symmetric P with ``A P E^T + E P A^T + Q = 0`` for a stable
    pencil ``(A, E)`` and symmetric Q. The dense Bartels-Stewart kernel runs
    on the E-transformed standard equation; iterative refinement against the
    original generalized residual recovers the digits an ill-conditioned E
    would otherwise cost, so the residual lands near machine precision
    instead of ``eps * cond(E)``.

    Parameters
    ----------
    A, E : (n, n) array_like
        Pencil matrices, eigenvalues strictly in the open left half-plane;
        ``E=None`` means identity.
    Q : (n, n) array_like
        Symmetric inhomogeneity.
    check_stability : bool
        Skip the O(n^3) spectral pre-check when the caller has already
        established stability.

    Raises
    ------
    InstabilityError
        If any pencil eigenvalue has nonnegative real part.
    SizeCapError
        Above order :data:`MAX_DENSE_ORDER`.
    """
    Ad = as_dense(A).astype(float)
    _check_square(Ad, "A")
    n = Ad.shape[0]
    if n > MAX_DENSE_ORDER:
        raise SizeCapError(f"order {n} exceeds dense Lyapunov cap {MAX_DENSE_ORDER}")
    Qd = as_dense(Q).astype(float)
    if Qd.shape != Ad.shape:
        raise ValueError(f"Q {Qd.shape} does not match A {Ad.shape}")
    qnorm = max(onenorm(Qd), 1e-300)
    if onenorm(Qd - Qd.T) > 1e-8 * qnorm:
        raise ValueError("Q must be symmetric")
    Qd = 0.5 * (Qd + Qd.T)
    Ed = None if E is None else as_dense(E).astype(float)
    if Ed is not None and Ed.shape != Ad.shape:
        raise ValueError(f"E {Ed.shape} does not match A {Ad.shape}")
    if check_stability:
        w = gen_eig(Ad, Ed)
        if w.size and w.real.max() >= 0.0:
            raise InstabilityError(
                f"pencil eigenvalue with Re = {w.real.max():.3e} >= 0"
            )

    if Ed is None:
        elu = None
        At = Ad
    else:
        elu = sla.lu_factor(Ed)
        if np.abs(np.diag(elu[0])).min() <= DEFAULT_PIVOT_RTOL * max(onenorm(Ed), 1e-300):
            raise SingularMatrixError("E is numerically singular")
        At = sla.lu_solve(elu, Ad)
    # Real Schur form computed once; reused by every refinement pass.
    T, Z = sla.schur(At, output="real")

    def core_solve(Rhs):
        # solve At X + X At^T + Rhs = 0 through the Schur kernel
        if elu is not None:
            Rhs = sla.lu_solve(elu, sla.lu_solve(elu, Rhs).T).T
        Rhs = 0.5 * (Rhs + Rhs.T)
        Qh = Z.T @ Rhs @ Z
        X, scale, info = sla.lapack.dtrsyl(T, T, -Qh, tranb="T")
        if info < 0:
            raise sla.LinAlgError(f"dtrsyl failed with info={info}")
        X = Z @ (X / scale) @ Z.T
        return 0.5 * (X + X.T)

    def residual(P):
        if Ed is None:
            return Ad @ P + P @ Ad.T + Qd
        return Ad @ P @ Ed.T + Ed @ P @ Ad.T + Qd

    P = core_solve(Qd)
    res = residual(P)
    res_norm = onenorm(res)
    for _ in range(3):
        if res_norm <= 1e-14 * qnorm:
            break
        dP = core_solve(res)
        P_new = 0.5 * ((P + dP) + (P + dP).T)
        res_new = residual(P_new)
        if onenorm(res_new) >= res_norm:
            break
        P, res, res_norm = P_new, res_new, onenorm(res_new)
    return P


def biorthonormalize(V, W, E=None):
    """Rescale the pair of bases so that ``W^T E V = I``.

    Column spans are preserved: the new bases are ``V U^{-1}`` and
    ``W P L^{-T}`` from the pivoted LU of ``W^T E V``.

    Raises
    ------
    RankDeficiencyError
        If ``W^T E V`` is numerically singular.
    """
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    if V.shape != W.shape:
        raise ValueError(f"V {V.shape} and W {W.shape} must have equal shapes")
    EV = V if E is None else (E @ V if not sp.issparse(E) else E.dot(V))
    M = W.T @ EV
    k = M.shape[0]
    P, L, U = sla.lu(M)
    if k and np.abs(np.diag(U)).min() <= DEFAULT_PIVOT_RTOL * max(onenorm(M), 1e-300):
        raise RankDeficiencyError("W^T E V is numerically singular")
    Uinv = sla.solve_triangular(U, np.eye(k))
    Linv = sla.solve_triangular(L, np.eye(k), lower=True, unit_diagonal=True)
    V2 = V @ Uinv
    W2 = W @ (P @ Linv.T)
    return V2, W2
