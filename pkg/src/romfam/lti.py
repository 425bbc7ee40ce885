"""State-space systems: representation, conversion, simulation, norms, poles,
and the dense balanced-truncation baseline.

Systems are immutable containers around numpy arrays or scipy sparse
matrices. There is deliberately no feed-through term: every model produced by
the generators here is strictly proper, which keeps the H2 norm finite on its
whole domain. Descriptor systems with singular E are rejected at
construction.
"""

import csv
import pathlib

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import stepping
from .errors import InstabilityError, SingularMatrixError, SizeCapError
from .numerics import (
    DEFAULT_PIVOT_RTOL,
    MAX_DENSE_ORDER,
    as_dense,
    gen_eig,
    lu_solve,
    lyapunov_solve,
    onenorm,
)

#: Largest order simulated through the dense precomputed-step kernel;
#: larger systems use the factored sparse loop.
DENSE_SIM_LIMIT = 800


def _input_map(B, n: int, name: str = "B") -> np.ndarray:
    """Coerce to a dense (n, m) array; 1-D input becomes a single column."""
    if sp.issparse(B):
        B = B.toarray()
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    if B.ndim != 2 or B.shape[0] != n:
        raise ValueError(f"{name} has shape {B.shape}, expected ({n}, m)")
    return B


def _output_map(C, n: int, name: str = "C") -> np.ndarray:
    """Coerce to a dense (p, n) array; 1-D input becomes a single row."""
    if sp.issparse(C):
        C = C.toarray()
    C = np.asarray(C, dtype=float)
    if C.ndim == 1:
        C = C.reshape(1, -1)
    if C.ndim != 2 or C.shape[1] != n:
        raise ValueError(f"{name} has shape {C.shape}, expected (p, {n})")
    return C


def _check_nonsingular(M, name: str) -> None:
    if sp.issparse(M):
        scale = max(onenorm(M), 1e-300)
        try:
            lu = spla.splu(M.tocsc())
        except RuntimeError as exc:
            raise SingularMatrixError(f"{name} is singular: {exc}") from exc
        if np.abs(lu.U.diagonal()).min() <= DEFAULT_PIVOT_RTOL * scale:
            raise SingularMatrixError(f"{name} is numerically singular")
    else:
        M = np.asarray(M, dtype=float)
        lu, _ = sla.lu_factor(M)
        if np.abs(np.diag(lu)).min() <= DEFAULT_PIVOT_RTOL * max(onenorm(M), 1e-300):
            raise SingularMatrixError(f"{name} is numerically singular")


class StateSpaceSystem:
    """First-order LTI system ``E x' = A x + B u``, ``y = C x``.

    E and A may be dense arrays or scipy sparse matrices; B and C are stored
    dense. E must be nonsingular (descriptor DAE forms are rejected). The
    object is treated as immutable after construction.
    """

    def __init__(self, E, A, B, C, validate: bool = True):
        E = np.atleast_2d(np.asarray(E, dtype=float)) if not sp.issparse(E) else E
        A = np.atleast_2d(np.asarray(A, dtype=float)) if not sp.issparse(A) else A
        if E.shape != A.shape or E.shape[0] != E.shape[1]:
            raise ValueError(f"inconsistent E {E.shape} / A {A.shape}")
        n = E.shape[0]
        self.E = E
        self.A = A
        self.B = _input_map(B, n)
        self.C = _output_map(C, n)
        if validate:
            if not (np.all(np.isfinite(self.B)) and np.all(np.isfinite(self.C))):
                raise ValueError("B and C must be finite")
            _check_nonsingular(self.E, "E (descriptor/DAE systems are unsupported)")

    @property
    def n(self) -> int:
        return self.E.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.E) or sp.issparse(self.A)

    def dense_EA(self):
        return as_dense(self.E), as_dense(self.A)

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"StateSpaceSystem(n={self.n}, m={self.m}, p={self.p}, {kind})"


def _chol_psd(M, name: str, scale: float) -> None:
    # PSD check through a shifted Cholesky; cheap and adequate for assembled
    # FEM/network matrices.
    Md = as_dense(M)
    if onenorm(Md - Md.T) > 1e-8 * max(scale, 1e-300):
        raise ValueError(f"{name} must be symmetric")
    shift = 1e-10 * max(scale, 1e-300)
    try:
        sla.cholesky(Md + shift * np.eye(Md.shape[0]), lower=True)
    except sla.LinAlgError as exc:
        raise ValueError(f"{name} must be positive semi-definite") from exc


class SecondOrderSystem:
    """Second-order form ``M q'' + D q' + K q = F u``, ``y = C_out q``.

    M must be symmetric positive definite; D and K symmetric positive
    semi-definite. These checks are the dissipativity gate: any system passing
    them converts to a stable first-order model (strictly stable when D is
    positive definite).
    """

    def __init__(self, M, D, K, F, C_out, validate: bool = True):
        M = np.atleast_2d(np.asarray(M, dtype=float)) if not sp.issparse(M) else M
        D = np.atleast_2d(np.asarray(D, dtype=float)) if not sp.issparse(D) else D
        K = np.atleast_2d(np.asarray(K, dtype=float)) if not sp.issparse(K) else K
        n = M.shape[0]
        for name, mat in (("M", M), ("D", D), ("K", K)):
            if mat.shape != (n, n):
                raise ValueError(f"{name} has shape {mat.shape}, expected {(n, n)}")
        self.M, self.D, self.K = M, D, K
        self.F = _input_map(F, n, "F")
        self.C_out = _output_map(C_out, n, "C_out")
        if validate:
            Md = as_dense(M)
            try:
                sla.cholesky(Md, lower=True)
            except sla.LinAlgError as exc:
                raise ValueError("mass matrix M must be positive definite") from exc
            if onenorm(Md - Md.T) > 1e-8 * max(onenorm(Md), 1e-300):
                raise ValueError("mass matrix M must be symmetric")
            _chol_psd(K, "K", onenorm(K))
            _chol_psd(D, "D", max(onenorm(D), onenorm(K)))

    @property
    def n_dof(self) -> int:
        return self.M.shape[0]

    @property
    def m(self) -> int:
        return self.F.shape[1]

    @property
    def p(self) -> int:
        return self.C_out.shape[0]

    def __repr__(self):
        return f"SecondOrderSystem(n_dof={self.n_dof}, m={self.m}, p={self.p})"


class TimeSeries:
    """Sampled multi-channel signal on a strictly increasing time grid."""

    def __init__(self, t, y):
        t = np.asarray(t, dtype=float).ravel()
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if len(t) != y.shape[0]:
            raise ValueError(f"{len(t)} times vs {y.shape[0]} samples")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValueError("time series values must be finite")
        self.t = t
        self.y = y

    @property
    def p(self) -> int:
        return self.y.shape[1]

    def __len__(self):
        return len(self.t)

    def to_csv(self, path) -> None:
        """Write as CSV with header ``t,y1,...,yp``."""
        header = ",".join(["t"] + [f"y{j + 1}" for j in range(self.p)])
        data = np.column_stack([self.t, self.y])
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
        if not header or header[0].strip() != "t":
            raise ValueError(f"expected header starting with 't', got {header!r}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1:])


def to_first_order(sos: SecondOrderSystem) -> StateSpaceSystem:
    """Rewrite a second-order system as twice as many first-order equations.

    Uses the companion form ``E = blockdiag(I, M)``,
    ``A = [[0, I], [-K, -D]]``, ``B = [0; F]``, ``C = [C_out, 0]``, which
    leaves the transfer function ``C_out (s^2 M + s D + K)^{-1} F`` unchanged.
    """
    n = sos.n_dof
    sparse = any(sp.issparse(M) for M in (sos.M, sos.D, sos.K))
    if sparse:
        I = sp.eye(n, format="csr")
        Z = sp.csr_matrix((n, n))
        E = sp.block_diag([I, sp.csr_matrix(sos.M)], format="csc")
        A = sp.bmat([[Z, I], [-sp.csr_matrix(sos.K), -sp.csr_matrix(sos.D)]],
                    format="csc")
    else:
        I = np.eye(n)
        Z = np.zeros((n, n))
        E = np.block([[I, Z], [Z, as_dense(sos.M)]])
        A = np.block([[Z, I], [-as_dense(sos.K), -as_dense(sos.D)]])
    B = np.vstack([np.zeros((n, sos.m)), sos.F])
    C = np.hstack([sos.C_out, np.zeros((sos.p, n))])
    # E is block diag(I, SPD M): nonsingular by the mass-matrix invariant.
    return StateSpaceSystem(E, A, B, C, validate=False)


def _resolvent_apply(sys: StateSpaceSystem, s: complex, B: np.ndarray) -> np.ndarray:
    """Refined solve of ``(s E - A) X = B`` in complex arithmetic."""
    if sys.is_sparse:
        M = (s * sp.csc_matrix(sys.E, dtype=complex)
             - sp.csc_matrix(sys.A, dtype=complex)).tocsc()
        try:
            lu = spla.splu(M)
        except RuntimeError as exc:
            raise SingularMatrixError(f"s={s} is a pole of the system") from exc
        if np.abs(lu.U.diagonal()).min() <= DEFAULT_PIVOT_RTOL * max(onenorm(M), 1e-300):
            raise SingularMatrixError(f"s={s} is numerically a pole of the system")

        def solve(rhs):
            return np.column_stack([lu.solve(rhs[:, j]) for j in range(rhs.shape[1])])

        B = B.astype(complex)
        X = solve(B)
        X = X + solve(B - M @ X)
        return X
    M = s * sys.E - sys.A
    return lu_solve(M, B.astype(complex))


def eval_transfer(sys: StateSpaceSystem, s: complex) -> np.ndarray:
    """Evaluate ``G(s) = C (s E - A)^{-1} B`` as a (p, m) complex matrix."""
    return sys.C @ _resolvent_apply(sys, complex(s), sys.B)


def eval_transfer_derivative(sys: StateSpaceSystem, s: complex) -> np.ndarray:
    """d/ds of the transfer function: ``-C (sE - A)^{-1} E (sE - A)^{-1} B``."""
    s = complex(s)
    X = _resolvent_apply(sys, s, sys.B)
    Y = _resolvent_apply(sys, s, np.asarray(sys.E @ X))
    return -(sys.C @ Y)


def poles(sys: StateSpaceSystem) -> np.ndarray:
    """All generalized eigenvalues of (A, E), deterministically ordered."""
    Ed, Ad = sys.dense_EA()
    return gen_eig(Ad, Ed)


def is_stable(sys: StateSpaceSystem) -> bool:
    """True when every pole has strictly negative real part."""
    return bool(np.all(poles(sys).real < 0.0))


def h2_norm(sys: StateSpaceSystem, check_stability: bool = True) -> float:
    """H2 norm ``sqrt(trace(C P C^T))`` with P the controllability gramian.

    P solves ``A P E^T + E P A^T + B B^T = 0``; the norm is infinite (and an
    :class:`InstabilityError` is raised) for unstable systems.
    """
    if check_stability and not is_stable(sys):
        raise InstabilityError("H2 norm is infinite for an unstable system")
    Ed, Ad = sys.dense_EA()
    P = lyapunov_solve(Ad, Ed, sys.B @ sys.B.T, check_stability=False)
    val = float(np.trace(sys.C @ P @ sys.C.T))
    return float(np.sqrt(max(val, 0.0)))


def difference_system(sys1: StateSpaceSystem, sys2: StateSpaceSystem) -> StateSpaceSystem:
    """Realization of ``G1(s) - G2(s)`` of order ``n1 + n2``."""
    if sys1.m != sys2.m or sys1.p != sys2.p:
        raise ValueError(
            f"I/O dims differ: ({sys1.m},{sys1.p}) vs ({sys2.m},{sys2.p})"
        )
    if sys1.is_sparse or sys2.is_sparse:
        E = sp.block_diag([sp.csc_matrix(sys1.E), sp.csc_matrix(sys2.E)],
                          format="csc")
        A = sp.block_diag([sp.csc_matrix(sys1.A), sp.csc_matrix(sys2.A)],
                          format="csc")
    else:
        E = sla.block_diag(sys1.E, sys2.E)
        A = sla.block_diag(sys1.A, sys2.A)
    B = np.vstack([sys1.B, sys2.B])
    C = np.hstack([sys1.C, -sys2.C])
    return StateSpaceSystem(E, A, B, C, validate=False)


def _input_samples(u, t: np.ndarray, m: int) -> np.ndarray:
    if u is None:
        return np.zeros((len(t), m))
    if isinstance(u, TimeSeries):
        if u.y.shape[1] != m:
            raise ValueError(f"input series has {u.y.shape[1]} channels, expected {m}")
        if u.t[0] > t[0] + 1e-12 or u.t[-1] < t[-1] - 1e-12:
            raise ValueError("input series does not cover the simulation horizon")
        return np.column_stack(
            [np.interp(t, u.t, u.y[:, j]) for j in range(m)]
        )
    if callable(u):
        U = np.array([np.broadcast_to(np.asarray(u(tk), dtype=float), (m,))
                      for tk in t])
        return U
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        return np.full((len(t), m), float(u))
    if u.shape == (m,):
        return np.tile(u, (len(t), 1))
    raise ValueError(f"cannot interpret input of shape {u.shape}")


def simulate(sys: StateSpaceSystem, u=None, x0=None, *, dt: float,
             t_end: float) -> TimeSeries:
    """Integrate ``E x' = A x + B u`` with the implicit trapezoidal rule.

    Parameters
    ----------
    u : None, scalar, (m,) array, callable t -> u(t), or TimeSeries
        ``None`` is zero input; a scalar or vector is a constant (step)
        input; a TimeSeries is linearly interpolated onto the grid.
    x0 : (n,) array, optional
        Initial state, default zero.
    dt, t_end : float
        Fixed step size and final time. The scheme is A-stable with global
        error O(dt^2).
    """
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    N = int(round(t_end / dt)) + 1
    t = np.arange(N) * dt
    U = _input_samples(u, t, sys.m)
    x = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    if x.shape != (sys.n,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({sys.n},)")

    if not sys.is_sparse and sys.n <= DENSE_SIM_LIMIT:
        E, A = sys.dense_EA()
        F1 = E - 0.5 * dt * A
        F2 = E + 0.5 * dt * A
        try:
            Ad = lu_solve(F1, F2)
            Bd2 = lu_solve(F1, sys.B) * (0.5 * dt)
        except SingularMatrixError as exc:
            raise SingularMatrixError(
                f"trapezoidal step matrix E - dt/2 A is singular at dt={dt:g}"
            ) from exc
        Y = stepping.trapezoidal_loop(
            np.ascontiguousarray(Ad), np.ascontiguousarray(Bd2),
            np.ascontiguousarray(sys.C), np.ascontiguousarray(U), x)
        return TimeSeries(t, Y)

    E = sp.csc_matrix(sys.E)
    A = sp.csc_matrix(sys.A)
    F1 = (E - 0.5 * dt * A).tocsc()
    F2 = (E + 0.5 * dt * A).tocsr()
    try:
        lu = spla.splu(F1)
    except RuntimeError as exc:
        raise SingularMatrixError(
            f"trapezoidal step matrix E - dt/2 A is singular at dt={dt:g}"
        ) from exc
    Y = np.empty((N, sys.p))
    for k in range(N):
        Y[k] = sys.C @ x
        if k + 1 < N:
            rhs = F2 @ x + (0.5 * dt) * (sys.B @ (U[k] + U[k + 1]))
            x = lu.solve(rhs)
    return TimeSeries(t, Y)


def _psd_factor(P: np.ndarray) -> np.ndarray:
    w, U = sla.eigh(0.5 * (P + P.T))
    w = np.clip(w, 0.0, None)
    keep = w > (w.max() if w.size else 0.0) * 1e-14
    return U[:, keep] * np.sqrt(w[keep])


def balanced_truncation(sys: StateSpaceSystem, r: int):
    """Gramian-based square-root reduction to order ``r``.

    Removes the states that are weakly controllable and observable at once.
    Returns ``(rom, hankel_values)`` where the descending Hankel values give
    the classical sampled-frequency error bound ``2 * sum(hsv[r:])``.

    Dense-only baseline: input above order :data:`MAX_DENSE_ORDER` is
    rejected.
    """
    n = sys.n
    if n > MAX_DENSE_ORDER:
        raise SizeCapError(f"order {n} exceeds balanced-truncation cap {MAX_DENSE_ORDER}")
    if not 1 <= r <= n:
        raise ValueError(f"target order {r} not in [1, {n}]")
    if not is_stable(sys):
        raise InstabilityError("balanced truncation requires a stable system")
    Ed, Ad = sys.dense_EA()
    P = lyapunov_solve(Ad, Ed, sys.B @ sys.B.T, check_stability=False)
    Q = lyapunov_solve(Ad.T, Ed.T, sys.C.T @ sys.C, check_stability=False)
    Zp = _psd_factor(P)
    Zq = _psd_factor(Q)
    U, sv, Vt = sla.svd(Zq.T @ Ed @ Zp, full_matrices=False)
    rank = int(np.sum(sv > sv[0] * 1e-13)) if sv.size else 0
    k = min(r, rank)
    s12 = 1.0 / np.sqrt(sv[:k])
    W = Zq @ U[:, :k] * s12
    V = Zp @ Vt[:k].T * s12
    rom = StateSpaceSystem(W.T @ Ed @ V, W.T @ Ad @ V, W.T @ sys.B, sys.C @ V,
                           validate=False)
    return rom, sv[:rank]


def save_system(sys: StateSpaceSystem, directory) -> None:
    """Write E, A, B, C as Matrix Market files (one file per matrix)."""
    d = pathlib.Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, M in (("E", sys.E), ("A", sys.A), ("B", sys.B), ("C", sys.C)):
        scipy.io.mmwrite(str(d / f"{name}.mtx"), sp.coo_matrix(M) if sp.issparse(M) else np.asarray(M))


def load_system(directory) -> StateSpaceSystem:
    """Read a system written by :func:`save_system`."""
    d = pathlib.Path(directory)
    mats = {}
    for name in ("E", "A", "B", "C"):
        path = d / f"{name}.mtx"
        if not path.exists():
            raise FileNotFoundError(f"missing matrix file {path}")
        M = scipy.io.mmread(str(path))
        mats[name] = M.tocsc() if sp.issparse(M) else np.asarray(M)
    return StateSpaceSystem(mats["E"], mats["A"], as_dense(mats["B"]),
                            as_dense(mats["C"]))
