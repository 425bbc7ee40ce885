"""Constitutive-parameter estimation for lumped networks.

Fits the positive parameters of a presupposed network topology so that its
simulated step response matches reference data. Fitting an ODE output
against its coefficients is nonlinear least squares, so the solver is a
damped Gauss-Newton (Levenberg-Marquardt) loop on log-parameters: the log
map enforces positivity without box constraints and makes the
finite-difference step scale-free. The match is judged by the normalized
root-mean-square error of the output; parameter recovery is not promised
(series components, for instance, are only identifiable through their
combination).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError, TopologyError
from .lpm import CellComplex, check_params, generate_equations
from .lti import TimeSeries, simulate

#: Forward-difference step in log-parameter space.
FD_STEP = 1e-6
#: Relative decrease of the squared residual that counts as converged.
SSE_RTOL = 1e-10
#: Gradient norm that counts as converged.
GRAD_ATOL = 1e-8
MAX_ITER = 500


def nrmse(y_hat, y_ref) -> float:
    """Root-mean-square error normalized by the reference variation interval.

    Accepts two :class:`TimeSeries` on identical grids or two plain arrays.
    Raises when the reference has zero variation (the normalization is
    undefined).
    """
    if isinstance(y_hat, TimeSeries) and isinstance(y_ref, TimeSeries):
        if len(y_hat.t) != len(y_ref.t) or not np.allclose(
                y_hat.t, y_ref.t, rtol=1e-12, atol=1e-12):
            raise ValueError("time grids differ")
        a, b = y_hat.y, y_ref.y
    else:
        a = np.asarray(y_hat, dtype=float)
        b = np.asarray(y_ref, dtype=float)
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    span = float(b.max() - b.min())
    if span <= 0.0:
        raise ValueError("reference signal is constant: NRMSE normalization "
                         "is undefined")
    return float(np.sqrt(np.mean((a - b) ** 2)) / span)


@dataclass
class FitProblem:
    """Reference data plus the network structure to fit against it."""

    complex: CellComplex
    data: TimeSeries
    input_step: float
    theta0: dict
    bounds: dict | None = None
    dt: float | None = None

    def __post_init__(self):
        self.complex.validate()
        check_params(self.complex, self.theta0)
        t = self.data.t
        if len(t) < 2:
            raise ValueError("need at least two data samples")
        steps = np.diff(t)
        if self.dt is None:
            self.dt = float(steps[0])
        if abs(t[0]) > 1e-9 * self.dt or np.any(
                np.abs(steps - self.dt) > 1e-6 * self.dt):
            raise ValueError("data must sit on the uniform simulation grid "
                             "starting at t = 0")
        if self.bounds:
            for name, (lo, hi) in self.bounds.items():
                if not (0 < lo <= hi):
                    raise ValueError(f"invalid bounds for {name!r}: ({lo}, {hi})")
                v = self.theta0.get(name)
                if v is not None and not (lo <= v <= hi):
                    raise ValueError(f"theta0[{name!r}]={v} outside bounds")

    @property
    def state_choice(self) -> str:
        return ("displacement"
                if self.complex.io.output_quantity == "displacement"
                else "temperature")


@dataclass
class FitResult:
    theta: dict
    nrmse: float
    converged: bool
    iterations: int
    residual_history: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "theta": dict(sorted(self.theta.items())),
            "nrmse": self.nrmse,
            "converged": self.converged,
            "iterations": self.iterations,
        }


def simulate_theta(problem: FitProblem, theta: dict) -> np.ndarray:
    """Step response of the network at the given parameters, on the data grid."""
    sys = generate_equations(problem.complex, theta, problem.state_choice)
    out = simulate(sys, u=problem.input_step, dt=problem.dt,
                   t_end=float(problem.data.t[-1]))
    return out.y[:, 0]


def _lm_single(problem: FitProblem, z0: np.ndarray, names: list):
    """One Levenberg-Marquardt run from a log-parameter start point."""
    y_ref = problem.data.y[:, 0]

    def residual(z):
        theta = dict(zip(names, np.exp(z)))
        try:
            return simulate_theta(problem, theta) - y_ref
        except (ValueError, TopologyError, np.linalg.LinAlgError) as exc:
            raise FitError(f"inner simulation failed: {exc}") from exc

    lo = np.full(len(names), -np.inf)
    hi = np.full(len(names), np.inf)
    if problem.bounds:
        for i, name in enumerate(names):
            if name in problem.bounds:
                lo[i] = math.log(problem.bounds[name][0])
                hi[i] = math.log(problem.bounds[name][1])

    z = np.clip(z0, lo, hi)
    r = residual(z)
    if not np.all(np.isfinite(r)):
        raise FitError("non-finite residual at the initial parameters")
    sse = float(r @ r)
    history = [sse]
    lam = 1e-3
    converged = False
    iterations = 0

    for iterations in range(1, MAX_ITER + 1):
        J = np.empty((len(r), len(names)))
        for i in range(len(names)):
            zp = z.copy()
            zp[i] += FD_STEP
            rp = residual(zp)
            if not np.all(np.isfinite(rp)):
                rp = r  # dead direction; zero column
            J[:, i] = (rp - r) / FD_STEP
        g = J.T @ r
        if float(np.linalg.norm(g)) < GRAD_ATOL:
            converged = True
            break
        JtJ = J.T @ J
        diag = np.clip(np.diag(JtJ), 1e-12 * max(np.diag(JtJ).max(), 1e-300),
                       None)
        accepted = False
        for _ in range(25):
            try:
                step = np.linalg.solve(JtJ + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            z_new = np.clip(z + step, lo, hi)
            r_new = residual(z_new)
            if np.all(np.isfinite(r_new)):
                sse_new = float(r_new @ r_new)
                if sse_new < sse:
                    accepted = True
                    break
            lam *= 3.0
        if not accepted:
            break
        drop = sse - sse_new
        z, r, sse = z_new, r_new, sse_new
        history.append(sse)
        lam = max(lam / 3.0, 1e-14)
        if drop <= SSE_RTOL * max(sse, 1e-300):
            converged = True
            break

    theta = dict(zip(names, np.exp(z)))
    return theta, sse, converged, iterations, history


def fit(problem: FitProblem, n_starts: int = 1, seed: int = 0) -> FitResult:
    """Estimate the network parameters from the reference response.

    Runs Levenberg-Marquardt from ``theta0`` (plus ``n_starts - 1``
    deterministic seeded log-space perturbations when multi-start is
    requested) and returns the run with the lowest squared residual, ties
    resolved by start index. The residual history of accepted steps is
    non-increasing by construction.
    """
    names = sorted(problem.theta0)
    z0 = np.log(np.array([problem.theta0[k] for k in names], dtype=float))
    rng = np.random.default_rng(seed)
    starts = [z0]
    for _ in range(max(n_starts, 1) - 1):
        starts.append(z0 + rng.normal(0.0, 0.2, size=len(names)))

    best = None
    for idx, z in enumerate(starts):
        theta, sse, converged, iterations, history = _lm_single(problem, z, names)
        if best is None or sse < best[1]:
            best = (theta, sse, converged, iterations, history, idx)
    theta, _, converged, iterations, history, _ = best
    y_fit = simulate_theta(problem, theta)
    return FitResult(theta=theta, nrmse=nrmse(y_fit, problem.data.y[:, 0]),
                     converged=converged, iterations=iterations,
                     residual_history=history)
