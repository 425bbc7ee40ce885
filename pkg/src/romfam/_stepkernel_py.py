"""Pure-python fallback for the compiled trapezoidal stepping kernel."""

import numpy as np


def trapezoidal_loop(Ad, Bd2, C, u, x0):
    """Propagate ``x[k+1] = Ad x[k] + Bd2 (u[k] + u[k+1])`` and record y = C x.

    ``Ad`` and ``Bd2`` already contain the factored trapezoidal step matrices;
    ``u`` has one row per time point. Returns y with shape (len(u), p).
    """
    N = u.shape[0]
    Y = np.empty((N, C.shape[0]))
    x = np.array(x0, dtype=float, copy=True)
    for k in range(N):
        Y[k] = C @ x
        if k + 1 < N:
            x = Ad @ x + Bd2 @ (u[k] + u[k + 1])
    return Y
