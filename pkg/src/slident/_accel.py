"""Loop-heavy kernels with a numba path and a pure-numpy fallback.

Set ``SLIDENT_DISABLE_NUMBA=1`` in the environment (before import) to force
the numpy implementations. Both variants are always importable through
:data:`NUMPY_KERNELS` and :data:`NUMBA_KERNELS` so they can be cross-checked
and benchmarked against each other.
"""

import os

import numpy as np

try:
    import numba as nb
except ImportError:  # pragma: no cover
    nb = None

_DISABLED = os.environ.get("SLIDENT_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")
HAVE_NUMBA = nb is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED

njit_kwargs = {"cache": True, "nogil": True, "fastmath": False}


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def var_recursion_np(G, E):
    """y(t) = sum_k G[k] y(t-k-1) + E[t], zero initial conditions."""
    n_lag = G.shape[0]
    N, m = E.shape
    Y = np.zeros((N, m))
    # Stack lags so each step is a single matvec: Gs @ [y(t-1); ...; y(t-L)].
    Gs = np.concatenate(list(G), axis=1) if n_lag else np.zeros((m, 0))
    past = np.zeros(m * n_lag)
    for t in range(N):
        yt = Gs @ past + E[t]
        Y[t] = yt
        if n_lag:
            past[m:] = past[:-m]
            past[:m] = yt
    return Y


def lagged_regressor_np(Y, T):
    """Rows t=T..N-1 of [y_1(t-1..t-T), ..., y_m(t-1..t-T)]."""
    N, m = Y.shape
    Np = N - T
    Psi = np.empty((Np, m * T))
    for k in range(1, T + 1):
        Psi[:, k - 1::T] = Y[T - k:N - k, :]
    return Psi


def one_step_predict_np(G, Y):
    """yhat(t) = sum_k G[k] y(t-k-1) for t = L..N-1 (L = number of lags)."""
    L = G.shape[0]
    N, m = Y.shape
    out = np.zeros((N - L, m))
    for k in range(L):
        out += Y[L - k - 1:N - k - 1, :] @ G[k].T
    return out


def assemble_dual_np(Cj, Mj, Sigma):
    """V = sum_j Cj[j] (x) Mj[j] + Sigma (x) I, Kronecker over (component, time)."""
    m = Sigma.shape[0]
    nj, Np, _ = Mj.shape
    V4 = (Cj.reshape(nj, m * m).T @ Mj.reshape(nj, Np * Np)).reshape(m, m, Np, Np)
    V = np.ascontiguousarray(V4.transpose(0, 2, 1, 3)).reshape(m * Np, m * Np)
    V += np.kron(Sigma, np.eye(Np))
    return V


def dual_trace_terms_np(Vinv, Mj):
    """out[j, a, b] = tr(Vinv_{ab} Mj[j]) with Vinv split in (Np x Np) blocks."""
    nj, Np, _ = Mj.shape
    m = Vinv.shape[0] // Np
    V4 = Vinv.reshape(m, Np, m, Np).transpose(0, 2, 3, 1).reshape(m * m, Np * Np)
    # tr(X M) = sum_{s,t} X[s,t] M[t,s]
    return (V4 @ Mj.reshape(nj, Np * Np).T).T.reshape(nj, m, m)


def block_traces_np(X, nb_, T):
    """out[a, b] = trace of the (T x T) block (a, b) of X."""
    X4 = X.reshape(nb_, T, nb_, T)
    return np.einsum("akbk->ab", X4)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @nb.njit(**njit_kwargs)
    def var_recursion_nb(G, E):
        n_lag = G.shape[0]
        N, m = E.shape
        Y = np.zeros((N, m))
        for t in range(N):
            for i in range(m):
                acc = E[t, i]
                for k in range(n_lag):
                    s = t - k - 1
                    if s < 0:
                        break
                    for j in range(m):
                        acc += G[k, i, j] * Y[s, j]
                Y[t, i] = acc
        return Y

    @nb.njit(**njit_kwargs)
    def lagged_regressor_nb(Y, T):
        N, m = Y.shape
        Np = N - T
        Psi = np.empty((Np, m * T))
        for t in range(Np):
            for j in range(m):
                for k in range(T):
                    Psi[t, j * T + k] = Y[t + T - k - 1, j]
        return Psi

    @nb.njit(**njit_kwargs)
    def one_step_predict_nb(G, Y):
        L = G.shape[0]
        N, m = Y.shape
        out = np.zeros((N - L, m))
        for t in range(N - L):
            for k in range(L):
                s = t + L - k - 1
                for i in range(m):
                    acc = 0.0
                    for j in range(m):
                        acc += G[k, i, j] * Y[s, j]
                    out[t, i] += acc
        return out

    @nb.njit(**njit_kwargs)
    def assemble_dual_nb(Cj, Mj, Sigma):
        m = Sigma.shape[0]
        nj = Mj.shape[0]
        Np = Mj.shape[1]
        V = np.zeros((m * Np, m * Np))
        for a in range(m):
            for b in range(a, m):
                for s in range(Np):
                    for t in range(Np):
                        acc = 0.0
                        for j in range(nj):
                            acc += Cj[j, a, b] * Mj[j, s, t]
                        V[a * Np + s, b * Np + t] = acc
                for s in range(Np):
                    V[a * Np + s, b * Np + s] += Sigma[a, b]
                if b != a:
                    for s in range(Np):
                        for t in range(Np):
                            V[b * Np + t, a * Np + s] = V[a * Np + s, b * Np + t]
        return V

    @nb.njit(**njit_kwargs)
    def dual_trace_terms_nb(Vinv, Mj):
        nj, Np, _ = Mj.shape
        m = Vinv.shape[0] // Np
        out = np.zeros((nj, m, m))
        for a in range(m):
            for b in range(m):
                for j in range(nj):
                    acc = 0.0
                    for s in range(Np):
                        for t in range(Np):
                            acc += Vinv[a * Np + s, b * Np + t] * Mj[j, t, s]
                    out[j, a, b] = acc
        return out

    @nb.njit(**njit_kwargs)
    def block_traces_nb(X, nb_, T):
        out = np.zeros((nb_, nb_))
        for a in range(nb_):
            for b in range(nb_):
                acc = 0.0
                for k in range(T):
                    acc += X[a * T + k, b * T + k]
                out[a, b] = acc
        return out


_NAMES = (
    "var_recursion",
    "lagged_regressor",
    "one_step_predict",
    "assemble_dual",
    "dual_trace_terms",
    "block_traces",
)

NUMPY_KERNELS = {name: globals()[name + "_np"] for name in _NAMES}
NUMBA_KERNELS = {name: globals()[name + "_nb"] for name in _NAMES} if HAVE_NUMBA else {}
ACTIVE_KERNELS = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS


def _dispatch(name):
    impl = ACTIVE_KERNELS[name]

    def call(*args):
        return impl(*[np.ascontiguousarray(a) if isinstance(a, np.ndarray) else a for a in args])

    call.__name__ = name
    call.__doc__ = NUMPY_KERNELS[name].__doc__
    return call


var_recursion = _dispatch("var_recursion")
lagged_regressor = _dispatch("lagged_regressor")
one_step_predict = _dispatch("one_step_predict")
assemble_dual = _dispatch("assemble_dual")
dual_trace_terms = _dispatch("dual_trace_terms")
block_traces = _dispatch("block_traces")


def backend():
    return "numba" if USE_NUMBA else "numpy"
