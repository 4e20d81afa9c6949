"""Lowest eigenpairs of the mean-field operator.

The iterative solver is a block locally-optimal preconditioned method
(LOBPCG): each step does a Rayleigh-Ritz projection on the span of the
current block ``X``, the preconditioned residuals ``W`` and the previous
search directions ``P``.  A few guard vectors beyond the requested ``k``
are carried so that the last wanted pair converges at the same rate as the
others.  Vectors are handled as rows of flat Euclidean-normalised arrays;
the returned orbitals are rescaled to unit discrete norm.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .exceptions import ConfigError, SolverError
from .grid import KineticInverse
from .operator import MeanFieldOperator

__all__ = ["EigenSolution", "lowest_eigenpairs", "dense_oracle", "lobpcg", "DENSE_LIMIT"]

logger = logging.getLogger(__name__)

#: Largest operator dimension the dense oracle accepts.
DENSE_LIMIT = 4096


@dataclass
class EigenSolution:
    """Eigenpairs sorted ascending.

    Attributes
    ----------
    eigenvalues : ndarray, shape (k,)
    eigenvectors : ndarray, shape (k, 2, n, n, n)
        Orthonormal in the discrete inner product.
    residual_norms : ndarray, shape (k,)
        Discrete ``||H psi - eps psi||`` per pair.
    iterations : int
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual_norms: np.ndarray
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)


def _orth(V: np.ndarray, drop: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (rows) of the span of the rows of ``V``.

    Rows are normalised first, then a pivoted QR drops directions whose
    pivot falls below ``drop``.
    """
    if V.shape[0] == 0:
        return V
    norms = np.linalg.norm(V, axis=1)
    keep = norms > 0.0
    V = V[keep] / norms[keep, None]
    if V.shape[0] == 0:
        return V
    Q, R, _ = scipy.linalg.qr(V.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    r = int(np.sum(diag > drop * diag[0]))
    return np.ascontiguousarray(Q[:, :r].T)


def _project_out(V: np.ndarray, *bases) -> np.ndarray:
    for _ in range(2):
        for Q in bases:
            if Q is not None and Q.shape[0]:
                V = V - (V @ Q.conj().T) @ Q
    return V


def lobpcg(
    apply: Callable[[np.ndarray], np.ndarray],
    X0: np.ndarray,
    k: int,
    precond: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
    tol: float = 1e-9,
    max_iter: int = 500,
):
    """Block LOBPCG on row vectors.

    Parameters
    ----------
    apply : callable
        ``apply(V)`` returns ``A V`` row-wise for a block ``(m, N)``.
    X0 : ndarray, shape (m, N)
        Start block, ``m >= k``.
    k : int
        Number of wanted pairs; convergence is judged on these only.
    precond : callable, optional
        ``precond(R, theta)`` returns preconditioned residual rows.
    tol : float
        Stop when ``||A x - theta x|| <= tol (1 + |theta|)`` for the lowest ``k``.

    Returns
    -------
    theta, X, residual_norms, iterations, history
    """
    X = _orth(np.asarray(X0, dtype=complex))
    m = X.shape[0]
    if m < k:
        raise SolverError(f"start block has rank {m} < k = {k}")
    AX = apply(X)
    P = None
    history = []
    theta = None
    rn = None
    for it in range(max_iter + 1):
        G = X.conj() @ AX.T
        G = 0.5 * (G + G.conj().T)
        theta, C = np.linalg.eigh(G)
        X = C.T @ X
        AX = C.T @ AX
        Rres = AX - theta[:, None] * X
        rn = np.linalg.norm(Rres, axis=1)
        conv = rn <= tol * (1.0 + np.abs(theta))
        history.append(float(np.max(rn[:k] / (1.0 + np.abs(theta[:k])))))
        if conv[:k].all():
            return theta, X, rn, it, history
        if it == max_iter:
            break
        active = ~conv
        W = Rres[active]
        if precond is not None:
            W = precond(W, theta[active])
        W = _orth(_project_out(W, X))
        if P is not None:
            P = _orth(_project_out(P, X, W))
        blocks = [X, W] if P is None or P.shape[0] == 0 else [X, W, P]
        S = np.vstack(blocks)
        AS = np.vstack([AX] + [apply(B) for B in blocks[1:]])
        G = S.conj() @ AS.T
        G = 0.5 * (G + G.conj().T)
        # S is orthonormal by construction; re-orthonormalise if rounding drifted
        M = S.conj() @ S.T
        if np.abs(M - np.eye(S.shape[0])).max() > 1e-8:
            Lc = np.linalg.cholesky(M)
            T = scipy.linalg.solve_triangular(Lc, np.eye(S.shape[0]), lower=True)
            S = T @ S
            AS = T @ AS
            G = S.conj() @ AS.T
            G = 0.5 * (G + G.conj().T)
        _, C = np.linalg.eigh(G)
        C = C[:, :m]
        X_new = C.T @ S
        AX = C.T @ AS
        P = C[m:].T @ S[m:]
        X = X_new
    raise SolverError(
        f"eigensolver did not converge in {max_iter} iterations (worst scaled residual {history[-1]:.3e})",
        residuals=rn[:k].tolist(),
        history=history,
    )


def _start_block(rng, m, shape, guess=None):
    X = rng.standard_normal((m,) + shape) + 1j * rng.standard_normal((m,) + shape)
    if guess is not None and len(guess):
        g = np.asarray(guess)[:m].reshape((-1,) + shape)
        X[: g.shape[0]] = g
    return X.reshape(m, -1)


def _guard(k: int) -> int:
    return max(4, k // 4)


def _make_precond(op: MeanFieldOperator, kind: str, channel: Optional[int]):
    grid = op.grid
    if kind == "kinetic":
        kinv = KineticInverse(grid)
        shape = grid.shape if channel is not None else (2,) + grid.shape

        def pre(R, theta):
            V = R.reshape((-1,) + shape)
            return kinv(V, 1.0).reshape(R.shape[0], -1)

        return pre
    if kind == "diagonal":
        d = op.diagonal()
        if channel is not None:
            d = d[channel]
        floor = 1.0 / grid.h**2

        def pre(R, theta):
            den = np.maximum(d.reshape(1, -1) - theta[:, None], floor)
            return R / den

        return pre
    if kind == "none":
        return None
    raise ConfigError(f"unknown preconditioner {kind!r}")


def _solve_block(op, channel, k, tol, max_iter, rng, guess, preconditioner):
    grid = op.grid
    if channel is None:
        shape = (2,) + grid.shape
        apply = lambda V: op.apply(V.reshape((-1,) + shape)).reshape(V.shape[0], -1)
    else:
        shape = grid.shape
        apply = lambda V: op.apply_channel(V.reshape((-1,) + shape), channel).reshape(V.shape[0], -1)
    N = int(np.prod(shape))
    m = min(k + _guard(k), N)
    X0 = _start_block(rng, m, shape, guess)
    pre = _make_precond(op, preconditioner, channel)
    theta, X, rn, it, hist = lobpcg(apply, X0, k, pre, tol, max_iter)
    scale = grid.dv ** -0.5
    vecs = (X[:k] * scale).reshape((k,) + shape)
    # discrete residual of a unit discrete vector equals the Euclidean one
    return theta[:k], vecs, rn[:k], it, hist


def lowest_eigenpairs(
    op: MeanFieldOperator,
    k: int,
    tol: float = 1e-9,
    seed: int = 0,
    max_iter: int = 500,
    guess: Optional[np.ndarray] = None,
    preconditioner: str = "kinetic",
) -> EigenSolution:
    """Lowest ``k`` eigenpairs of ``op``, deterministic given ``seed``.

    The block structure of ``op`` is exploited: ``collinear`` operators are
    solved per spin channel and merged, ``unpolarized`` ones by a single
    scalar solve whose eigenvectors are duplicated into both channels (the
    returned count is then rounded up to whole pairs).  ``guess`` is an
    optional block of spinors used as a warm start.
    """
    grid = op.grid
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ConfigError(f"k must be a positive integer, got {k!r}")
    if tol <= 0:
        raise ConfigError("eigensolver tolerance must be positive")
    if k > op.dim // 4:
        raise ConfigError(f"k = {k} is too large for a grid with {op.dim} spinor unknowns")
    rng = np.random.default_rng(seed)
    s = op.structure
    if s == "coupled":
        g = None if guess is None else np.asarray(guess)
        theta, vecs, rn, it, hist = _solve_block(op, None, k, tol, max_iter, rng, g, preconditioner)
        return EigenSolution(theta, vecs, rn, it, hist)
    if s == "unpolarized":
        ks = -(-k // 2)
        g = None if guess is None else np.asarray(guess)[::2, 0]
        theta, vecs, rn, it, hist = _solve_block(op, 0, ks, tol, max_iter, rng, g, preconditioner)
        evals = np.repeat(theta, 2)
        spin = np.zeros((2 * ks, 2) + grid.shape, dtype=complex)
        spin[0::2, 0] = vecs
        spin[1::2, 1] = vecs
        return EigenSolution(evals, spin, np.repeat(rn, 2), it, hist)
    # collinear: two independent scalar problems
    parts = []
    its = 0
    hist = []
    for c in (0, 1):
        g = None
        if guess is not None:
            gs = np.asarray(guess)
            w = np.linalg.norm(gs[:, c].reshape(gs.shape[0], -1), axis=1)
            sel = gs[w > 0.5 * np.linalg.norm(gs.reshape(gs.shape[0], -1), axis=1), c]
            g = sel if len(sel) else None
        theta, vecs, rn, it, h = _solve_block(op, c, k, tol, max_iter, rng, g, preconditioner)
        its = max(its, it)
        hist.append(h)
        parts.extend((float(t), c, i, r) for i, (t, r) in enumerate(zip(theta, rn)))
        if c == 0:
            v0 = vecs
        else:
            v1 = vecs
    parts.sort(key=lambda p: (p[0], p[1]))
    parts = parts[:k]
    evals = np.array([p[0] for p in parts])
    spin = np.zeros((k, 2) + grid.shape, dtype=complex)
    for j, (_, c, i, _) in enumerate(parts):
        spin[j, c] = (v0 if c == 0 else v1)[i]
    rn = np.array([p[3] for p in parts])
    return EigenSolution(evals, spin, rn, its, hist)


def dense_oracle(op: MeanFieldOperator) -> EigenSolution:
    """Full spectrum of ``op`` by dense diagonalisation (small grids only)."""
    N = op.dim
    if N > DENSE_LIMIT:
        raise ConfigError(f"dense oracle refuses {N} unknowns (limit {DENSE_LIMIT})")
    H = op.dense()
    herm = np.abs(H - H.conj().T).max()
    if herm > 1e-10 * max(1.0, np.abs(H).max()):
        raise SolverError(f"operator is not Hermitian (defect {herm:.3e})")
    H = 0.5 * (H + H.conj().T)
    w, V = np.linalg.eigh(H)
    vecs = (V.T * op.grid.dv ** -0.5).reshape((N, 2) + op.grid.shape)
    res = np.linalg.norm(H @ V - V * w, axis=0)
    return EigenSolution(w, vecs, res, 0)
