"""Eigen machinery for the nonridgeness function at a single point.

Covers half-vectorization and the duplication matrix, the ordered
eigensystem of a Hessian with clustered eigenvalue groups, the group
projectors P_j and reduced resolvents S_j, the linear map M(x)^T from
Hessian noise (in vech form) to first-order nonridgeness deviation, and the
first two derivatives of the eigenprojection Sigma -> L(Sigma).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernel import vech_indices


class EigenGapError(ValueError):
    """lambda_r and lambda_{r+1} are not separated by the gap tolerance."""


def default_gap_tol(hess: np.ndarray) -> float:
    return 1e-6 * max(1.0, float(np.linalg.norm(hess)))


def vech(A: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"vech needs a square matrix, got shape {A.shape}")
    if np.max(np.abs(A - A.T), initial=0.0) > tol:
        raise ValueError("vech needs a symmetric matrix")
    A = 0.5 * (A + A.T)
    rows, cols = vech_indices(A.shape[0])
    return A[rows, cols]


def unvech(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    d = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if d * (d + 1) // 2 != v.size:
        raise ValueError(f"length {v.size} is not a triangular number")
    rows, cols = vech_indices(d)
    A = np.zeros((d, d))
    A[rows, cols] = v
    A[cols, rows] = v
    return A


def unvech_batch(V: np.ndarray, d: int) -> np.ndarray:
    """(N, d(d+1)/2) -> (N, d, d)."""
    rows, cols = vech_indices(d)
    out = np.empty((V.shape[0], d, d))
    out[:, rows, cols] = V
    out[:, cols, rows] = V
    return out


def duplication_matrix(d: int) -> np.ndarray:
    """The d^2 x d(d+1)/2 matrix with vec(A) = D vech(A) for symmetric A.

    vec stacks columns, so entry (i, j) of A sits at row i + j*d.
    """
    if not 1 <= d <= 16:
        raise ValueError(f"duplication matrix dimension must be in [1, 16], got {d}")
    rows, cols = vech_indices(d)
    D = np.zeros((d * d, rows.size))
    for m, (i, j) in enumerate(zip(rows, cols)):
        D[i + j * d, m] = 1.0
        D[j + i * d, m] = 1.0
    return D


def vec(A: np.ndarray) -> np.ndarray:
    return np.asarray(A).reshape(-1, order="F")


@dataclass
class SpectralFrame:
    eigenvalues: np.ndarray          # descending
    eigenvectors: np.ndarray         # columns, same order
    r: int
    groups: list                     # lists of 0-based eigen indices
    means: np.ndarray                # group means mu_j
    projectors: list                 # P_j
    S_list: list                     # S_j
    q_r: int                         # groups strictly above the one holding lambda_{r+1}
    M_T: np.ndarray                  # d x d(d+1)/2
    V: np.ndarray = field(repr=False, default=None)
    L: np.ndarray = field(repr=False, default=None)

    @property
    def d(self) -> int:
        return self.eigenvalues.size

    @property
    def lambda_r1(self) -> float:
        return float(self.eigenvalues[self.r])

    def nu(self, j: int, k: int) -> float:
        return 1.0 / (self.means[j] - self.means[k])


def _group(eigenvalues: np.ndarray, gap_tol: float) -> list:
    groups = [[0]]
    for i in range(1, eigenvalues.size):
        if eigenvalues[i - 1] - eigenvalues[i] <= gap_tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _eig_desc(hess: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, U = np.linalg.eigh(hess)
    return w[::-1], U[:, ::-1]


def _projector_system(hess, r, gap_tol):
    hess = np.asarray(hess, dtype=float)
    d = hess.shape[0]
    if hess.shape != (d, d):
        raise ValueError("Hessian must be square")
    if not 1 <= r < d:
        raise ValueError(f"ridge dimension r must satisfy 1 <= r < d, got r={r}, d={d}")
    hess = 0.5 * (hess + hess.T)
    if gap_tol is None:
        gap_tol = default_gap_tol(hess)
    if gap_tol <= 0:
        raise ValueError("gap_tol must be positive")
    lam, U = _eig_desc(hess)
    if lam[r - 1] - lam[r] < gap_tol:
        raise EigenGapError(
            f"eigen-gap violation: lambda_r - lambda_(r+1) = {lam[r - 1] - lam[r]:.3e} < {gap_tol:.3e}"
        )
    groups = _group(lam, gap_tol)
    means = np.array([lam[g].mean() for g in groups])
    P = [U[:, g] @ U[:, g].T for g in groups]
    S = []
    for j in range(len(groups)):
        Sj = np.zeros((d, d))
        for k in range(len(groups)):
            if k != j:
                Sj += P[k] / (means[j] - means[k])
        S.append(Sj)
    q_r = next(j for j, g in enumerate(groups) if r in g)
    return hess, lam, U, groups, means, P, S, q_r


def spectral_frame(hess, grad, r: int, gap_tol: float | None = None) -> SpectralFrame:
    """Ordered eigensystem of ``hess`` with the projector objects at one point.

    Raises
    ------
    EigenGapError
        If lambda_r - lambda_{r+1} < gap_tol.
    """
    hess, lam, U, groups, means, P, S, q_r = _projector_system(hess, r, gap_tol)
    d = lam.size
    g = np.asarray(grad, dtype=float).reshape(d)
    Dup = duplication_matrix(d)
    M_T = np.zeros((d, d * (d + 1) // 2))
    for j in range(q_r, len(groups)):
        M_T += (np.kron(P[j], (S[j] @ g)[None, :]) + np.kron(S[j], (P[j] @ g)[None, :])) @ Dup
    V = U[:, r:]
    return SpectralFrame(
        eigenvalues=lam, eigenvectors=U, r=r, groups=groups, means=means,
        projectors=P, S_list=S, q_r=q_r, M_T=M_T, V=V, L=V @ V.T,
    )


def ridge_M_T(frame: SpectralFrame, grad) -> np.ndarray:
    """Reduced form of M(x)^T valid where L(x) grad = 0."""
    d = frame.d
    g = np.asarray(grad, dtype=float).reshape(d)
    Dup = duplication_matrix(d)
    out = np.zeros((d, d * (d + 1) // 2))
    for j in range(frame.q_r, len(frame.groups)):
        for k in range(frame.q_r):
            out += frame.nu(j, k) * np.kron(frame.projectors[j], (frame.projectors[k] @ g)[None, :]) @ Dup
    return out


def nonridgeness(frame: SpectralFrame, grad, check_tol: float = 1e-10) -> float:
    g = np.asarray(grad, dtype=float).reshape(frame.d)
    p_L = float(np.linalg.norm(frame.L @ g))
    p_V = float(np.linalg.norm(frame.V.T @ g))
    scale = max(1.0, float(np.linalg.norm(g)))
    if abs(p_L - p_V) > check_tol * scale:
        raise FloatingPointError(f"projector and basis forms disagree: {p_L} vs {p_V}")
    return p_V


def projection_derivative(hess, direction, r: int, gap_tol: float | None = None) -> np.ndarray:
    """First Gateaux derivative of Sigma -> L(Sigma) at hess along direction."""
    _, _, _, groups, means, P, _, q_r = _projector_system(hess, r, gap_tol)
    D = np.asarray(direction, dtype=float)
    out = np.zeros_like(D)
    for j in range(q_r, len(groups)):
        for k in range(q_r):
            nu = 1.0 / (means[j] - means[k])
            out += nu * (P[j] @ D @ P[k] + P[k] @ D @ P[j])
    return out


def projection_second_derivative(hess, direction, r: int, gap_tol: float | None = None) -> np.ndarray:
    """Second Gateaux derivative of Sigma -> L(Sigma), so that
    L(S + tD) = L(S) + t Q1 + t^2/2 Q2 + O(t^3)."""
    _, _, _, groups, means, P, _, q_r = _projector_system(hess, r, gap_tol)
    D = np.asarray(direction, dtype=float)
    PD = [Pk @ D for Pk in P]

    def Pi(a, b, c):
        return PD[a] @ PD[b] @ P[c]

    # k and l range over every other group: the mixed terms with two indices in
    # the trailing block do not cancel once that block holds two or more groups.
    half = np.zeros_like(D)
    q = len(groups)
    for j in range(q_r, q):
        others = [k for k in range(q) if k != j]
        for k in others:
            nu_jk = 1.0 / (means[j] - means[k])
            for l in others:
                nu_jl = 1.0 / (means[j] - means[l])
                half += nu_jk * nu_jl * (Pi(j, k, l) + Pi(k, j, l) + Pi(k, l, j))
            half -= nu_jk**2 * (Pi(j, j, k) + Pi(j, k, j) + Pi(k, j, j))
    return 2.0 * half


def eigenprojection(hess, r: int) -> np.ndarray:
    """L = V V^T from a plain eigendecomposition, no gap checks."""
    _, U = _eig_desc(np.asarray(hess, dtype=float))
    V = U[:, r:]
    return V @ V.T


def batch_nonridgeness(hess: np.ndarray, grad: np.ndarray, r: int, gap_tol=None):
    """Nonridgeness and lambda_{r+1} for a stack of Hessians.

    Parameters
    ----------
    hess : (N, d, d)
    grad : (N, d)
    gap_tol : float, array of shape (N,), or None for the per-matrix default.

    Returns
    -------
    p : (N,) nonridgeness ||V^T grad||
    lam_r1 : (N,) the (r+1)-th largest eigenvalue
    gap_ok : (N,) bool, lambda_r - lambda_{r+1} >= gap_tol
    """
    hess = np.asarray(hess, dtype=float)
    N, d, _ = hess.shape
    if N == 0:
        return np.zeros(0), np.zeros(0), np.zeros(0, dtype=bool)
    w, U = np.linalg.eigh(hess)
    # ascending order: trailing (smallest) d - r eigenvectors are the first d - r columns
    k = d - r
    V = U[:, :, :k]
    proj = np.einsum("nij,ni->nj", V, grad)
    p = np.sqrt(np.sum(proj * proj, axis=1))
    lam_r1 = w[:, k - 1]
    lam_r = w[:, k]
    if gap_tol is None:
        gap_tol = 1e-6 * np.maximum(1.0, np.sqrt(np.sum(hess * hess, axis=(1, 2))))
    gap_ok = (lam_r - lam_r1) >= gap_tol
    return p, lam_r1, gap_ok
