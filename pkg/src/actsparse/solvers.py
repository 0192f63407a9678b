"""Sparse solvers: l1,2-ball projection, joint row-sparse ADMM, OMP and K-SVD.

All routines are pure functions of their inputs (and seed, where one is
taken). Matrices follow the column-per-sample convention: a dictionary is
``m x n_atoms`` and a batch of signals is ``m x n_samples``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

RIDGE = 1e-8
OMP_RESIDUAL_STOP = 1e-12
UNIT_NORM_TOL = 1e-9


class InvalidInputError(ValueError):
    """Raised when an operation receives arguments violating its contract."""


class InvalidDictionaryError(InvalidInputError):
    """Raised when a dictionary contains zero-norm or non-finite atoms."""


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdmmConfig:
    """Parameters of the constrained joint reconstruction problem.

    ``lambda_budget`` bounds both mixed norms unless ``lambda_self`` or
    ``lambda_rest`` override one of them.
    """

    alpha: float = 1.0
    lambda_budget: float = 1.0
    rho: float = 1.0
    max_iters: int = 500
    primal_tol: float = 1e-5
    dual_tol: float = 1e-5
    lambda_self: Optional[float] = None
    lambda_rest: Optional[float] = None

    def __post_init__(self):
        if not self.alpha >= 0:
            raise InvalidInputError(f"alpha must be >= 0, got {self.alpha}")
        for name in ("lambda_budget", "rho", "primal_tol", "dual_tol"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("lambda_self", "lambda_rest"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise InvalidInputError(f"{name} must be > 0, got {value}")
        if int(self.max_iters) < 1:
            raise InvalidInputError("max_iters must be a positive integer")

    @property
    def budget_self(self) -> float:
        return self.lambda_budget if self.lambda_self is None else self.lambda_self

    @property
    def budget_rest(self) -> float:
        return self.lambda_budget if self.lambda_rest is None else self.lambda_rest


@dataclass
class RowSparseSolution:
    w_self: np.ndarray
    w_rest: np.ndarray
    objective_trace: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    @property
    def w_full(self) -> np.ndarray:
        """Row-aligned concatenation ``[w_self | w_rest]``."""
        return np.hstack([self.w_self, self.w_rest])


@dataclass
class SparseCode:
    coefficients: np.ndarray
    support: tuple
    residual_norm: float
    residual_trace: list = field(default_factory=list)


@dataclass
class Dictionary:
    """Unit-norm atoms stored column-wise, with optional (class, position) tags."""

    atoms: np.ndarray
    class_id: Optional[int] = None
    position: Optional[int] = None

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        if atoms.ndim != 2 or atoms.shape[1] < 1:
            raise InvalidDictionaryError(f"atoms must be a non-empty 2-D matrix, got shape {atoms.shape}")
        if not np.all(np.isfinite(atoms)):
            raise InvalidDictionaryError("dictionary contains non-finite entries")
        norms = np.linalg.norm(atoms, axis=0)
        if np.any(norms == 0):
            raise InvalidDictionaryError(f"zero-norm atom at index {int(np.argmin(norms))}")
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise InvalidDictionaryError("atoms must have unit l2 norm")
        self.atoms = atoms

    @classmethod
    def from_columns(cls, columns, class_id=None, position=None) -> "Dictionary":
        """Build a dictionary by normalizing arbitrary nonzero columns."""
        columns = np.asarray(columns, dtype=np.float64)
        norms = np.linalg.norm(columns, axis=0)
        if np.any(norms == 0):
            raise InvalidDictionaryError(f"zero-norm atom at index {int(np.argmin(norms))}")
        return cls(columns / norms, class_id, position)

    @property
    def dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------


def project_simplex_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Project a nonnegative vector onto ``{x >= 0, sum(x) <= radius}``.

    Sort-based thresholding (Duchi et al., 2008).
    """
    v = np.asarray(v, dtype=np.float64)
    if v.sum() <= radius:
        return v.copy()
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u)
    ks = np.arange(1, u.size + 1)
    rho = np.nonzero(u * ks > (cssv - radius))[0][-1]
    theta = (cssv[rho] - radius) / (rho + 1.0)
    x = np.maximum(v - theta, 0.0)
    # v - theta cancels badly when theta is close to the entries; pull the
    # round-off excess back onto the ball so the constraint holds exactly
    total = x.sum()
    if total > radius:
        x *= radius / total
    return x


def l12_norm(a: np.ndarray) -> float:
    """Sum of the l2 norms of the rows of ``a``."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, axis=1).sum())


def project_l12_ball(a: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection of ``a`` onto ``{X : ||X||_{1,2} <= budget}``.

    Row directions are preserved; only the row norms change, via a simplex
    projection of the vector of row norms.
    """
    a = np.asarray(a, dtype=np.float64)
    if not budget > 0:
        raise InvalidInputError(f"budget must be > 0, got {budget}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix contains non-finite entries")
    if a.size == 0:
        return a.copy()
    return _project_l12(a, budget)


def _project_l12(a: np.ndarray, budget: float) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", a, a))
    if norms.sum() <= budget:
        return a.copy()
    shrunk = project_simplex_ball(norms, budget)
    scale = np.divide(shrunk, norms, out=np.zeros_like(norms), where=norms > 0)
    return a * scale[:, None]


# ---------------------------------------------------------------------------
# Joint row-sparse reconstruction
# ---------------------------------------------------------------------------


def joint_objective(z_self, z_rest, w_self, w_rest, alpha) -> float:
    """``||Z_i - Z_i W_i||_F^2 + alpha ||Z_rest - Z_i W_rest||_F^2``."""
    val = np.linalg.norm(z_self - z_self @ w_self) ** 2
    if z_rest.shape[1]:
        val += alpha * np.linalg.norm(z_rest - z_self @ w_rest) ** 2
    return float(val)


def solve_joint_row_sparse(z_self, z_rest, cfg: AdmmConfig = AdmmConfig()) -> RowSparseSolution:
    """Select representative frames by constrained joint reconstruction.

    Minimizes ``||Z_i - Z_i W_i||^2 + alpha ||Z_rest - Z_i W_rest||^2`` subject
    to ``||W_i||_{1,2} <= lambda`` and ``||W_rest||_{1,2} <= lambda`` with ADMM
    on the splitting ``W = V``, where ``V`` carries the ball constraints.

    Parameters
    ----------
    z_self : (m, n_i) array
        Frame descriptors of the video being decomposed.
    z_rest : (m, n - n_i) array
        Frame descriptors of the other videos of the reference class. May
        have zero columns.
    cfg : AdmmConfig

    Returns
    -------
    RowSparseSolution
        The feasible iterate ``V``; ``converged`` is False when ``max_iters``
        was reached first.
    """
    z_self = np.asarray(z_self, dtype=np.float64)
    m, n_i = z_self.shape if z_self.ndim == 2 else (0, 0)
    if z_self.ndim != 2 or n_i == 0 or m == 0:
        raise InvalidInputError("z_self must be a non-empty 2-D matrix")
    z_rest = np.asarray(z_rest, dtype=np.float64)
    if z_rest.size == 0:
        z_rest = np.zeros((m, 0))
    if z_rest.ndim != 2 or z_rest.shape[0] != m:
        raise InvalidInputError(f"z_rest must have {m} rows, got shape {z_rest.shape}")
    if not (np.all(np.isfinite(z_self)) and np.all(np.isfinite(z_rest))):
        raise InvalidInputError("descriptor matrices contain non-finite entries")

    alpha = float(cfg.alpha)
    gram = z_self.T @ z_self
    evals, evecs = np.linalg.eigh(gram)
    evals = np.maximum(evals, 0.0) + RIDGE
    rhs_self = 2.0 * gram
    rhs_rest = 2.0 * alpha * (z_self.T @ z_rest)

    def solve_block(weight, rhs, rho):
        # (weight * (G + ridge I) + rho I) X = rhs, via the cached eigenbasis
        return evecs @ ((evecs.T @ rhs) / (weight * evals + rho)[:, None])

    n_rest = z_rest.shape[1]
    v_self = np.zeros((n_i, n_i))
    v_rest = np.zeros((n_i, n_rest))
    u_self = np.zeros_like(v_self)
    u_rest = np.zeros_like(v_rest)
    rho = float(cfg.rho)
    trace = []
    converged = False
    it = 0
    for it in range(1, int(cfg.max_iters) + 1):
        w_self = solve_block(2.0, rhs_self + rho * (v_self - u_self), rho)
        if n_rest:
            w_rest = solve_block(2.0 * alpha, rhs_rest + rho * (v_rest - u_rest), rho)
        else:
            w_rest = v_rest

        old_self, old_rest = v_self, v_rest
        v_self = _project_l12(w_self + u_self, cfg.budget_self)
        v_rest = _project_l12(w_rest + u_rest, cfg.budget_rest) if n_rest else v_rest
        u_self = u_self + w_self - v_self
        u_rest = u_rest + w_rest - v_rest

        primal = np.sqrt(np.linalg.norm(w_self - v_self) ** 2 + np.linalg.norm(w_rest - v_rest) ** 2)
        dual = rho * np.sqrt(np.linalg.norm(v_self - old_self) ** 2 + np.linalg.norm(v_rest - old_rest) ** 2)
        scale_p = max(1.0, np.sqrt(np.linalg.norm(v_self) ** 2 + np.linalg.norm(v_rest) ** 2))
        scale_d = max(1.0, rho * np.sqrt(np.linalg.norm(u_self) ** 2 + np.linalg.norm(u_rest) ** 2))
        trace.append(joint_objective(z_self, z_rest, v_self, v_rest, alpha))

        if primal / scale_p < cfg.primal_tol and dual / scale_d < cfg.dual_tol:
            converged = True
            break

        # residual balancing; scaled duals must follow rho
        if primal > 10.0 * dual:
            rho *= 2.0
            u_self, u_rest = u_self / 2.0, u_rest / 2.0
        elif dual > 10.0 * primal:
            rho /= 2.0
            u_self, u_rest = u_self * 2.0, u_rest * 2.0

    return RowSparseSolution(v_self, v_rest, trace, converged, it)


# ---------------------------------------------------------------------------
# Orthogonal matching pursuit
# ---------------------------------------------------------------------------


def _check_atoms(atoms: np.ndarray) -> np.ndarray:
    atoms = np.asarray(atoms, dtype=np.float64)
    norms = np.linalg.norm(atoms, axis=0)
    if np.any(norms == 0):
        raise InvalidDictionaryError(f"zero-norm atom at index {int(np.argmin(norms))}")
    return atoms


def omp_batch(atoms: np.ndarray, signals: np.ndarray, sparsity: int, return_traces: bool = False):
    """Orthogonal Matching Pursuit applied independently to every column.

    Each step picks the atom with the largest absolute correlation with the
    current residual (lowest index on ties) and refits all selected
    coefficients by least squares. A column stops early once its residual
    norm drops below 1e-12.

    Parameters
    ----------
    atoms : (m, n_a) array
        Dictionary with unit-norm columns.
    signals : (m,) or (m, N) array
    sparsity : int
        Maximum number of nonzero coefficients per column.

    Returns
    -------
    codes : (n_a, N) array
    residual_norms : (N,) array
    traces : list of lists, only when ``return_traces`` is set
        Residual norm before the first and after every selection.
    """
    atoms = _check_atoms(atoms)
    y = np.asarray(signals, dtype=np.float64)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    m, n_a = atoms.shape
    if y.shape[0] != m:
        raise InvalidInputError(f"signal dimension {y.shape[0]} does not match dictionary dimension {m}")
    sparsity = int(sparsity)
    if sparsity < 1:
        raise InvalidInputError("sparsity must be a positive integer")
    sparsity = min(sparsity, n_a)
    n = y.shape[1]

    gram = atoms.T @ atoms
    corr0 = atoms.T @ y  # (n_a, N)
    codes = np.zeros((n_a, n))
    residual = y.copy()
    res_norm = np.linalg.norm(residual, axis=0)
    support = np.zeros((n, sparsity), dtype=np.intp)
    active = res_norm >= OMP_RESIDUAL_STOP
    traces = [[float(r)] for r in res_norm] if return_traces else None

    for k in range(sparsity):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        corr = np.abs(atoms.T @ residual[:, idx])
        best = np.argmax(corr, axis=0)
        peak = corr[best, np.arange(idx.size)]
        # a residual orthogonal to every atom cannot be reduced further
        stalled = peak <= OMP_RESIDUAL_STOP * np.maximum(res_norm[idx], 1.0)
        if np.any(stalled):
            active[idx[stalled]] = False
            idx, best = idx[~stalled], best[~stalled]
            if idx.size == 0:
                break
        support[idx, k] = best
        sup = support[idx, : k + 1]
        sub_gram = gram[sup[:, :, None], sup[:, None, :]]
        rhs = corr0[sup, idx[:, None]]
        try:
            coef = np.linalg.solve(sub_gram, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            coef = np.stack([np.linalg.lstsq(g, r, rcond=None)[0] for g, r in zip(sub_gram, rhs)])
        codes[:, idx] = 0.0
        codes[sup, idx[:, None]] = coef
        residual[:, idx] = y[:, idx] - atoms @ codes[:, idx]
        new_norm = np.linalg.norm(residual[:, idx], axis=0)
        res_norm[idx] = new_norm
        active[idx[new_norm < OMP_RESIDUAL_STOP]] = False
        if return_traces:
            for i, r in zip(idx, new_norm):
                traces[i].append(float(r))

    if squeeze:
        codes, res_norm = codes[:, 0], res_norm[:1]
    if return_traces:
        return codes, res_norm, traces
    return codes, res_norm


def omp(dictionary, y, sparsity: int) -> SparseCode:
    """Sparse-code a single signal against ``dictionary`` with OMP."""
    atoms = dictionary.atoms if isinstance(dictionary, Dictionary) else dictionary
    y = np.asarray(y, dtype=np.float64).ravel()
    if sparsity > np.shape(atoms)[1]:
        raise InvalidInputError(f"sparsity {sparsity} exceeds number of atoms {np.shape(atoms)[1]}")
    codes, res, traces = omp_batch(atoms, y[:, None], sparsity, return_traces=True)
    coef = codes[:, 0]
    support = tuple(int(i) for i in np.nonzero(coef)[0])
    return SparseCode(coef, support, float(res[0]), traces[0])


# ---------------------------------------------------------------------------
# K-SVD
# ---------------------------------------------------------------------------


def _initial_atoms(samples: np.ndarray, n_atoms: int, rng: np.random.Generator) -> np.ndarray:
    """Distinct normalized sample columns in seeded random order.

    Columns that are zero or parallel to an already chosen atom are skipped;
    any shortfall is filled with random unit vectors.
    """
    m = samples.shape[0]
    chosen = []
    for j in rng.permutation(samples.shape[1]):
        col = samples[:, j]
        norm = np.linalg.norm(col)
        if norm == 0:
            continue
        atom = col / norm
        if chosen and np.max(np.abs(np.asarray(chosen) @ atom)) > 1.0 - 1e-10:
            continue
        chosen.append(atom)
        if len(chosen) == n_atoms:
            break
    while len(chosen) < n_atoms:
        v = rng.standard_normal(m)
        chosen.append(v / np.linalg.norm(v))
    return np.array(chosen).T


def ksvd(samples, n_atoms: int, sparsity: int, iters: int, seed=0, return_trace: bool = False):
    """Learn a dictionary with K-SVD.

    Alternates OMP sparse coding with sequential rank-1 SVD atom updates.
    During coding, a sample keeps its previous code when the new OMP code
    reconstructs it worse, so the recorded error never increases. Atoms
    used by no sample are replaced by the worst-reconstructed sample. Each
    updated atom is signed so that its coefficients sum to a nonnegative
    value.

    Parameters
    ----------
    samples : (m, n_s) array
    n_atoms : int
    sparsity : int
    iters : int
    seed : int or np.random.SeedSequence

    Returns
    -------
    dictionary : Dictionary
    codes : (n_atoms, n_s) array
    errors : list of float, only when ``return_trace`` is set
        ``||Y - DX||_F^2`` after each iteration.
    """
    y = np.asarray(samples, dtype=np.float64)
    if y.ndim != 2:
        raise InvalidInputError("samples must be a 2-D matrix")
    m, n_s = y.shape
    if n_atoms < 1 or sparsity < 1 or iters < 1:
        raise InvalidInputError("n_atoms, sparsity and iters must be positive")
    if n_s < n_atoms:
        raise InvalidInputError(f"need at least n_atoms={n_atoms} samples, got {n_s}")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("samples contain non-finite entries")
    rng = np.random.default_rng(seed)
    sparsity = min(int(sparsity), n_atoms)

    d = _initial_atoms(y, n_atoms, rng)
    x = np.zeros((n_atoms, n_s))
    errors = []
    for _ in range(int(iters)):
        new_x, _ = omp_batch(d, y, sparsity)
        new_err = np.linalg.norm(y - d @ new_x, axis=0) ** 2
        old_err = np.linalg.norm(y - d @ x, axis=0) ** 2
        keep_old = old_err < new_err
        x = np.where(keep_old[None, :], x, new_x)

        residual = y - d @ x
        for k in range(n_atoms):
            users = np.nonzero(x[k])[0]
            if users.size == 0:
                continue
            e_k = residual[:, users] + np.outer(d[:, k], x[k, users])
            u, s, vt = np.linalg.svd(e_k, full_matrices=False)
            # the SVD sign is arbitrary; orient the atom so its total
            # coefficient mass is nonnegative, which signed pooling relies on
            sign = -1.0 if vt[0].sum() < 0 else 1.0
            d[:, k] = sign * u[:, 0]
            x[k, users] = sign * s[0] * vt[0]
            residual[:, users] = e_k - np.outer(d[:, k], x[k, users])

        sample_err = np.linalg.norm(residual, axis=0) ** 2
        dead = np.nonzero(~np.any(x != 0, axis=1))[0]
        if dead.size:
            worst = np.argsort(-sample_err, kind="stable")
            for k, j in zip(dead, worst):
                col = y[:, j]
                norm = np.linalg.norm(col)
                if norm > 0:
                    d[:, k] = col / norm
        errors.append(float(sample_err.sum()))
        if errors[-1] < 1e-20:
            break

    dictionary = Dictionary(d)
    if return_trace:
        return dictionary, x, errors
    return dictionary, x


def code_matrix(dictionary: Dictionary, signals, sparsity: int) -> np.ndarray:
    """OMP codes for every column of ``signals``."""
    return omp_batch(dictionary.atoms, signals, sparsity)[0]


def block_ranges_for(sizes: Sequence[int]) -> list:
    """Consecutive half-open ``(start, stop)`` intervals for the given block sizes."""
    bounds = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
