"""Relative act descriptors built on a class x position dictionary bank.

For each temporal position ``j`` a key-sequence's cuboid descriptors are
sparse-coded against concatenations of local dictionaries. Summing the
coefficients that fall in each sub-dictionary's block measures how much that
sub-dictionary contributes to the reconstruction:

* inter-class (phi): blocks are the C class dictionaries at position ``j``;
* intra-class (psi): blocks are the reference class's dictionaries at the
  other K-1 positions.

The ITRA vector concatenates both, for a length of ``K * (C + K - 1)``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .decomposition import KeySequenceSet
from .io import load_dictionary, save_dictionary
from .solvers import Dictionary, InvalidInputError, SparseCode, block_ranges_for, ksvd, omp_batch

POOLING_MODES = ("signed", "absolute")


def sparsity_level(fraction: float, n_atoms: int, cap: Optional[int] = None) -> int:
    """``ceil(fraction * n_atoms)``, at least 1 and at most ``cap``."""
    # round first so that e.g. 0.1 * 30 does not ceil to 4
    level = max(1, math.ceil(round(fraction * n_atoms, 9)))
    return min(level, cap) if cap is not None else level


@dataclass(frozen=True)
class BankConfig:
    """Dictionary-bank and descriptor settings.

    ``n_atoms`` overrides ``mu * delta`` when set (reduced-atom runs).
    """

    mu: int = 2
    delta: int = 300
    sparsity_fraction: float = 0.10
    ksvd_iters: int = 10
    n_atoms: Optional[int] = None
    pooling: str = "signed"
    block_normalize: bool = False

    def __post_init__(self):
        if self.mu < 1 or self.delta < 1:
            raise InvalidInputError("mu and delta must be positive")
        if not 0 < self.sparsity_fraction <= 1:
            raise InvalidInputError("sparsity_fraction must lie in (0, 1]")
        if self.pooling not in POOLING_MODES:
            raise InvalidInputError(f"pooling must be one of {POOLING_MODES}")

    @property
    def atoms_per_dictionary(self) -> int:
        return self.n_atoms if self.n_atoms is not None else self.mu * self.delta

    @property
    def lambda1(self) -> int:
        return sparsity_level(self.sparsity_fraction, self.atoms_per_dictionary, self.delta)

    def lambda2(self, n_classes: int) -> int:
        return sparsity_level(self.sparsity_fraction, n_classes * self.atoms_per_dictionary, self.delta)

    def lambda3(self, k: int) -> int:
        return sparsity_level(self.sparsity_fraction, max(k - 1, 1) * self.atoms_per_dictionary, self.delta)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class DictionaryBank:
    dicts: dict
    c: int
    k: int
    n_a: int
    delta: int
    config_hash: str = ""

    def __getitem__(self, key) -> Dictionary:
        return self.dicts[key]

    def position_dictionary(self, j: int) -> np.ndarray:
        """Atoms of all classes at position ``j``, concatenated in class order."""
        return np.hstack([self.dicts[(c, j)].atoms for c in range(self.c)])

    def other_positions_dictionary(self, c: int, j: int) -> np.ndarray:
        """Atoms of class ``c`` at every position except ``j``, in position order."""
        return np.hstack([self.dicts[(c, l)].atoms for l in range(self.k) if l != j])


@dataclass
class ItraDescriptor:
    phi: np.ndarray
    psi: np.ndarray
    reference_class: Optional[int] = None

    @property
    def flat(self) -> np.ndarray:
        """``[phi^1 .. phi^K, psi^1 .. psi^K]`` with ``phi^j`` the column ``phi[:, j]``."""
        return np.concatenate([self.phi.T.ravel(), self.psi.ravel()])


def itra_length(n_classes: int, k: int) -> int:
    return k * (n_classes + k - 1)


def learn_dictionary_bank(train_sets: dict, cfg: BankConfig = BankConfig(), seed=0) -> DictionaryBank:
    """One K-SVD dictionary per (class, position) cell.

    Parameters
    ----------
    train_sets : dict mapping (c, j) to a (delta, n_s) matrix
        Cells must cover ``range(C) x range(K)``.
    """
    if not train_sets:
        raise InvalidInputError("no training cells given")
    n_classes = max(c for c, _ in train_sets) + 1
    k = max(j for _, j in train_sets) + 1
    n_a = cfg.atoms_per_dictionary
    cells = [(c, j) for c in range(n_classes) for j in range(k)]
    missing = [cell for cell in cells if cell not in train_sets]
    if missing:
        raise InvalidInputError(f"missing training cells {missing}")
    for cell in cells:
        y = np.asarray(train_sets[cell])
        if y.ndim != 2 or y.shape[0] != cfg.delta:
            raise InvalidInputError(f"cell (class={cell[0]}, position={cell[1]}) must be a {cfg.delta} x n_s matrix, got {y.shape}")
        if y.shape[1] < n_a:
            raise InvalidInputError(
                f"cell (class={cell[0]}, position={cell[1]}) has {y.shape[1]} descriptors, needs >= {n_a}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = ss.spawn(len(cells))
    dicts = {}
    for cell, cell_seed in zip(cells, seeds):
        d, _ = ksvd(train_sets[cell], n_a, cfg.lambda1, cfg.ksvd_iters, seed=cell_seed)
        dicts[cell] = Dictionary(d.atoms, cell[0], cell[1])
    return DictionaryBank(dicts, n_classes, k, n_a, cfg.delta, cfg.digest())


def _validate_partition(block_ranges, n: int) -> None:
    pos = 0
    for start, stop in block_ranges:
        if start != pos or stop <= start:
            raise InvalidInputError(f"block ranges {block_ranges} do not partition [0, {n})")
        pos = stop
    if pos != n:
        raise InvalidInputError(f"block ranges {block_ranges} do not partition [0, {n})")


def sum_pool(code, block_ranges, mode: str = "signed") -> np.ndarray:
    """Sum of coefficients inside each half-open ``(start, stop)`` block.

    ``code`` may be a SparseCode, a coefficient vector, or an (n, N) matrix
    of codes (pooled per column).
    """
    coef = code.coefficients if isinstance(code, SparseCode) else np.asarray(code, dtype=np.float64)
    if mode not in POOLING_MODES:
        raise InvalidInputError(f"pooling mode must be one of {POOLING_MODES}")
    _validate_partition(block_ranges, coef.shape[0])
    if mode == "absolute":
        coef = np.abs(coef)
    return np.stack([coef[a:b].sum(axis=0) for a, b in block_ranges])


def _pooled_mass(atoms, descs, sparsity, blocks, mode) -> np.ndarray:
    if descs.shape[1] == 0:
        raise InvalidInputError("key-sequence has no cuboid descriptors; resample before describing")
    codes, _ = omp_batch(atoms, descs, sparsity)
    return sum_pool(codes, blocks, mode).sum(axis=1)


def _check_compatible(ks: KeySequenceSet, bank: DictionaryBank) -> None:
    if ks.k != bank.k:
        raise InvalidInputError(f"key-sequence set has K={ks.k}, bank has K={bank.k}")
    for seq in ks.sequences:
        if seq.cuboid_descriptors.shape[0] != bank.delta:
            raise InvalidInputError(
                f"cuboid descriptors are {seq.cuboid_descriptors.shape[0]}-dim, bank expects {bank.delta}")


def inter_descriptor(ks: KeySequenceSet, bank: DictionaryBank, lambda2: Optional[int] = None,
                     cfg: BankConfig = BankConfig()) -> np.ndarray:
    """Inter-class descriptor phi, shape (C, K)."""
    _check_compatible(ks, bank)
    lam = lambda2 if lambda2 is not None else cfg.lambda2(bank.c)
    blocks = block_ranges_for([bank.n_a] * bank.c)
    phi = np.zeros((bank.c, bank.k))
    for j, seq in enumerate(ks.sequences):
        phi[:, j] = _pooled_mass(bank.position_dictionary(j), seq.cuboid_descriptors, lam, blocks, cfg.pooling)
    return phi


def intra_descriptor(ks: KeySequenceSet, bank: DictionaryBank, c: int, lambda3: Optional[int] = None,
                     cfg: BankConfig = BankConfig()) -> np.ndarray:
    """Intra-class descriptor psi, shape (K, K-1); row j pools over the other positions in order."""
    _check_compatible(ks, bank)
    if not 0 <= c < bank.c:
        raise InvalidInputError(f"class {c} outside bank with {bank.c} classes")
    if bank.k == 1:
        return np.zeros((1, 0))
    lam = lambda3 if lambda3 is not None else cfg.lambda3(bank.k)
    blocks = block_ranges_for([bank.n_a] * (bank.k - 1))
    psi = np.zeros((bank.k, bank.k - 1))
    for j, seq in enumerate(ks.sequences):
        psi[j] = _pooled_mass(bank.other_positions_dictionary(c, j), seq.cuboid_descriptors, lam, blocks,
                              cfg.pooling)
    return psi


def _unit_columns(a: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(a, axis=0)
    return np.divide(a, norms, out=np.zeros_like(a), where=norms > 0)


def itra(ks: KeySequenceSet, bank: DictionaryBank, c: int, cfg: BankConfig = BankConfig()) -> ItraDescriptor:
    """ITRA descriptor of a key-sequence set decomposed against reference class ``c``."""
    phi = inter_descriptor(ks, bank, cfg=cfg)
    psi = intra_descriptor(ks, bank, c, cfg=cfg)
    if cfg.block_normalize:
        phi = _unit_columns(phi)
        psi = _unit_columns(psi.T).T
    return ItraDescriptor(phi, psi, c)


# -- persistence -------------------------------------------------------------


def save_bank(bank: DictionaryBank, directory) -> None:
    """Write ``c{c}_k{j}.dict`` files plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for (c, j), d in sorted(bank.dicts.items()):
        save_dictionary(directory / f"c{c}_k{j}.dict", d)
    manifest = {"C": bank.c, "K": bank.k, "n_a": bank.n_a, "delta": bank.delta, "config_hash": bank.config_hash}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_bank(directory) -> DictionaryBank:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    dicts = {}
    for c in range(manifest["C"]):
        for j in range(manifest["K"]):
            d = load_dictionary(directory / f"c{c}_k{j}.dict")
            if d.atoms.shape != (manifest["delta"], manifest["n_a"]):
                raise InvalidInputError(f"c{c}_k{j}.dict has shape {d.atoms.shape}, manifest disagrees")
            dicts[(c, j)] = d
    return DictionaryBank(dicts, manifest["C"], manifest["K"], manifest["n_a"], manifest["delta"],
                          manifest.get("config_hash", ""))
