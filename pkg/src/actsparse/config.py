"""Pipeline configuration, loadable from and dumpable to JSON."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

from .decomposition import CuboidConfig, SelectionConfig
from .descriptors import Hog3dConfig, PhogConfig
from .itra import BankConfig
from .solvers import AdmmConfig, InvalidInputError


@dataclass(frozen=True)
class ClassifierConfig:
    mu: int = 2
    sparsity_fraction: float = 0.10
    ksvd_iters: int = 10


@dataclass(frozen=True)
class PipelineConfig:
    phog: PhogConfig = PhogConfig()
    selection: SelectionConfig = SelectionConfig()
    admm: AdmmConfig = AdmmConfig()
    cuboid: CuboidConfig = CuboidConfig()
    bank: BankConfig = BankConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    def to_dict(self) -> dict:
        out = {name: _plain(asdict(getattr(self, name))) for name in _SECTIONS}
        out.update(self.extra)
        return out

    def digest(self) -> str:
        """Short hash of every setting except file locations (``paths``)."""
        data = {k: v for k, v in self.to_dict().items() if k != "paths"}
        blob = json.dumps(data, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data or {})
        kwargs = {}
        for name, typ in _SECTIONS.items():
            section = data.pop(name, None) or {}
            kwargs[name] = _build(typ, section, name)
        return cls(extra=data, **kwargs)

    def with_updates(self, **sections) -> "PipelineConfig":
        """Copy with selected fields of selected sections replaced: ``with_updates(bank={"mu": 1})``."""
        changes = {name: replace(getattr(self, name), **vals) for name, vals in sections.items()}
        return replace(self, **changes)


_SECTIONS = {
    "phog": PhogConfig,
    "selection": SelectionConfig,
    "admm": AdmmConfig,
    "cuboid": CuboidConfig,
    "bank": BankConfig,
    "classifier": ClassifierConfig,
}

_TUPLE_FIELDS = {"levels", "cell_grid", "dims"}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(typ, section: dict, where: str):
    known = {f.name for f in fields(typ)}
    unknown = set(section) - known
    if unknown:
        raise InvalidInputError(f"unknown keys in config section {where!r}: {sorted(unknown)}")
    kwargs = {}
    for key, value in section.items():
        if key == "hog3d":
            value = _build(Hog3dConfig, value or {}, f"{where}.hog3d")
        elif key in _TUPLE_FIELDS:
            value = tuple(value)
        kwargs[key] = value
    return typ(**kwargs)


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return PipelineConfig.from_dict(json.load(fh))


DESK_CONFIG = {
    "selection": {"k": 3, "t": 3},
    "admm": {"alpha": 1.0, "lambda_budget": 4.0},
    "cuboid": {"count": 100, "dims": [7, 16, 16], "threshold": "auto-5%",
               "hog3d": {"cell_grid": [1, 1, 2], "axes": "dodecahedron"}},
    "bank": {"mu": 2, "delta": 12, "sparsity_fraction": 0.10, "ksvd_iters": 10},
    "classifier": {"mu": 2, "sparsity_fraction": 0.10, "ksvd_iters": 10},
}


def desk_config() -> PipelineConfig:
    """Scaled-down settings: 12-dim HOG3D, 24 atoms per local dictionary."""
    return PipelineConfig.from_dict(json.loads(json.dumps(DESK_CONFIG)))


def validate(cfg: PipelineConfig) -> None:
    if cfg.cuboid.hog3d.dim != cfg.bank.delta:
        raise InvalidInputError(
            f"HOG3D produces {cfg.cuboid.hog3d.dim}-dim descriptors but bank.delta is {cfg.bank.delta}")
    if cfg.cuboid.dims[0] > 2 * cfg.selection.t + 1:
        raise InvalidInputError("cuboid depth exceeds key-sequence length 2t+1")
