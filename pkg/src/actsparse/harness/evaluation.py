"""Accuracy, confusion matrix and per-class recall."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..solvers import InvalidInputError


@dataclass
class EvalReport:
    accuracy: float
    confusion: list
    per_class_recall: list
    config_hash: str = ""
    seed: Optional[int] = None
    classes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def confusion_csv(self) -> str:
        names = self.classes or [str(i) for i in range(len(self.confusion))]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["true\\pred", *names])
        for name, row in zip(names, self.confusion):
            writer.writerow([name, *row])
        return buf.getvalue()

    def write(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(self.to_json())
        (directory / "confusion.csv").write_text(self.confusion_csv())


def evaluate(predictions, truth, n_classes: Optional[int] = None, classes=None, config_hash: str = "",
             seed=None) -> EvalReport:
    """Rows of the confusion matrix are true classes, columns predictions.

    A class with no test videos gets recall ``None``.
    """
    pred = np.asarray(predictions, dtype=int)
    true = np.asarray(truth, dtype=int)
    if pred.shape != true.shape or pred.ndim != 1:
        raise InvalidInputError("predictions and truth must be equal-length 1-D sequences")
    if pred.size == 0:
        raise InvalidInputError("nothing to evaluate")
    if n_classes is None:
        n_classes = len(classes) if classes else int(max(pred.max(), true.max())) + 1
    if pred.min() < 0 or true.min() < 0 or max(pred.max(), true.max()) >= n_classes:
        raise InvalidInputError(f"class ids must lie in 0..{n_classes - 1}")
    conf = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(conf, (true, pred), 1)
    support = conf.sum(axis=1)
    recall = [float(conf[c, c] / support[c]) if support[c] else None for c in range(n_classes)]
    return EvalReport(
        accuracy=float(np.trace(conf) / conf.sum()),
        confusion=conf.tolist(),
        per_class_recall=recall,
        config_hash=config_hash,
        seed=seed,
        classes=list(classes) if classes else [],
    )
