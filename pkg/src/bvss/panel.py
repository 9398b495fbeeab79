"""Pre/post-treatment panel container and CSV ingestion.

The CSV layout is wide: one header row, then one row per time period with
columns ``[time, treated, control_1, ..., control_N]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class PanelError(ValueError):
    """Raised when a panel file or array set fails validation."""


class PanelParseError(PanelError):
    pass


class PanelBoundsError(PanelError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PanelData:
    """Treated-unit outcomes and control-unit designs split at the treatment time.

    Attributes
    ----------
    Y : (M,) array
        Treated-unit outcomes before treatment.
    X : (M, N) array
        Control-unit outcomes before treatment.
    Xpost : (M_post, N) array
        Control-unit outcomes after treatment.
    Ypost1 : (M_post,) array
        Observed treated-unit outcomes after treatment.
    unit_names : tuple of str
        Labels of the N control units.
    time_labels : tuple of str
        Labels of all M + M_post periods.
    """

    Y: np.ndarray
    X: np.ndarray
    Xpost: np.ndarray
    Ypost1: np.ndarray
    unit_names: tuple = field(default=())
    time_labels: tuple = field(default=())

    def __post_init__(self):
        Y, X = _frozen(self.Y), _frozen(self.X)
        Xpost, Ypost1 = _frozen(self.Xpost), _frozen(self.Ypost1)
        if X.ndim != 2 or Xpost.ndim != 2:
            raise PanelError("X and Xpost must be 2-d")
        M, N = X.shape
        if Y.shape != (M,):
            raise PanelError(f"Y has shape {Y.shape}, expected ({M},)")
        if Xpost.shape[1] != N:
            raise PanelError(
                f"Xpost has {Xpost.shape[1]} columns but X has {N}"
            )
        if Ypost1.shape != (Xpost.shape[0],):
            raise PanelError("Ypost1 length must equal the number of rows of Xpost")
        if N < 2:
            raise PanelError(f"need at least 2 control units, got {N}")
        if M < 1 or Xpost.shape[0] < 1:
            raise PanelError("need at least one pre- and one post-treatment period")
        for name, a in (("Y", Y), ("X", X), ("Xpost", Xpost), ("Ypost1", Ypost1)):
            if not np.all(np.isfinite(a)):
                raise PanelError(f"{name} contains non-finite values")
        names = tuple(self.unit_names) or tuple(f"unit{k + 1}" for k in range(N))
        if len(names) != N:
            raise PanelError(f"expected {N} unit names, got {len(names)}")
        T = M + Xpost.shape[0]
        times = tuple(self.time_labels) or tuple(str(t + 1) for t in range(T))
        if len(times) != T:
            raise PanelError(f"expected {T} time labels, got {len(times)}")
        for name, value in (
            ("Y", Y), ("X", X), ("Xpost", Xpost), ("Ypost1", Ypost1),
            ("unit_names", names), ("time_labels", times),
        ):
            object.__setattr__(self, name, value)

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def M_post(self) -> int:
        return self.Xpost.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        """``X.T @ X``, cached."""
        return _frozen(self.X.T @ self.X)

    @cached_property
    def xty(self) -> np.ndarray:
        return _frozen(self.X.T @ self.Y)

    @cached_property
    def yty(self) -> float:
        return float(self.Y @ self.Y)


def load_panel(path, treatment_index: int) -> PanelData:
    """Read a wide panel CSV and split it at ``treatment_index``.

    Rows ``0 .. treatment_index - 1`` (after the header) are pre-treatment;
    the remaining rows are post-treatment.

    Raises
    ------
    PanelParseError
        On ragged rows or cells that are not finite numbers.
    PanelBoundsError
        If ``treatment_index`` does not leave at least one row on each side.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise PanelParseError(f"{path}: header and at least one data row required")
    header, body = rows[0], rows[1:]
    width = len(header)
    if width < 4:
        raise PanelParseError(
            f"{path}: need time, treated and at least two control columns"
        )
    times = []
    values = np.empty((len(body), width - 1))
    for r, row in enumerate(body):
        line = r + 2  # 1-based, header is line 1
        if len(row) != width:
            raise PanelParseError(
                f"{path}: row {line} has {len(row)} fields, expected {width}"
            )
        times.append(row[0].strip())
        for c, cell in enumerate(row[1:], start=1):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise PanelParseError(
                    f"{path}: non-numeric value {cell!r} at row {line}, "
                    f"column {c + 1} ({header[c]!r})"
                )
            values[r, c - 1] = v
    T = len(body)
    if not 1 <= treatment_index < T:
        raise PanelBoundsError(
            f"treatment index {treatment_index} out of range [1, {T - 1}]"
        )
    k = treatment_index
    return PanelData(
        Y=values[:k, 0],
        X=values[:k, 1:],
        Xpost=values[k:, 1:],
        Ypost1=values[k:, 0],
        unit_names=tuple(h.strip() for h in header[2:]),
        time_labels=tuple(times),
    )


def write_panel(p: PanelData, path, treated_name: str = "treated") -> None:
    """Write ``p`` in the layout read by :func:`load_panel` (17 significant digits)."""
    Y = np.concatenate([p.Y, p.Ypost1])
    X = np.vstack([p.X, p.Xpost])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", treated_name, *p.unit_names])
        for t, label in enumerate(p.time_labels):
            w.writerow([label, f"{Y[t]:.17g}", *(f"{v:.17g}" for v in X[t])])


def standardize_check(p: PanelData) -> np.ndarray:
    """Per-column ``||X_j||_2 / sqrt(M)``; 1.0 for columns scaled to squared norm M."""
    return np.sqrt(np.einsum("ij,ij->j", p.X, p.X) / p.M)
