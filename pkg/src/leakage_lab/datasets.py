"""Synthetic datasets for the attack experiments and a CSV loader for real ones."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import RngStream


@dataclass(eq=False)
class Dataset:
    """Features, integer labels and, optionally, a sensitive class per row.

    When ``sensitive`` is set, the last ``n_sensitive`` feature columns are
    its one-hot encoding; the remaining columns are the non-sensitive part.
    """

    x: np.ndarray
    y: np.ndarray
    n_classes: int
    sensitive: np.ndarray | None = None
    n_sensitive: int = 0

    def __len__(self):
        return self.x.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        if idx.size == 0:
            idx = idx.astype(int)
        sens = None if self.sensitive is None else self.sensitive[idx]
        return Dataset(self.x[idx], self.y[idx], self.n_classes, sens, self.n_sensitive)

    @property
    def v(self) -> np.ndarray:
        """Non-sensitive features."""
        return self.x[:, : self.x.shape[1] - self.n_sensitive]


def append_one_hot(v: np.ndarray, t, count: int) -> np.ndarray:
    """Concatenate non-sensitive features with the one-hot sensitive attribute."""
    v = np.atleast_2d(v)
    t = np.broadcast_to(np.asarray(t, dtype=int), (v.shape[0],))
    return np.hstack([v, np.eye(count)[t]])


def make_blobs(n: int, dim: int = 10, separation: float = 1.0, seed: int = 0, stream: int = 0) -> Dataset:
    """Two overlapping Gaussian classes with unit covariance.

    Class means sit at ``+-separation/2`` along every axis, so the Bayes
    accuracy is ``Phi(separation * sqrt(dim) / 2)``.
    """
    rng = RngStream(seed, stream).generator(1)
    y = rng.integers(2, size=n)
    centers = np.where(y[:, None] == 1, 0.5, -0.5) * separation
    x = centers + rng.standard_normal((n, dim))
    return Dataset(x, y, 2)


@dataclass(frozen=True)
class WriterDigitsConfig:
    """Parameters of the synthetic pen-trajectory generator.

    Every writer draws each digit from a shared template that is blended
    toward another digit's template chosen by a writer-specific
    permutation, then warped by a smooth writer-specific perturbation;
    samples add small per-sample noise.  The blending makes the writer
    identity informative about the label.  With ``writer_style`` off every
    writer shares one style, so the writer column carries no signal.
    """

    n_writers: int = 44
    n_digits: int = 10
    length: int = 32
    blend: float = 0.2
    writer_warp: float = 0.6
    sample_noise: float = 0.08
    n_harmonics: int = 4
    seed: int = 1234
    writer_style: bool = True


def _smooth_curves(rng, count: int, length: int, harmonics: int, scale: float) -> np.ndarray:
    """``count`` random 2-d curves built from low-frequency Fourier terms."""
    s = np.linspace(0.0, 1.0, length)
    k = np.arange(1, harmonics + 1)
    basis = np.concatenate([np.sin(np.pi * np.outer(s, k)), np.cos(np.pi * np.outer(s, k))], axis=1)
    coef = rng.standard_normal((count, 2, basis.shape[1])) / np.concatenate([k, k])
    return scale * np.einsum("lb,cdb->cld", basis, coef)


class WriterDigits:
    """Deterministic generator of (trajectory, stroke count, duration, writer, digit)."""

    def __init__(self, cfg: WriterDigitsConfig = WriterDigitsConfig()):
        self.cfg = cfg
        rng = RngStream(cfg.seed, 0).generator(0)
        self.templates = _smooth_curves(rng, cfg.n_digits, cfg.length, cfg.n_harmonics, 1.0)
        self.partner = np.stack([rng.permutation(cfg.n_digits) for _ in range(cfg.n_writers)])
        self.warps = _smooth_curves(
            rng, cfg.n_writers * cfg.n_digits, cfg.length, cfg.n_harmonics, cfg.writer_warp
        ).reshape(cfg.n_writers, cfg.n_digits, cfg.length, 2)
        self.strokes = rng.integers(1, 4, size=(cfg.n_writers, cfg.n_digits))
        self.speed = rng.uniform(0.3, 0.9, size=cfg.n_writers)

    @property
    def n_features(self) -> int:
        return 2 * self.cfg.length + 2

    def sample(self, n: int, seed: int, stream: int = 0) -> Dataset:
        cfg = self.cfg
        rng = RngStream(seed, stream).generator(2)
        writer = rng.integers(cfg.n_writers, size=n)
        digit = rng.integers(cfg.n_digits, size=n)
        style = writer if cfg.writer_style else np.zeros_like(writer)
        other = self.partner[style, digit]
        traj = (
            (1.0 - cfg.blend) * self.templates[digit]
            + cfg.blend * self.templates[other]
            + self.warps[style, digit]
            + _smooth_curves(rng, n, cfg.length, cfg.n_harmonics, cfg.sample_noise)
        )
        strokes = self.strokes[style, digit] + (rng.random(n) < 0.1)
        duration = np.clip(self.speed[style] + 0.05 * rng.standard_normal(n), 0.0, 1.0)
        v = np.hstack([traj[:, :, 0], traj[:, :, 1], strokes[:, None], duration[:, None]])
        x = append_one_hot(v, writer, cfg.n_writers)
        return Dataset(x, digit, cfg.n_digits, writer, cfg.n_writers)


class CsvFormatError(ValueError):
    pass


def load_csv_dataset(
    path,
    feature_count: int,
    label_column: str,
    sensitive_column: str | None = None,
    n_classes: int | None = None,
) -> Dataset:
    """Read a header-first numeric CSV into a :class:`Dataset`.

    Feature columns are the first ``feature_count`` columns that are neither
    the label nor the sensitive column.  Sensitive values are mapped to
    indices in sorted order and appended one-hot.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if all(_is_number(h) for h in header):
        raise CsvFormatError(f"{path}: missing header row")
    for name in (label_column, sensitive_column):
        if name is not None and name not in header:
            raise CsvFormatError(f"{path}: no column named {name!r}")
    label_idx = header.index(label_column)
    sens_idx = header.index(sensitive_column) if sensitive_column else None
    feat_idx = [i for i in range(len(header)) if i not in (label_idx, sens_idx)]
    if len(feat_idx) < feature_count:
        raise CsvFormatError(f"{path}: only {len(feat_idx)} feature columns, need {feature_count}")
    feat_idx = feat_idx[:feature_count]

    feats, labels, sens = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise CsvFormatError(f"{path}:{lineno}: non-numeric cell") from None
        lab = vals[label_idx]
        if lab != int(lab) or lab < 0 or (n_classes is not None and lab >= n_classes):
            raise CsvFormatError(f"{path}:{lineno}: label {row[label_idx]!r} out of range")
        feats.append([vals[i] for i in feat_idx])
        labels.append(int(lab))
        if sens_idx is not None:
            sens.append(vals[sens_idx])
    if not feats:
        raise CsvFormatError(f"{path}: no data rows")
    x = np.array(feats, dtype=float)
    y = np.array(labels, dtype=int)
    k = n_classes if n_classes is not None else int(y.max()) + 1
    if sens_idx is None:
        return Dataset(x, y, k)
    levels = sorted(set(sens))
    codes = np.array([levels.index(s) for s in sens], dtype=int)
    return Dataset(append_one_hot(x, codes, len(levels)), y, k, codes, len(levels))


def _is_number(s: str) -> bool:
    try:
        return math.isfinite(float(s))
    except ValueError:
        return False
