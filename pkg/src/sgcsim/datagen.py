"""Synthetic regression data and CSV ingestion."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import seeding


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    beta_bar: np.ndarray | None = None

    def __post_init__(self):
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError(f"y has length {self.y.shape}, expected {self.X.shape[0]}")
        if self.beta_bar is not None and self.beta_bar.shape != (self.X.shape[1],):
            raise ValueError("beta_bar length must equal the number of columns of X")

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def ell(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SynthConfig:
    m: int = 1000
    ell: int = 100
    feature_std: float = 100.0
    label_noise_std: float = 1.0
    coeff_low: int = 1
    coeff_high: int = 10
    seed: int = seeding.DEFAULT_SEED
    unit_rows: bool = False  # rescale every feature row to unit norm before labelling

    def __post_init__(self):
        if self.m < 1 or self.ell < 1:
            raise ValueError(f"m and ell must be positive (got m={self.m}, ell={self.ell})")
        if not self.feature_std > 0:
            raise ValueError("feature_std must be positive")
        if self.label_noise_std < 0:
            raise ValueError("label_noise_std must be non-negative")
        if self.coeff_low > self.coeff_high:
            raise ValueError("coeff_low must not exceed coeff_high")


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Gaussian features, integer planted coefficients, Gaussian label noise.

    ``x_i ~ N(0, feature_std^2 I)``, ``beta_bar_k ~ U{coeff_low..coeff_high}``,
    ``y_i = <x_i, beta_bar> + N(0, label_noise_std^2)``. Three independent
    sub-streams of ``cfg.seed`` are used, one per quantity.
    """
    rng_x = seeding.generator(cfg.seed, seeding.DATA, 0)
    rng_b = seeding.generator(cfg.seed, seeding.DATA, 1)
    rng_e = seeding.generator(cfg.seed, seeding.DATA, 2)
    X = cfg.feature_std * rng_x.standard_normal((cfg.m, cfg.ell))
    if cfg.unit_rows:
        X /= np.linalg.norm(X, axis=1, keepdims=True)
    beta_bar = rng_b.integers(cfg.coeff_low, cfg.coeff_high, size=cfg.ell, endpoint=True).astype(float)
    y = X @ beta_bar
    if cfg.label_noise_std > 0:
        y = y + cfg.label_noise_std * rng_e.standard_normal(cfg.m)
    return Dataset(X=X, y=y, beta_bar=beta_bar)


def normalize_spectral(data: Dataset, spectral_norm: float) -> Dataset:
    """Scale ``[X|y]`` by ``1/sqrt(||X^T X||)``.

    The least-squares optimum and the relative row norms are unchanged, and the
    rescaled Gram matrix has unit spectral norm.
    """
    s = 1.0 / math.sqrt(spectral_norm)
    return Dataset(X=data.X * s, y=data.y * s, beta_bar=data.beta_bar)


class CsvFormatError(ValueError):
    pass


def load_csv(path, has_header: bool = False) -> Dataset:
    """Read rows ``x_1,...,x_ell,y``; the last field is the label."""
    path = Path(path)
    rows = []
    width = None
    with path.open(newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if lineno == 1 and has_header:
                continue
            if not fields or all(not f.strip() for f in fields):
                continue
            if len(fields) < 2:
                raise CsvFormatError(f"{path}:{lineno}: need at least one feature and a label")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise CsvFormatError(f"{path}:{lineno}: expected {width} fields, got {len(fields)}")
            try:
                vals = [float(f) for f in fields]
            except ValueError:
                raise CsvFormatError(f"{path}:{lineno}: non-numeric field in {fields!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise CsvFormatError(f"{path}:{lineno}: NaN or infinite value")
            rows.append(vals)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    A = np.array(rows, dtype=float)
    return Dataset(X=A[:, :-1].copy(), y=A[:, -1].copy())
