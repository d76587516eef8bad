"""Reconstruction quality indices and report serialization.

PSNR uses the reference cube's declared dynamic range as the peak (not the
empirical max), SAM is the mean per-pixel spectral angle in degrees, SSIM
is the classic windowed index (11x11 Gaussian window, sigma 1.5, constants
(0.01 rho)^2 and (0.03 rho)^2) averaged over bands.  All three hit their
perfect values (+inf, 0, 1) exactly when the estimate equals the reference.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import convolve2d

from .datacube import DataCube
from .formation import FormationModel, FormationPreset, build_formation

__all__ = [
    "psnr",
    "sam",
    "ssim",
    "compression_ratio",
    "QualityReport",
    "write_report",
    "read_report",
]


def _check_same_shape(ref: DataCube, est: DataCube) -> None:
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch: reference {ref.shape} vs estimate {est.shape}")


def psnr(ref: DataCube, est: DataCube) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the MSE vanishes."""
    _check_same_shape(ref, est)
    mse = float(np.mean((ref.values - est.values) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(ref.rho ** 2 / mse)


def sam(ref: DataCube, est: DataCube, zero_as_zero_angle: bool = False) -> float:
    """Mean per-pixel angle between reference and estimated spectra, in
    degrees.

    Computed through the chord length of the unit spectra
    (``2 asin(|u - v|/2)``), which is exact for identical inputs and does
    not lose precision at small angles the way the arccos form does.
    Pixels where either spectrum is the zero vector are left out of the
    average (or counted as 0 degrees with ``zero_as_zero_angle``).
    """
    _check_same_shape(ref, est)
    if ref.nk < 2:
        raise ValueError("spectral angles need at least two bands")
    r = ref.values.reshape(-1, ref.nk)
    e = est.values.reshape(-1, est.nk)
    nr = np.linalg.norm(r, axis=1)
    ne = np.linalg.norm(e, axis=1)
    valid = (nr > 0) & (ne > 0)
    if not valid.any():
        return 0.0 if zero_as_zero_angle else math.nan
    u = r[valid] / nr[valid, None]
    v = e[valid] / ne[valid, None]
    chord = np.linalg.norm(u - v, axis=1)
    angles = np.degrees(2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0)))
    if zero_as_zero_angle:
        return float(np.sum(angles) / r.shape[0])
    return float(np.mean(angles))


_SSIM_WINDOW_SIZE = 11
_SSIM_SIGMA = 1.5


def _ssim_window() -> np.ndarray:
    t = np.arange(_SSIM_WINDOW_SIZE) - (_SSIM_WINDOW_SIZE - 1) / 2.0
    g = np.exp(-0.5 * (t / _SSIM_SIGMA) ** 2)
    w = np.outer(g, g)
    return w / w.sum()


def ssim(ref: DataCube, est: DataCube) -> float:
    """Structural similarity, averaged over bands (Gaussian window)."""
    _check_same_shape(ref, est)
    if min(ref.ni, ref.nj) < _SSIM_WINDOW_SIZE:
        raise ValueError(
            f"image {ref.ni}x{ref.nj} is smaller than the {_SSIM_WINDOW_SIZE}-tap window")
    c1 = (0.01 * ref.rho) ** 2
    c2 = (0.03 * ref.rho) ** 2
    window = _ssim_window()

    def filt(img):
        return convolve2d(img, window, mode="valid")

    scores = []
    for k in range(ref.nk):
        a = ref.values[:, :, k]
        b = est.values[:, :, k]
        mu_a, mu_b = filt(a), filt(b)
        var_a = filt(a * a) - mu_a ** 2
        var_b = filt(b * b) - mu_b ** 2
        cov = filt(a * b) - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def compression_ratio(formation: FormationModel | FormationPreset) -> float:
    """Acquired sample count over reconstructed sample count."""
    model = formation if isinstance(formation, FormationModel) else build_formation(formation)
    return model.compression_ratio


@dataclass(frozen=True)
class QualityReport:
    """One comparison row, mirroring the experiment tables."""

    dataset: str
    formation: str
    reconstruction: str
    lambda_bar: float | None
    ssim: float
    psnr: float
    sam: float
    compression_ratio: float

    FIELDS = ("dataset", "formation", "reconstruction", "lambda_bar",
              "ssim", "psnr", "sam", "compression_ratio")

    def to_row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]


def write_report(path: str, rows: list[QualityReport], fmt: str = "csv") -> None:
    """Serialize report rows as CSV (header + rows) or a JSON array.

    Infinite PSNR is written as ``inf`` in CSV and as ``Infinity`` in JSON
    (both read back to an infinite float).
    """
    if fmt == "csv":
        with open(path, "w", newline="", encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(QualityReport.FIELDS)
            for row in rows:
                writer.writerow(row.to_row())
    elif fmt == "json":
        with open(path, "w", encoding="ascii") as fh:
            json.dump([asdict(r) for r in rows], fh, indent=2)
            fh.write("\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}; choose csv or json")


def read_report(path: str) -> list[QualityReport]:
    """Read back a report written by :func:`write_report` (by extension)."""
    if path.endswith(".json"):
        with open(path, "r", encoding="ascii") as fh:
            return [QualityReport(**row) for row in json.load(fh)]
    with open(path, "r", newline="", encoding="ascii") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            rows.append(QualityReport(
                dataset=rec["dataset"],
                formation=rec["formation"],
                reconstruction=rec["reconstruction"],
                lambda_bar=None if rec["lambda_bar"] == "" else float(rec["lambda_bar"]),
                ssim=float(rec["ssim"]),
                psnr=float(rec["psnr"]),
                sam=float(rec["sam"]),
                compression_ratio=float(rec["compression_ratio"]),
            ))
        return rows
