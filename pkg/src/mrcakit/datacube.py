"""Datacube container, lexicographic reshaping and raw file I/O.

A datacube is a 3-way array (rows x cols x bands).  All public indices are
0-based.  The lexicographic view stacks the spatial dimensions column-major
(all rows of column 0, then column 1, ...), so pixel (i, j) maps to
lexicographic row ``j * ni + i``.  Every operator in this package uses the
same enumeration, which is what makes the two views interchangeable.

Acquisitions (single-channel raw images) are handled as plain 2-D
``float64`` arrays of shape (ni, nj); stacked multi-part acquisitions as
1-D concatenations (see :mod:`mrcakit.operators`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DataCube",
    "matr",
    "unmatr",
    "frobenius_norm",
    "read_datacube",
    "write_datacube",
    "write_ppm",
]


@dataclass(frozen=True)
class DataCube:
    """Immutable image datacube with a declared dynamic range.

    Parameters
    ----------
    values : ndarray, shape (ni, nj, nk)
        Sample values; converted to read-only float64.
    rho : float
        Peak intensity of the data (e.g. 255 for 8-bit data). Strictly
        positive.
    band_labels : tuple of str, optional
        One label per band; defaults to ``b0, b1, ...``.
    """

    values: np.ndarray
    rho: float = 1.0
    band_labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or min(v.shape) < 1:
            raise ValueError(f"datacube must be 3-D with positive dims, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("datacube samples must be finite")
        if not (float(self.rho) > 0):
            raise ValueError(f"dynamic range must be positive, got {self.rho}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "rho", float(self.rho))
        labels = tuple(self.band_labels) or tuple(f"b{k}" for k in range(v.shape[2]))
        if len(labels) != v.shape[2]:
            raise ValueError("need one band label per band")
        object.__setattr__(self, "band_labels", labels)

    @property
    def ni(self) -> int:
        return self.values.shape[0]

    @property
    def nj(self) -> int:
        return self.values.shape[1]

    @property
    def nk(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def matr(self) -> np.ndarray:
        """Lexicographic (ni*nj, nk) view of the samples."""
        return matr(self.values)

    def with_values(self, values: np.ndarray) -> "DataCube":
        """New cube with the same dynamic range and labels."""
        return DataCube(values, rho=self.rho, band_labels=self.band_labels)


def matr(tensor: np.ndarray) -> np.ndarray:
    """Reshape an (ni, nj, nk) tensor to its (ni*nj, nk) lexicographic form.

    Row ``j * ni + i`` of the result holds pixel (i, j): the image columns
    are concatenated top to bottom.
    """
    t = np.asarray(tensor)
    if t.ndim != 3:
        raise ValueError(f"expected 3-D tensor, got shape {t.shape}")
    ni, nj, nk = t.shape
    return t.transpose(1, 0, 2).reshape(ni * nj, nk)


def unmatr(matrix: np.ndarray, ni: int, nj: int) -> np.ndarray:
    """Inverse of :func:`matr`: rebuild the (ni, nj, nk) tensor."""
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != ni * nj:
        raise ValueError(f"expected ({ni * nj}, nk) matrix, got shape {m.shape}")
    return m.reshape(nj, ni, m.shape[1]).transpose(1, 0, 2)


def frobenius_norm(cube) -> float:
    """Square root of the sum of squares of all samples."""
    v = cube.values if isinstance(cube, DataCube) else np.asarray(cube, dtype=np.float64)
    return float(np.linalg.norm(v.ravel()))


# ---------------------------------------------------------------------------
# File format: <stem>.raw holds the payload as little-endian float32, planar
# band-sequential (band 0 row-major plane, then band 1, ...); <stem>.hdr is a
# text sidecar with one key=value pair per line (ni, nj, nk, rho, bands).
# ---------------------------------------------------------------------------


def _stem(path: str) -> str:
    return path[:-4] if path.endswith((".raw", ".hdr")) else path


def write_datacube(path: str, cube: DataCube) -> None:
    """Write ``<stem>.raw`` plus the ``<stem>.hdr`` text sidecar."""
    stem = _stem(path)
    planar = cube.values.transpose(2, 0, 1)
    with open(stem + ".raw", "wb") as fh:
        fh.write(np.ascontiguousarray(planar, dtype="<f4").tobytes())
    with open(stem + ".hdr", "w", encoding="ascii") as fh:
        fh.write(f"ni={cube.ni}\n")
        fh.write(f"nj={cube.nj}\n")
        fh.write(f"nk={cube.nk}\n")
        fh.write(f"rho={cube.rho!r}\n")
        fh.write(f"bands={','.join(cube.band_labels)}\n")


def read_datacube(path: str) -> DataCube:
    """Read a datacube written by :func:`write_datacube`."""
    stem = _stem(path)
    header: dict[str, str] = {}
    with open(stem + ".hdr", "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"malformed header line: {line!r}")
            key, value = line.split("=", 1)
            header[key.strip()] = value.strip()
    try:
        ni, nj, nk = int(header["ni"]), int(header["nj"]), int(header["nk"])
        rho = float(header["rho"])
    except KeyError as exc:
        raise ValueError(f"header missing key {exc}") from exc
    labels = tuple(header.get("bands", "").split(",")) if header.get("bands") else ()
    payload = np.fromfile(stem + ".raw", dtype="<f4")
    if payload.size != ni * nj * nk:
        raise ValueError(
            f"payload holds {payload.size} samples, header implies {ni * nj * nk}"
        )
    values = payload.reshape(nk, ni, nj).transpose(1, 2, 0).astype(np.float64)
    return DataCube(values, rho=rho, band_labels=labels)


def write_ppm(path: str, cube: DataCube, bands: tuple[int, int, int] = (0, 1, 2)) -> None:
    """Export three selected bands as a binary portable pixmap (P6).

    Values are scaled by the cube's dynamic range and clipped to 0..255.
    """
    if len(bands) != 3:
        raise ValueError("exactly three bands are required")
    for b in bands:
        if not 0 <= b < cube.nk:
            raise ValueError(f"band {b} out of range for {cube.nk}-band cube")
    rgb = cube.values[:, :, list(bands)]
    scaled = np.clip(np.round(rgb / cube.rho * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{cube.nj} {cube.ni}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())
