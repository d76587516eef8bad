"""Gradient operators and the collaborative norms used to regularize them.

The gradient of an (ni, nj, nk) cube is a 4-way field (ni, nj, nk, 2)
holding backward differences along rows (direction 0) and columns
(direction 1).  Out-of-range neighbors count as zero, so the first
row/column carries the raw sample value; a ``replicate`` boundary variant
(zero gradient at the border) is available as a switch.  The adjoint is the
exact transpose of whichever variant is selected, certified by the
inner-product test rather than transcribed from a closed form.

Three metric norms are shipped, each with the proximal operator of its
Fenchel conjugate (the projection onto the dual-norm ball of radius
lambda, applied pixel by pixel):

* ``l221``  sum over pixels of the l2 norm of the (nk x 2) gradient block;
* ``l111``  plain l1 over everything (LASSO);
* ``s1l1``  sum over pixels of the nuclear norm of the gradient block.

Alternative gradient transforms can be plugged into the solver as any
LinearOp producing a 4-way field with a self-declared norm bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import LinearOp

__all__ = [
    "TV_NORM_BOUND",
    "tv_forward",
    "tv_adjoint",
    "tv_norm_bound",
    "tv_op",
    "gradient_operator",
    "MetricNorm",
    "metric_norm",
    "g_eval",
    "prox_conj",
    "block_singular_values",
]

TV_NORM_BOUND = float(np.sqrt(8.0))

NORM_KINDS = ("l221", "l111", "s1l1")
BOUNDARIES = ("zero", "replicate")


def _check_boundary(boundary: str) -> None:
    if boundary not in BOUNDARIES:
        raise ValueError(f"unknown boundary {boundary!r}; choose from {BOUNDARIES}")


def _diff(x: np.ndarray, axis: int, boundary: str) -> np.ndarray:
    d = np.diff(x, axis=axis, prepend=0.0)
    if boundary == "replicate":
        d[(slice(None),) * axis + (0,)] = 0.0
    return d


def _diff_adjoint(w: np.ndarray, axis: int, boundary: str) -> np.ndarray:
    if boundary == "replicate":
        w = w.copy()
        w[(slice(None),) * axis + (0,)] = 0.0
    return -np.diff(w, axis=axis, append=0.0)


def tv_forward(x: np.ndarray, boundary: str = "zero") -> np.ndarray:
    """Per-band backward differences; returns the (ni, nj, nk, 2) field."""
    _check_boundary(boundary)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected a 3-D cube, got shape {x.shape}")
    return np.stack([_diff(x, 0, boundary), _diff(x, 1, boundary)], axis=3)


def tv_adjoint(w: np.ndarray, boundary: str = "zero") -> np.ndarray:
    """Exact adjoint of :func:`tv_forward` (a negative divergence whose
    border handling mirrors the forward convention)."""
    _check_boundary(boundary)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4 or w.shape[3] != 2:
        raise ValueError(f"expected an (ni, nj, nk, 2) field, got shape {w.shape}")
    return _diff_adjoint(w[..., 0], 0, boundary) + _diff_adjoint(w[..., 1], 1, boundary)


def tv_norm_bound() -> float:
    """Certified bound sqrt(8): each difference operator has norm < 2 and
    the two act on orthogonal axes."""
    return TV_NORM_BOUND


def tv_op(shape: tuple[int, int, int], boundary: str = "zero") -> LinearOp:
    """The gradient transform packaged as a LinearOp."""
    _check_boundary(boundary)
    ni, nj, nk = shape
    return LinearOp(
        shape, (ni, nj, nk, 2),
        lambda x: tv_forward(x, boundary),
        lambda w: tv_adjoint(w, boundary),
        TV_NORM_BOUND, name=f"tv[{boundary}]")


def gradient_operator(name: str, shape: tuple[int, int, int],
                      boundary: str = "zero") -> LinearOp:
    """Gradient transform by name; only the classic two-direction variant
    ships, but any conforming LinearOp can be passed to the solver."""
    if name != "tv":
        raise ValueError(f"unknown gradient operator {name!r}; only 'tv' is built in")
    return tv_op(shape, boundary)


# ---------------------------------------------------------------------------
# Per-pixel singular values of the (nk x nm) gradient blocks
# ---------------------------------------------------------------------------


def _gram2_eigs(w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray,
                                        np.ndarray, np.ndarray]:
    """Eigenvalues (mu1 >= mu2) of the 2x2 Gramians W^T W, vectorized over
    leading axes of an (..., nk, 2) field; also returns the Gram entries.

    The small eigenvalue comes from det(G)/mu1 with the Gram determinant
    accumulated as a sum of squared 2x2 minors (Cauchy-Binet), which avoids
    the catastrophic cancellation of g11*g22 - g12^2 on near-rank-1 blocks.
    """
    b1, b2 = w[..., 0], w[..., 1]
    g11 = np.einsum("...k,...k->...", b1, b1)
    g22 = np.einsum("...k,...k->...", b2, b2)
    g12 = np.einsum("...k,...k->...", b1, b2)
    tr = g11 + g22
    disc = np.sqrt(np.maximum((g11 - g22) ** 2 + 4.0 * g12 ** 2, 0.0))
    mu1 = 0.5 * (tr + disc)
    minors = b1[..., :, None] * b2[..., None, :] - b1[..., None, :] * b2[..., :, None]
    det = 0.5 * np.einsum("...ij,...ij->...", minors, minors)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu2 = np.where(mu1 > 0.0, det / np.where(mu1 > 0.0, mu1, 1.0), 0.0)
    return mu1, mu2, g11, g22, g12


def block_singular_values(w: np.ndarray) -> np.ndarray:
    """Singular values of every per-pixel (nk, nm) block, largest first.

    Uses the closed-form 2x2 Gram eigen-decomposition when nm == 2 and a
    batched SVD otherwise.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4:
        raise ValueError(f"expected a 4-D field, got shape {w.shape}")
    if w.shape[3] == 2:
        mu1, mu2, *_ = _gram2_eigs(w)
        return np.stack([np.sqrt(mu1), np.sqrt(mu2)], axis=-1)
    ni, nj, nk, nm = w.shape
    return np.linalg.svd(w.reshape(ni * nj, nk, nm), compute_uv=False).reshape(ni, nj, -1)


def g_eval(kind: str, w: np.ndarray) -> float:
    """Evaluate the chosen metric norm on a gradient field."""
    w = np.asarray(w, dtype=np.float64)
    if kind == "l221":
        return float(np.sum(np.sqrt(np.sum(w ** 2, axis=(2, 3)))))
    if kind == "l111":
        return float(np.sum(np.abs(w)))
    if kind == "s1l1":
        return float(np.sum(block_singular_values(w)))
    raise ValueError(f"unknown norm kind {kind!r}; choose from {NORM_KINDS}")


def _prox_conj_s1l1(w: np.ndarray, lam: float) -> np.ndarray:
    """Per-pixel projection onto the spectral-norm ball of radius lam."""
    if w.shape[3] == 2:
        mu1, mu2, g11, g22, g12 = _gram2_eigs(w)
        xi1, xi2 = np.sqrt(mu1), np.sqrt(mu2)
        with np.errstate(divide="ignore", invalid="ignore"):
            c1 = np.where(xi1 > lam, lam / xi1, 1.0)
            c2 = np.where(xi2 > lam, lam / xi2, 1.0)
        # any scalar function of the symmetric 2x2 Gramian is alpha*I + beta*G
        gap = mu1 - mu2
        safe = gap > 1e-12 * np.maximum(mu1, 1e-300)
        beta = np.where(safe, (c1 - c2) / np.where(safe, gap, 1.0), 0.0)
        alpha = c1 - beta * mu1
        m00 = alpha + beta * g11
        m11 = alpha + beta * g22
        m01 = beta * g12
        out = np.empty_like(w)
        out[..., 0] = w[..., 0] * m00[..., None] + w[..., 1] * m01[..., None]
        out[..., 1] = w[..., 0] * m01[..., None] + w[..., 1] * m11[..., None]
        return out
    ni, nj, nk, nm = w.shape
    u, s, vt = np.linalg.svd(w.reshape(ni * nj, nk, nm), full_matrices=False)
    s = np.minimum(s, lam)
    return (u @ (s[..., None] * vt)).reshape(w.shape)


def prox_conj(kind: str, w: np.ndarray, lam: float) -> np.ndarray:
    """Proximal operator of the Fenchel conjugate of ``lam * g``: the
    pixel-separable projection onto the dual-norm ball of radius lam.

    Idempotent and nonexpansive for every kind.
    """
    if lam <= 0:
        raise ValueError("the regularization weight must be positive")
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4:
        raise ValueError(f"expected a 4-D field, got shape {w.shape}")
    if kind == "l221":
        norms = np.sqrt(np.sum(w ** 2, axis=(2, 3)))
        scale = 1.0 / np.maximum(norms / lam, 1.0)
        return w * scale[:, :, None, None]
    if kind == "l111":
        return np.clip(w, -lam, lam)
    if kind == "s1l1":
        return _prox_conj_s1l1(w, lam)
    raise ValueError(f"unknown norm kind {kind!r}; choose from {NORM_KINDS}")


@dataclass(frozen=True)
class MetricNorm:
    """A named metric norm bundling evaluation and conjugate prox."""

    kind: str

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}; choose from {NORM_KINDS}")

    def __call__(self, w: np.ndarray) -> float:
        return g_eval(self.kind, w)

    def eval(self, w: np.ndarray) -> float:
        return g_eval(self.kind, w)

    def prox_conj(self, w: np.ndarray, lam: float) -> np.ndarray:
        return prox_conj(self.kind, w, lam)


def metric_norm(kind: str) -> MetricNorm:
    return MetricNorm(kind)
