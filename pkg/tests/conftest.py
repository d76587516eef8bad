"""Shared test helpers: dense materialization oracles and random operator
generators used by the adjoint/norm property suites."""

from __future__ import annotations

import numpy as np
import pytest

from mrcakit.formation import (
    BlurBank,
    ShiftMap,
    SpectralWeights,
    butterworth_blur,
    decimate,
    mask_apply,
    shift_apply,
    spatial_convolve,
    spectral_degrade,
    sum_channels,
)
from mrcakit.masks import Mask
from mrcakit.operators import LinearOp, add, compose, stack
from mrcakit.regularizers import tv_op


def to_dense(op: LinearOp) -> np.ndarray:
    """Materialize a small operator as its dense matrix (test oracle only)."""
    n_in = int(np.prod(op.input_shape))
    n_out = int(np.prod(op.output_shape))
    mat = np.zeros((n_out, n_in))
    basis = np.zeros(n_in)
    for col in range(n_in):
        basis[:] = 0.0
        basis[col] = 1.0
        mat[:, col] = op.apply(basis.reshape(op.input_shape)).ravel()
    return mat


def dense_matrix_op(mat: np.ndarray) -> LinearOp:
    """Wrap an explicit matrix as an operator (bound from its SVD)."""
    mat = np.asarray(mat, dtype=np.float64)
    bound = float(np.linalg.svd(mat, compute_uv=False)[0]) if mat.size else 0.0
    return LinearOp((mat.shape[1],), (mat.shape[0],),
                    lambda x: mat @ x, lambda y: mat.T @ y, bound, name="dense")


def random_shift_map(rng: np.random.Generator, shape) -> ShiftMap:
    """Random injective embedding into a slightly larger canvas."""
    n_in = int(np.prod(shape))
    out_shape = (shape[0] + int(rng.integers(0, 2)),
                 shape[1] + int(rng.integers(0, 3)), shape[2])
    n_out = int(np.prod(out_shape))
    targets = rng.permutation(n_out)[:n_in]
    return ShiftMap(shape, out_shape, targets)


def random_block(rng: np.random.Generator, shape) -> LinearOp:
    """One random elementary formation block consuming a cube shape."""
    ni, nj, nk = shape
    kind = rng.integers(0, 7)
    if kind == 0:
        n_out = int(rng.integers(1, nk + 2))
        return spectral_degrade(SpectralWeights(rng.standard_normal((n_out, nk))), shape)
    if kind == 1:
        kh = int(rng.integers(1, min(ni, 4) + 1))
        kw = int(rng.integers(1, min(nj, 4) + 1))
        return spatial_convolve(BlurBank(rng.standard_normal((kh, kw, nk))), shape)
    if kind == 2:
        ratios = [r for r in (1, 2, 3) if ni % r == 0 and nj % r == 0]
        return decimate(shape, int(rng.choice(ratios)))
    if kind == 3:
        return mask_apply(Mask(rng.uniform(0.0, 2.0, shape), tuple(range(nk))))
    if kind == 4:
        return shift_apply(random_shift_map(rng, shape))
    if kind == 5:
        return sum_channels(shape)
    return butterworth_blur(shape, rho_b=float(rng.uniform(0.5, 3.0)),
                            order=int(rng.integers(1, 4)))


def tv_adapter(shape) -> LinearOp:
    """TV followed by a band merge back to 3-D so it can enter chains."""
    grad = tv_op(shape)
    ni, nj, nk = shape
    merged = (ni, nj, nk * 2)
    reshape = LinearOp(grad.output_shape, merged,
                       lambda w: w.reshape(merged),
                       lambda v: v.reshape(grad.output_shape), 1.0, name="reshape")
    return compose(reshape, grad)


def random_composition(rng: np.random.Generator, depth: int = 3) -> LinearOp:
    """A random conformable chain of blocks, sometimes stacked or summed."""
    shape = (int(rng.integers(2, 7)), int(rng.integers(2, 7)), int(rng.integers(1, 5)))
    op = tv_adapter(shape) if rng.random() < 0.25 else random_block(rng, shape)
    for _ in range(depth - 1):
        if len(op.output_shape) != 3:
            break
        op = compose(random_block(rng, op.output_shape), op)
    choice = rng.integers(0, 3)
    if choice == 0:
        op = stack(op, random_block(rng, op.input_shape))
    elif choice == 1:
        op = add(op, op)
    return op


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
