"""Elementary acquisition blocks and the assembled compressed-acquisition model.

Each block is a :class:`~mrcakit.operators.LinearOp` with an exact adjoint
and a certified norm bound:

* ``spectral_degrade``   band mixing by a weight matrix (HRI branch);
* ``spatial_convolve``   per-band circular convolution (LRI branch blur);
* ``decimate``           regular spatial subsampling;
* ``mask_apply``         per-pixel per-band weighting (self-adjoint);
* ``shift_apply``        injective sample relocation (norm 1);
* ``sum_channels``       collapse of the band dimension onto one focal plane;
* ``butterworth_blur``   zero-phase frequency-domain low-pass.

``build_formation`` wires them into the four shipped presets: the full
multiresolution compressed acquisition (PAN and masked multispectral
samples summed on one focal plane), the plain multiresolution bundle, the
filter-array mosaic, and the coded-aperture acquisition with the one-pixel
per-band horizontal shear.

Convolution uses circular boundaries throughout: the adjoint is then an
exact correlation and the circulant spectral norm (max DFT magnitude of the
padded kernel) is exact, not just an upper bound.  The coefficient-l2
value is reported alongside for comparison, but it is NOT certified: for
the nonnegative kernel [0.5, 0.5] it gives sqrt(0.5) while the true norm
(the DC gain) is 1.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .masks import (
    Mask,
    BUILTIN_TILES,
    builtin_tile,
    parse_mask_file,
    periodic_mask,
    random_code_mask,
)
from .operators import LinearOp, add, compose, stack

__all__ = [
    "SpectralWeights",
    "BlurBank",
    "ShiftMap",
    "ConvNormBound",
    "average_weights",
    "gaussian_blur_bank",
    "delta_blur_bank",
    "spectral_degrade",
    "spatial_convolve",
    "conv_norm_bound",
    "decimate",
    "mask_apply",
    "shift_apply",
    "cassi_shift_map",
    "sum_channels",
    "mosaic",
    "butterworth_blur",
    "FormationPreset",
    "FormationModel",
    "formation_preset",
    "build_formation",
    "add_gaussian_noise",
    "equalize_lri_stats",
]

PRESET_NAMES = ("mrca", "multires", "cfa", "cassi")


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralWeights:
    """Spectral responses: row j holds the band weights of output channel j."""

    W: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.W, dtype=np.float64)
        if w.ndim != 2 or min(w.shape) < 1:
            raise ValueError(f"weights must be 2-D (np, nk), got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "W", w)

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    @property
    def n_in(self) -> int:
        return self.W.shape[1]


def average_weights(nk: int, n_out: int = 1) -> SpectralWeights:
    """Channel-average model: every output is the mean of the nk bands."""
    return SpectralWeights(np.full((n_out, nk), 1.0 / nk))


@dataclass(frozen=True)
class BlurBank:
    """One 2-D convolution kernel per band, shape (kh, kw, nk).

    The kernel anchor is the (kh//2, kw//2) cell, so even extents lean one
    sample toward the origin.
    """

    kernels: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernels, dtype=np.float64)
        if k.ndim != 3 or min(k.shape) < 1:
            raise ValueError(f"kernel bank must be 3-D (kh, kw, nk), got {k.shape}")
        if not np.all(np.isfinite(k)):
            raise ValueError("kernels must be finite")
        k = k.copy()
        k.flags.writeable = False
        object.__setattr__(self, "kernels", k)

    @property
    def extent(self) -> tuple[int, int]:
        return self.kernels.shape[:2]

    @property
    def nbands(self) -> int:
        return self.kernels.shape[2]


def gaussian_blur_bank(nk: int, ratio: int, gain_at_nyquist: float = 0.3,
                       radius: int | None = None,
                       max_radius: int | None = None) -> BlurBank:
    """Isotropic Gaussian kernels whose frequency response equals
    ``gain_at_nyquist`` at the Nyquist frequency of the 1/ratio grid.

    Kernels are normalized to unit sum (unit DC gain).  ``max_radius``
    truncates the support so the kernel fits small images.
    """
    if not 0.0 < gain_at_nyquist < 1.0:
        raise ValueError("gain at Nyquist must lie in (0, 1)")
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    f = 1.0 / (2.0 * ratio)
    sigma = np.sqrt(-np.log(gain_at_nyquist) / (2.0 * np.pi ** 2 * f ** 2))
    if radius is None:
        radius = max(1, int(np.ceil(4.0 * sigma)))
    if max_radius is not None:
        radius = min(radius, max(0, max_radius))
    t = np.arange(-radius, radius + 1)
    taps = np.exp(-0.5 * (t / sigma) ** 2)
    kernel = np.outer(taps, taps)
    kernel /= kernel.sum()
    return BlurBank(np.repeat(kernel[:, :, None], nk, axis=2))


def delta_blur_bank(nk: int) -> BlurBank:
    """Identity kernels (no blur)."""
    return BlurBank(np.ones((1, 1, nk)))


@dataclass(frozen=True)
class ShiftMap:
    """Injective relocation of every input sample to a target position.

    ``target_flat[q]`` is the raveled output index receiving raveled input
    sample q; positions not hit by any sample stay zero.
    """

    input_shape: tuple[int, int, int]
    output_shape: tuple[int, int, int]
    target_flat: np.ndarray

    def __post_init__(self):
        tf = np.asarray(self.target_flat, dtype=np.int64).ravel()
        n_in = int(np.prod(self.input_shape))
        n_out = int(np.prod(self.output_shape))
        if tf.size != n_in:
            raise ValueError(f"need one target per input sample ({n_in}), got {tf.size}")
        if tf.min(initial=0) < 0 or tf.max(initial=-1) >= n_out:
            raise ValueError("shift targets out of range")
        if np.unique(tf).size != tf.size:
            raise ValueError("shift map must be one-to-one")
        tf = tf.copy()
        tf.flags.writeable = False
        object.__setattr__(self, "input_shape", tuple(int(n) for n in self.input_shape))
        object.__setattr__(self, "output_shape", tuple(int(n) for n in self.output_shape))
        object.__setattr__(self, "target_flat", tf)


def cassi_shift_map(ni: int, nj: int, nk: int) -> ShiftMap:
    """One-pixel horizontal shear per band: sample (i, j, k) lands at
    (i, j + k, k) on an (ni, nj + nk - 1, nk) canvas (0-based indices)."""
    out_shape = (ni, nj + nk - 1, nk)
    ii, jj, kk = np.meshgrid(np.arange(ni), np.arange(nj), np.arange(nk), indexing="ij")
    flat = np.ravel_multi_index((ii, jj + kk, kk), out_shape).ravel()
    return ShiftMap((ni, nj, nk), out_shape, flat)


def identity_shift_map(ni: int, nj: int, nk: int) -> ShiftMap:
    shape = (ni, nj, nk)
    return ShiftMap(shape, shape, np.arange(ni * nj * nk))


# ---------------------------------------------------------------------------
# Elementary operators
# ---------------------------------------------------------------------------


def spectral_degrade(weights: SpectralWeights, shape: tuple[int, int, int]) -> LinearOp:
    """Band mixing: output channel j is the weighted combination of bands.

    The adjoint multiplies by the transposed weights; the bound is the
    exact largest singular value of the weight matrix.
    """
    ni, nj, nk = shape
    if weights.n_in != nk:
        raise ValueError(f"weights cover {weights.n_in} bands, cube has {nk}")
    W = weights.W
    bound = float(np.linalg.svd(W, compute_uv=False)[0])
    return LinearOp(
        shape, (ni, nj, weights.n_out),
        lambda x: x @ W.T,
        lambda y: y @ W,
        bound, name="spectral_degrade")


def _padded_kernel_fft(kernels: np.ndarray, ni: int, nj: int) -> np.ndarray:
    """DFT of the kernel bank zero-padded to (ni, nj), anchor at the origin."""
    kh, kw, nk = kernels.shape
    if kh > ni or kw > nj:
        raise ValueError(f"kernel extent {(kh, kw)} exceeds image {(ni, nj)}")
    padded = np.zeros((ni, nj, nk))
    padded[:kh, :kw, :] = kernels
    padded = np.roll(padded, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    return np.fft.fft2(padded, axes=(0, 1))


def spatial_convolve(bank: BlurBank, shape: tuple[int, int, int]) -> LinearOp:
    """Per-band circular convolution by the bank's kernels.

    The adjoint is the circular correlation by the same kernels; the bound
    is the exact circulant spectral norm (max DFT magnitude over bands).
    """
    ni, nj, nk = shape
    if bank.nbands != nk:
        raise ValueError(f"bank holds {bank.nbands} kernels, cube has {nk} bands")
    K = _padded_kernel_fft(bank.kernels, ni, nj)
    bound = float(np.max(np.abs(K)))

    def forward(x):
        return np.fft.ifft2(np.fft.fft2(x, axes=(0, 1)) * K, axes=(0, 1)).real

    def adjoint(y):
        return np.fft.ifft2(np.fft.fft2(y, axes=(0, 1)) * np.conj(K), axes=(0, 1)).real

    return LinearOp(shape, shape, forward, adjoint, bound, name="spatial_convolve")


class ConvNormBound(NamedTuple):
    """Exact circulant norm next to the uncertified coefficient-l2 value."""

    exact: float
    coefficient_l2: float


def conv_norm_bound(bank: BlurBank, image_shape: tuple[int, int]) -> ConvNormBound:
    """Norm of a band-wise circular convolution at the given image size.

    ``exact`` is the certified value (max DFT magnitude of the padded
    kernels); ``coefficient_l2`` is the root sum of squares of the
    coefficients, which underestimates the DC gain of nonnegative kernels
    and is reported for comparison only.
    """
    ni, nj = image_shape
    K = _padded_kernel_fft(bank.kernels, ni, nj)
    exact = float(np.max(np.abs(K)))
    coeff = float(np.max(np.sqrt(np.sum(bank.kernels ** 2, axis=(0, 1)))))
    return ConvNormBound(exact, coeff)


def decimate(shape: tuple[int, int, int], ratio: int) -> LinearOp:
    """Keep every ratio-th sample in both spatial directions (phase 0).

    The adjoint scatters the kept samples back with zeros elsewhere; as a
    selection operator the norm is exactly 1.
    """
    ni, nj, nk = shape
    if ratio < 1:
        raise ValueError("ratio must be a positive integer")
    if ni % ratio or nj % ratio:
        raise ValueError(f"ratio {ratio} does not divide image dims {(ni, nj)}")
    out_shape = (ni // ratio, nj // ratio, nk)

    def forward(x):
        return x[::ratio, ::ratio, :].copy()

    def adjoint(y):
        x = np.zeros(shape)
        x[::ratio, ::ratio, :] = y
        return x

    return LinearOp(shape, out_shape, forward, adjoint, 1.0, name=f"decimate({ratio})")


def mask_apply(mask: Mask) -> LinearOp:
    """Element-wise product by the mask, band by band (self-adjoint).

    The bound is the largest mask value (1 for non-degenerate binary masks).
    """
    h = mask.values
    bound = float(h.max(initial=0.0))
    return LinearOp(h.shape, h.shape, lambda x: x * h, lambda y: y * h,
                    bound, name="mask_apply")


def shift_apply(shift: ShiftMap) -> LinearOp:
    """Relocate samples along an injective map (norm exactly 1).

    The adjoint moves every sample back to its source position.
    """
    tf = shift.target_flat
    in_shape, out_shape = shift.input_shape, shift.output_shape
    n_out = int(np.prod(out_shape))

    def forward(x):
        out = np.zeros(n_out)
        out[tf] = x.ravel()
        return out.reshape(out_shape)

    def adjoint(y):
        return y.reshape(-1)[tf].reshape(in_shape)

    return LinearOp(in_shape, out_shape, forward, adjoint, 1.0, name="shift_apply")


def sum_channels(shape: tuple[int, int, int]) -> LinearOp:
    """Pixel-wise sum over bands onto a single focal plane.

    The adjoint replicates the flat image into every band; the bound is
    sqrt(nk) (triangle inequality per pixel, attained by equal bands).
    """
    ni, nj, nk = shape
    return LinearOp(
        shape, (ni, nj),
        lambda x: x.sum(axis=2),
        lambda y: np.repeat(y[:, :, None], nk, axis=2),
        float(np.sqrt(nk)), name="sum_channels")


def mosaic(mask: Mask, shift: ShiftMap | None = None) -> LinearOp:
    """Masking, optional shifting, then channel summation.

    The generic composition bound (sqrt(nk) times the mask peak) is
    tightened to the exact norm: the shift is injective, so distinct
    focal-plane cells consume disjoint samples and the Gramian is diagonal
    with entries equal to the mask energy deposited on each cell.
    """
    chain = mask_apply(mask)
    if shift is not None:
        if shift.input_shape != mask.shape:
            raise ValueError(f"shift consumes {shift.input_shape}, mask produces {mask.shape}")
        chain = compose(shift_apply(shift), chain)
    op = compose(sum_channels(chain.output_shape), chain)
    energy = mask.values ** 2
    if shift is not None:
        energy = shift_apply(shift).apply(energy)
    op.norm_bound = min(op.norm_bound, float(np.sqrt(energy.sum(axis=2).max())))
    op.name = "mosaic"
    return op


def butterworth_blur(shape, rho_b: float, order: int = 1) -> LinearOp:
    """Zero-phase low-pass with magnitude 1/sqrt(1 + (f/fc)^(2n)).

    ``rho_b`` is the blur diameter in pixels; the bilateral cutoff sits at
    fc = 1/rho_b cycles/px on the radial frequency axis.  Real even
    transfer, hence self-adjoint; the bound is the max transfer magnitude
    (1, at DC).  Works on flat images (2-D) and band-wise on cubes (3-D).
    """
    if rho_b <= 0:
        raise ValueError("blur diameter must be positive")
    if order < 1:
        raise ValueError("filter order must be >= 1")
    ni, nj = shape[0], shape[1]
    fi = np.fft.fftfreq(ni)[:, None]
    fj = np.fft.fftfreq(nj)[None, :]
    f = np.hypot(fi, fj)
    transfer = 1.0 / np.sqrt(1.0 + (f * rho_b) ** (2 * order))
    if len(shape) == 3:
        transfer = transfer[:, :, None]
    axes = (0, 1)

    def apply_transfer(x):
        return np.fft.ifft2(np.fft.fft2(x, axes=axes) * transfer, axes=axes).real

    return LinearOp(shape, shape, apply_transfer, apply_transfer,
                    float(transfer.max()), name=f"butterworth({rho_b:g})")


# ---------------------------------------------------------------------------
# Assembled formation presets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FormationPreset:
    """Serializable description of one acquisition setup.

    ``noise_sigma`` is the additive-noise standard deviation expressed as a
    fraction of the scene dynamic range; ``seed`` drives the random coded
    aperture when ``mask == "random"``.
    """

    name: str
    ni: int
    nj: int
    nk: int
    np_bands: int = 1
    ratio: int = 2
    mask: str = "bt4pan"
    lri_blur_gain: float = 0.3
    hri_blur: str = "identity"
    rho_b: float = 1.4
    butter_order: int = 1
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.name not in PRESET_NAMES:
            raise ValueError(f"unknown formation preset {self.name!r}; choose from {PRESET_NAMES}")
        if min(self.ni, self.nj, self.nk, self.np_bands) < 1:
            raise ValueError("dimensions must be positive")
        if self.hri_blur not in ("identity", "butterworth"):
            raise ValueError(f"unknown blur choice {self.hri_blur!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise level must be nonnegative")

    def to_text(self) -> str:
        pairs = dataclasses.asdict(self)
        return "".join(f"{k}={v}\n" for k, v in pairs.items())

    @classmethod
    def from_text(cls, text: str) -> "FormationPreset":
        raw: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"malformed preset line: {line!r}")
            key, value = line.split("=", 1)
            raw[key.strip()] = value.strip()
        kwargs: dict = {}
        for f in dataclasses.fields(cls):
            if f.name in raw:
                kwargs[f.name] = _PRESET_FIELD_TYPES[f.name](raw.pop(f.name))
        if raw:
            raise ValueError(f"unknown preset keys: {sorted(raw)}")
        if "name" not in kwargs:
            raise ValueError("preset file misses the formation name")
        return cls(**kwargs)


_PRESET_FIELD_TYPES = {
    "name": str, "ni": int, "nj": int, "nk": int, "np_bands": int,
    "ratio": int, "mask": str, "lri_blur_gain": float, "hri_blur": str,
    "rho_b": float, "butter_order": int, "noise_sigma": float, "seed": int,
}


_DEFAULT_MASKS = {"mrca": "bt4pan", "cfa": "quad4", "cassi": "random", "multires": "bt4pan"}


def formation_preset(name: str, ni: int, nj: int, nk: int, **overrides) -> FormationPreset:
    """Preset factory with a sensible default mask per formation kind."""
    overrides.setdefault("mask", _DEFAULT_MASKS.get(name, "bt4pan"))
    return FormationPreset(name=name, ni=ni, nj=nj, nk=nk, **overrides)


@dataclass
class FormationModel:
    """A built acquisition operator together with its mask geometry.

    ``lri_support`` / ``hri_support`` are boolean maps over the observation
    telling which samples come from the low- resp. high-resolution sensor
    class (used by the statistics equalization and the baseline
    reconstructor); either may be None when that sensor class is absent.
    """

    preset: FormationPreset
    op: LinearOp
    cube_shape: tuple[int, int, int]
    h_lri: Mask | None = None
    h_pan: Mask | None = None
    shift: ShiftMap | None = None
    lri_support: np.ndarray | None = None
    hri_support: np.ndarray | None = None

    @property
    def compression_ratio(self) -> float:
        return float(np.prod(self.op.output_shape) / np.prod(self.op.input_shape))


def _resolve_masks(preset: FormationPreset) -> tuple[Mask, Mask | None]:
    if preset.mask == "random":
        return random_code_mask(preset.ni, preset.nj, preset.nk, seed=preset.seed), None
    if preset.mask in BUILTIN_TILES:
        tile = builtin_tile(preset.mask)
    else:
        tile = parse_mask_file(preset.mask)
    if tile.nchannels != preset.nk:
        raise ValueError(
            f"mask {preset.mask!r} carries {tile.nchannels} channels, preset wants {preset.nk}")
    return periodic_mask(tile, preset.ni, preset.nj)


def build_formation(preset: FormationPreset) -> FormationModel:
    """Assemble the forward operator for a preset.

    * ``multires``  stacked pair: spectrally averaged HRI plus the blurred
      and decimated LRI (two separate acquisitions);
    * ``cfa``       mask-and-sum mosaic of the cube;
    * ``cassi``     mask, per-band horizontal shear, then sum;
    * ``mrca``      HRI branch (spectral average -> PAN mask -> optional
      blur) and LRI branch (per-band blur -> LRI mask) summed on one
      focal plane.  No decimation anywhere: the LRI mask already
      suppresses the samples a decimation would drop.
    """
    shape = (preset.ni, preset.nj, preset.nk)
    ni, nj, nk = shape

    if preset.name == "multires":
        w = average_weights(nk, preset.np_bands)
        hri_op = spectral_degrade(w, shape)
        bank = gaussian_blur_bank(nk, preset.ratio, preset.lri_blur_gain,
                                  max_radius=(min(ni, nj) - 1) // 2)
        lri_op = compose(decimate(shape, preset.ratio), spatial_convolve(bank, shape))
        op = stack(hri_op, lri_op)
        n_h = int(np.prod(hri_op.output_shape))
        hri_support = np.zeros(op.output_shape, dtype=bool)
        hri_support[:n_h] = True
        return FormationModel(preset, op, shape,
                              lri_support=~hri_support, hri_support=hri_support)

    h_lri, h_pan = _resolve_masks(preset)

    if preset.name == "cfa":
        op = mosaic(h_lri)
        return FormationModel(
            preset, op, shape, h_lri=h_lri, h_pan=h_pan,
            lri_support=h_lri.pixel_support(),
            hri_support=h_pan.pixel_support() if h_pan is not None else None)

    if preset.name == "cassi":
        shift = cassi_shift_map(ni, nj, nk)
        op = mosaic(h_lri, shift)
        support = op.apply(np.ones(shape)) > 0
        return FormationModel(preset, op, shape, h_lri=h_lri, h_pan=h_pan,
                              shift=shift, lri_support=support)

    # full compressed acquisition on one focal plane
    if h_pan is None:
        raise ValueError("the mrca preset needs a mask with PAN pixels (e.g. bt4pan)")
    if preset.np_bands != 1:
        raise ValueError("the mrca preset models a single PAN channel")
    branch_p = compose(mosaic(h_pan), spectral_degrade(average_weights(nk, 1), shape))
    if preset.hri_blur == "butterworth":
        branch_p = compose(
            butterworth_blur((ni, nj), preset.rho_b, preset.butter_order), branch_p)
    bank = gaussian_blur_bank(nk, preset.ratio, preset.lri_blur_gain,
                              max_radius=(min(ni, nj) - 1) // 2)
    branch_m = compose(mosaic(h_lri), spatial_convolve(bank, shape))
    op = add(branch_m, branch_p)
    disjoint = not np.any(h_lri.pixel_support() & h_pan.pixel_support())
    if disjoint and preset.hri_blur == "identity":
        # the branch outputs occupy complementary pixels, so their squared
        # norms add instead of the triangle-inequality bound
        op.norm_bound = min(op.norm_bound,
                            float(np.hypot(branch_m.norm_bound, branch_p.norm_bound)))
    op.name = "mrca"
    return FormationModel(preset, op, shape, h_lri=h_lri, h_pan=h_pan,
                          lri_support=h_lri.pixel_support(),
                          hri_support=h_pan.pixel_support())


# ---------------------------------------------------------------------------
# Observation conditioning
# ---------------------------------------------------------------------------


def add_gaussian_noise(y: np.ndarray, sigma: float, seed: int = 0) -> np.ndarray:
    """Seeded zero-mean iid Gaussian noise of standard deviation sigma."""
    if sigma < 0:
        raise ValueError("noise level must be nonnegative")
    y = np.asarray(y, dtype=np.float64)
    if sigma == 0:
        return y.copy()
    rng = np.random.default_rng(seed)
    return y + rng.normal(0.0, sigma, y.shape)


def equalize_lri_stats(y: np.ndarray, lri_support: np.ndarray,
                       hri_support: np.ndarray) -> np.ndarray:
    """Affinely rescale the LRI samples so their mean and standard
    deviation match the HRI samples (population statistics).

    A fixed point once applied; degenerate (zero-variance) LRI samples are
    rejected.
    """
    y = np.asarray(y, dtype=np.float64)
    lri_support = np.asarray(lri_support, dtype=bool)
    hri_support = np.asarray(hri_support, dtype=bool)
    if lri_support.shape != y.shape or hri_support.shape != y.shape:
        raise ValueError("supports must match the observation shape")
    if not lri_support.any() or not hri_support.any():
        raise ValueError("both sensor classes need at least one sample")
    lri = y[lri_support]
    hri = y[hri_support]
    s_l = lri.std()
    if s_l == 0:
        raise ValueError("LRI samples have zero variance; cannot equalize")
    out = y.copy()
    out[lri_support] = (lri - lri.mean()) * (hri.std() / s_l) + hri.mean()
    return out
