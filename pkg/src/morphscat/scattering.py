"""Two-layer 2D Morlet wavelet scattering on a fixed-size frequency grid.

The cascade is the standard one: a lowpass average (order 0), then
modulus of wavelet responses re-averaged (order 1), then a second wavelet
layer applied to the first-layer modulus fields, restricted to
frequency-decreasing scale pairs (order 2). All convolutions are circular
and computed with mixed-radix FFTs directly on the native image size, so
identity examples stay exact. Output maps are subsampled at the invariance
stride.

Filters are sampled in the Fourier domain. Each wavelet family is scaled by
a single per-layer constant so that its Littlewood-Paley sum (including the
lowpass and the reflected rotations) stays at or below one everywhere; the
worst-case deficit from one is measured on the grid and reported on the
built bank, because a plain Gaussian-envelope family cannot cover the
corners of a square frequency grid and callers of the stability bounds need
the achieved number rather than an assumed one.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import DimensionMismatch, InvalidConfig

# Center frequency of the mother wavelet and spatial-std growth per octave.
XI_MAX = 0.75 * math.pi
SIGMA_SCALE = 0.8
LOWPASS_SIGMA_SCALE = 0.8


@dataclass(frozen=True)
class ScatteringConfig:
    """Parameters of the two-layer scattering network.

    Attributes
    ----------
    image_size : (rows, cols) of the input planes.
    num_octaves : J; the invariance scale is T = 2**J pixels.
    quality_factors : wavelets per octave in layer 1 and layer 2.
    num_rotations : rotation count per layer; angles span [0, pi).
    morlet_slant : eccentricity of the wavelet envelope (< 1 widens the
        angular response).
    oversampling : relaxes the output stride from 2**J to 2**(J - oversampling).
    """

    image_size: tuple[int, int] = (250, 250)
    num_octaves: int = 3
    quality_factors: tuple[int, int] = (2, 1)
    num_rotations: tuple[int, int] = (6, 6)
    morlet_slant: float = 0.5
    oversampling: int = 0

    def validate(self) -> None:
        rows, cols = self.image_size
        if rows < 1 or cols < 1:
            raise InvalidConfig(f"bad image size {self.image_size}")
        if self.num_octaves < 1:
            raise InvalidConfig("num_octaves must be >= 1")
        if 2**self.num_octaves > min(rows, cols):
            raise InvalidConfig(
                f"invariance scale 2^{self.num_octaves} exceeds image side "
                f"{min(rows, cols)}"
            )
        if min(self.quality_factors) < 1 or min(self.num_rotations) < 1:
            raise InvalidConfig("quality factors and rotation counts must be >= 1")
        if self.morlet_slant <= 0:
            raise InvalidConfig("morlet_slant must be positive")
        if self.oversampling < 0:
            raise InvalidConfig("oversampling must be >= 0")

    @property
    def stride(self) -> int:
        return 2 ** max(self.num_octaves - self.oversampling, 0)

    @property
    def output_shape(self) -> tuple[int, int]:
        rows, cols = self.image_size
        return (-(-rows // self.stride), -(-cols // self.stride))

    def to_dict(self) -> dict:
        return {
            "image_size": list(self.image_size),
            "num_octaves": self.num_octaves,
            "quality_factors": list(self.quality_factors),
            "num_rotations": list(self.num_rotations),
            "morlet_slant": self.morlet_slant,
            "oversampling": self.oversampling,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScatteringConfig":
        cfg = cls(
            image_size=tuple(d["image_size"]),
            num_octaves=int(d["num_octaves"]),
            quality_factors=tuple(d["quality_factors"]),
            num_rotations=tuple(d["num_rotations"]),
            morlet_slant=float(d["morlet_slant"]),
            oversampling=int(d["oversampling"]),
        )
        cfg.validate()
        return cfg

    def config_hash(self) -> bytes:
        """32-byte digest of the canonical config encoding."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).digest()


@dataclass(frozen=True)
class ScatteringPath:
    """One node of the scattering tree.

    order 0 carries no wavelet indices; order 1 carries (j1, t1); order 2
    additionally carries (j2, t2) with j2 > j1. Scales j are in octaves and
    may be fractional when a layer has more than one wavelet per octave.
    """

    order: int
    j1: float | None = None
    t1: int | None = None
    j2: float | None = None
    t2: int | None = None

    @property
    def sort_key(self):
        return (
            self.order,
            -1.0 if self.j1 is None else self.j1,
            -1 if self.t1 is None else self.t1,
            -1.0 if self.j2 is None else self.j2,
            -1 if self.t2 is None else self.t2,
        )


def _layer_scales(num_octaves: int, q: int) -> list[float]:
    return [m / q for m in range(q * num_octaves)]


def count_paths(config: ScatteringConfig) -> int:
    """Closed-form path count: 1 + L1*Q1*J + L1*L2*|{(j1, j2): j2 > j1}|."""
    config.validate()
    j_max = config.num_octaves
    q1, q2 = config.quality_factors
    l1, l2 = config.num_rotations
    pairs = 0
    for m2 in range(q2 * j_max):
        # number of m1 in [0, Q1*J) with m1/Q1 < m2/Q2, i.e. m1*Q2 < m2*Q1
        pairs += min(q1 * j_max, -((-m2 * q1) // q2))
    return 1 + l1 * q1 * j_max + l1 * l2 * pairs


def enumerate_paths(config: ScatteringConfig) -> list[ScatteringPath]:
    """All scattering paths in canonical order.

    Order-0 first, then order-1 sorted by (j1, t1), then order-2 sorted by
    (j1, t1, j2, t2) over frequency-decreasing scale pairs.
    """
    config.validate()
    j_max = config.num_octaves
    q1, q2 = config.quality_factors
    l1, l2 = config.num_rotations
    paths = [ScatteringPath(order=0)]
    scales1 = _layer_scales(j_max, q1)
    scales2 = _layer_scales(j_max, q2)
    for j1 in scales1:
        for t1 in range(l1):
            paths.append(ScatteringPath(order=1, j1=j1, t1=t1))
    for m1, j1 in enumerate(scales1):
        for t1 in range(l1):
            for m2, j2 in enumerate(scales2):
                if m2 * q1 <= m1 * q2:  # exact rational j2 > j1 test
                    continue
                for t2 in range(l2):
                    paths.append(ScatteringPath(order=2, j1=j1, t1=t1, j2=j2, t2=t2))
    return paths


@dataclass(frozen=True)
class WaveletFilter:
    """One Fourier-domain wavelet with its tree metadata."""

    j: float
    scale_index: int
    rotation: int
    theta: float
    hat: np.ndarray  # real float64, fftfreq layout
    stride: int = 1  # applied to maps convolved with this filter


@dataclass(frozen=True)
class LittlewoodPaleyReport:
    """Frame diagnostics measured on the frequency grid at build time."""

    epsilon: float  # worst deficit from 1 across layers, full grid
    layer_min: tuple[float, float]
    layer_max: tuple[float, float]
    layer_scale: tuple[float, float]  # amplitude factor applied per layer


@dataclass(frozen=True)
class FilterBank:
    """Fourier-domain realization of the scattering network.

    Wavelet responses are kept at full resolution (per-filter stride 1);
    the only subsampling happens after the final averaging, at
    ``config.stride``. Immutable after construction; share freely across
    workers.
    """

    config: ScatteringConfig
    lowpass: np.ndarray  # real float64, fftfreq layout, DC gain 1
    layer1: tuple[WaveletFilter, ...]
    layer2: tuple[WaveletFilter, ...]
    littlewood_paley: LittlewoodPaleyReport

    @property
    def lp_epsilon(self) -> float:
        return self.littlewood_paley.epsilon


def _frequency_grid(rows: int, cols: int):
    w_r = 2.0 * np.pi * sfft.fftfreq(rows)
    w_c = 2.0 * np.pi * sfft.fftfreq(cols)
    return np.meshgrid(w_r, w_c, indexing="ij")


def _morlet_hat(rows, cols, j, theta, slant):
    """Sample one zero-mean Morlet wavelet on the frequency grid.

    Gaussian envelope of spatial std SIGMA_SCALE * 2**j (elongated by
    1/slant across the oscillation direction), centered at radius
    XI_MAX * 2**-j along angle theta, minus the DC-cancelling Gaussian.
    """
    sigma = SIGMA_SCALE * 2.0**j
    xi = XI_MAX * 2.0**-j
    w1, w2 = _frequency_grid(rows, cols)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    def envelope(c1, c2):
        par = c1 * cos_t + c2 * sin_t
        perp = -c1 * sin_t + c2 * cos_t
        return np.exp(-0.5 * sigma**2 * (par**2 + (perp / slant) ** 2))

    gabor = envelope(w1 - xi * cos_t, w2 - xi * sin_t)
    centered = envelope(w1, w2)
    beta = math.exp(-0.5 * sigma**2 * xi**2)
    hat = gabor - beta * centered
    hat[0, 0] = 0.0
    return hat


def _lowpass_hat(rows, cols, num_octaves):
    sigma = LOWPASS_SIGMA_SCALE * 2.0**num_octaves
    w1, w2 = _frequency_grid(rows, cols)
    return np.exp(-0.5 * sigma**2 * (w1**2 + w2**2))


def _reflect_hat(hat):
    """Values of the filter at negated frequencies, exactly on the grid."""
    rows, cols = hat.shape
    return hat[np.ix_((-np.arange(rows)) % rows, (-np.arange(cols)) % cols)]


def build_filter_bank(config: ScatteringConfig) -> FilterBank:
    """Construct the Fourier-domain filter bank for a config.

    Each layer's wavelets are multiplied by one scalar chosen so that
    |phi|^2 + 0.5 * sum(|psi(w)|^2 + |psi(-w)|^2) never exceeds 1 on the
    grid while coming as close to 1 as that cap allows. The worst deficit
    actually achieved is reported in the returned bank's diagnostics.
    """
    config.validate()
    rows, cols = config.image_size
    phi = _lowpass_hat(rows, cols, config.num_octaves)
    phi2 = phi**2

    layers = []
    mins, maxs, scales_applied = [], [], []
    for q, n_rot in zip(config.quality_factors, config.num_rotations):
        raw = []
        lp_sum = np.zeros((rows, cols))
        for m, j in enumerate(_layer_scales(config.num_octaves, q)):
            for t in range(n_rot):
                theta = t * math.pi / n_rot
                hat = _morlet_hat(rows, cols, j, theta, config.morlet_slant)
                raw.append((j, m, t, theta, hat))
                lp_sum += 0.5 * (hat**2 + _reflect_hat(hat) ** 2)
        covered = lp_sum > 0.0
        scale2 = float(np.min((1.0 - phi2[covered]) / lp_sum[covered]))
        scale = math.sqrt(scale2)
        lp_total = phi2 + scale2 * lp_sum
        filters = tuple(
            WaveletFilter(j=j, scale_index=m, rotation=t, theta=theta, hat=hat * scale)
            for j, m, t, theta, hat in raw
        )
        layers.append(filters)
        mins.append(float(lp_total.min()))
        maxs.append(float(lp_total.max()))
        scales_applied.append(scale)

    report = LittlewoodPaleyReport(
        epsilon=float(1.0 - min(mins)),
        layer_min=(mins[0], mins[1]),
        layer_max=(maxs[0], maxs[1]),
        layer_scale=(scales_applied[0], scales_applied[1]),
    )
    return FilterBank(
        config=config,
        lowpass=phi,
        layer1=layers[0],
        layer2=layers[1],
        littlewood_paley=report,
    )


@dataclass(frozen=True)
class FeatureLayout:
    """How a feature vector was flattened."""

    paths: tuple[ScatteringPath, ...]
    map_shape: tuple[int, int]

    @property
    def length(self) -> int:
        return len(self.paths) * self.map_shape[0] * self.map_shape[1]


@dataclass(frozen=True)
class ScatteringFeatures:
    """Per-path coefficient maps at the subsampled resolution."""

    config: ScatteringConfig
    maps: dict  # ScatteringPath -> 2D float64 array

    def paths(self) -> tuple[ScatteringPath, ...]:
        return tuple(self.maps.keys())


@dataclass(frozen=True)
class FeatureVector:
    """Flattened scattering features, canonical path order, row-major maps."""

    values: np.ndarray
    layout: FeatureLayout


def _subsample(plane: np.ndarray, stride: int) -> np.ndarray:
    return plane[::stride, ::stride]


def _second_layer_start(bank: FilterBank, f1: WaveletFilter) -> int:
    """Index of the first layer-2 filter with j2 > f1.j.

    layer2 is ordered by (scale, rotation), so the eligible filters form a
    suffix; the comparison is exact in integers.
    """
    q1, q2 = bank.config.quality_factors
    for idx, f2 in enumerate(bank.layer2):
        if f2.scale_index * q1 > f1.scale_index * q2:
            return idx
    return len(bank.layer2)


def _cascade(plane: np.ndarray, bank: FilterBank):
    """Yield (path, S-map) pairs in canonical order.

    Wavelet responses are complex and need full-grid transforms, batched per
    parent node; the averaging stages act on real fields whose spectra are
    Hermitian, so they run through half-spectrum (rfft) transforms.
    """
    cfg = bank.config
    stride = cfg.stride
    rows, cols = cfg.image_size
    half = cols // 2 + 1
    phi_half = bank.lowpass[:, :half]

    def average(field_hat_half):
        smooth = sfft.irfft2(field_hat_half * phi_half, s=(rows, cols), axes=(-2, -1))
        return smooth[..., ::stride, ::stride]

    x_hat = sfft.fft2(plane)
    yield ScatteringPath(order=0), average(x_hat[:, :half])

    l1_hats = np.stack([f.hat for f in bank.layer1])
    u1_all = np.abs(sfft.ifft2(x_hat[None] * l1_hats, axes=(-2, -1)))
    u1_hats = sfft.fft2(u1_all, axes=(-2, -1))
    s1_all = average(u1_hats[:, :, :half])
    for i, f1 in enumerate(bank.layer1):
        yield ScatteringPath(order=1, j1=f1.j, t1=f1.rotation), s1_all[i]

    l2_hats = np.stack([f.hat for f in bank.layer2])
    for i, f1 in enumerate(bank.layer1):
        start = _second_layer_start(bank, f1)
        if start == len(bank.layer2):
            continue
        u2 = np.abs(sfft.ifft2(u1_hats[i][None] * l2_hats[start:], axes=(-2, -1)))
        s2_all = average(sfft.rfft2(u2, axes=(-2, -1)))
        for k, f2 in enumerate(bank.layer2[start:]):
            yield (
                ScatteringPath(order=2, j1=f1.j, t1=f1.rotation, j2=f2.j, t2=f2.rotation),
                s2_all[k],
            )


def scattering_transform(plane: np.ndarray, bank: FilterBank) -> ScatteringFeatures:
    """Compute all scattering coefficient maps of one real plane.

    The plane must match the bank's configured image size. Returns one map
    per enumerated path, subsampled at the invariance stride.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.shape != bank.config.image_size:
        raise DimensionMismatch(
            f"plane {plane.shape} does not match config {bank.config.image_size}"
        )
    maps = {path: s_map for path, s_map in _cascade(plane, bank)}
    return ScatteringFeatures(config=bank.config, maps=maps)


def propagation_energies(plane: np.ndarray, bank: FilterBank) -> dict:
    """Sum of squared modulus-field values per order, before averaging.

    Used to check that energy decays down the cascade.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.shape != bank.config.image_size:
        raise DimensionMismatch("plane does not match config image size")
    x_hat = sfft.fft2(plane)
    e1 = 0.0
    e2 = 0.0
    for f1 in bank.layer1:
        u1 = np.abs(sfft.ifft2(x_hat * f1.hat))
        e1 += float(np.sum(u1**2))
        u1_hat = sfft.fft2(u1)
        for f2 in bank.layer2[_second_layer_start(bank, f1):]:
            u2 = np.abs(sfft.ifft2(u1_hat * f2.hat))
            e2 += float(np.sum(u2**2))
    return {"order1": e1, "order2": e2}


def feature_vector(feats: ScatteringFeatures) -> FeatureVector:
    """Flatten coefficient maps into one vector with its layout descriptor."""
    paths = feats.paths()
    first = feats.maps[paths[0]]
    layout = FeatureLayout(paths=paths, map_shape=first.shape)
    values = np.concatenate([feats.maps[p].ravel() for p in paths])
    return FeatureVector(values=values, layout=layout)
