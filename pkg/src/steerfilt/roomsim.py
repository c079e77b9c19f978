"""Shoebox image-source acoustics and sampling of simulated speaker scenes.

Rooms are axis-aligned boxes with uniform wall absorption derived from the
requested reverberation time through Sabine's formula. Impulse responses sum
mirrored virtual sources; fractional arrival times are rendered with an
81-tap Hann-windowed sinc kernel centered on the nearest sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import EstimationError, NumericError, ParameterError
from .signals import Waveform

SPEED_OF_SOUND = 343.0
SINC_HALF_TAPS = 40  # kernel has 2 * 40 + 1 = 81 taps
WALL_MARGIN = 0.05  # sources may not come closer than this to a wall [m]

_ROOM_RETRIES = 100
_PLACE_RETRIES = 50


@dataclass(frozen=True)
class RoomSpec:
    width: float
    length: float
    height: float
    t60: float

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.width, self.length, self.height])

    @property
    def volume(self) -> float:
        return self.width * self.length * self.height

    @property
    def surface(self) -> float:
        w, l, h = self.width, self.length, self.height
        return 2.0 * (w * l + w * h + l * h)


@dataclass(frozen=True)
class MicArray:
    """Three omnidirectional capsules equally spaced on a circle.

    ``center`` is the 3-D array center; ``rotation_deg`` turns the whole
    array about the vertical axis and is the reference for all source angles.
    """

    center: tuple[float, float, float]
    rotation_deg: float
    diameter: float = 0.10
    n_mics: int = 3

    def positions(self) -> np.ndarray:
        """Capsule coordinates, shape (n_mics, 3)."""
        radius = self.diameter / 2.0
        angles = np.deg2rad(self.rotation_deg + 360.0 * np.arange(self.n_mics) / self.n_mics)
        offsets = radius * np.stack([np.cos(angles), np.sin(angles), np.zeros_like(angles)], axis=1)
        return np.asarray(self.center) + offsets


@dataclass(frozen=True)
class SourcePlacement:
    """A speaker at ``angle_deg`` relative to the array rotation."""

    angle_deg: float
    distance: float
    height: float
    role: str = "target"  # "target" | "interferer"


@dataclass(frozen=True)
class Scenario:
    room: RoomSpec
    array: MicArray
    sources: tuple[SourcePlacement, ...]
    snr_db: float
    seed: int
    family: str

    def source_position(self, src: SourcePlacement) -> np.ndarray:
        phi = np.deg2rad(self.array.rotation_deg + src.angle_deg)
        cx, cy, _ = self.array.center
        return np.array([cx + src.distance * np.cos(phi), cy + src.distance * np.sin(phi), src.height])

    @property
    def targets(self) -> tuple[SourcePlacement, ...]:
        return tuple(s for s in self.sources if s.role == "target")

    @property
    def interferers(self) -> tuple[SourcePlacement, ...]:
        return tuple(s for s in self.sources if s.role == "interferer")


@dataclass
class Rir:
    taps: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if not np.all(np.isfinite(self.taps)):
            raise ParameterError("RIR contains non-finite taps")


def circular_distance(a: float | np.ndarray, b: float | np.ndarray) -> float | np.ndarray:
    d = np.abs(np.asarray(a) - np.asarray(b)) % 360.0
    return np.minimum(d, 360.0 - d)


def absorption_from_t60(room: RoomSpec) -> float:
    """Uniform wall absorption via Sabine: T60 = 0.161 V / (alpha S)."""
    if room.t60 <= 0:
        raise ParameterError(f"t60 must be positive, got {room.t60}")
    alpha = 0.161 * room.volume / (room.surface * room.t60)
    if not 0.0 < alpha < 1.0:
        raise ParameterError(
            f"t60={room.t60}s gives absorption {alpha:.3f} outside (0,1) for this room"
        )
    return alpha


def fractional_delay_kernel(delay: float, length: int) -> np.ndarray:
    """Windowed-sinc impulse at a fractional sample position, within a buffer
    of ``length`` samples. Exposed for direct-path reference rendering."""
    out = np.zeros(length)
    _scatter_images(out, np.array([delay]), np.array([1.0]))
    return out


def _scatter_images(rir: np.ndarray, delays: np.ndarray, amps: np.ndarray, chunk: int = 50_000):
    """Accumulate Hann-windowed sinc kernels (81 taps, centered on the
    nearest sample) into ``rir``; taps falling outside the buffer are dropped."""
    npts = rir.shape[0]
    half = SINC_HALF_TAPS
    offs = np.arange(-half, half + 1)
    halfw = half + 0.5
    for start in range(0, delays.shape[0], chunk):
        d = delays[start : start + chunk]
        a = amps[start : start + chunk]
        center = np.rint(d).astype(np.int64)
        u = offs[None, :] + (center - d)[:, None]  # |u| <= half + 0.5
        kernel = np.sinc(u) * (0.5 * (1.0 + np.cos(np.pi * u / halfw)))
        idx = (center[:, None] + offs[None, :]).ravel()
        vals = (a[:, None] * kernel).ravel()
        ok = (idx >= 0) & (idx < npts)
        rir += np.bincount(idx[ok], weights=vals[ok], minlength=npts)


def _axis_images(src: float, size: float, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Mirror coordinates and reflection counts along one axis.

    Images lie at (1 - 2q) * src + 2 m L for q in {0, 1}; the pair (q, m)
    bounces |m - q| times off the wall at 0 and |m| times off the wall at L.
    """
    m = np.arange(-n_max, n_max + 1)
    coords = np.concatenate([src + 2.0 * m * size, -src + 2.0 * m * size])
    counts = np.concatenate([np.abs(m) + np.abs(m), np.abs(m - 1) + np.abs(m)])
    return coords, counts


def image_sources(
    room: RoomSpec, src: np.ndarray, max_order: int | None, max_distance: float
) -> tuple[np.ndarray, np.ndarray]:
    """All image positions (N, 3) and total reflection counts (N,).

    With ``max_order`` set, every image of that total order is enumerated
    regardless of distance; otherwise images are pre-filtered per axis so the
    full set within ``max_distance`` of the room is covered.
    """
    dims = room.dims
    per_axis = []
    for axis in range(3):
        if max_order is not None:
            n_max = max_order // 2 + 1
        else:
            n_max = int(math.ceil(max_distance / (2.0 * dims[axis]))) + 1
        per_axis.append(_axis_images(float(src[axis]), float(dims[axis]), n_max))
    (cx, rx), (cy, ry), (cz, rz) = per_axis
    order = (
        rx[:, None, None] + ry[None, :, None] + rz[None, None, :]
    )  # (Nx, Ny, Nz) total reflections
    if max_order is not None:
        keep = order <= max_order
    else:
        keep = np.ones(order.shape, dtype=bool)
    xi, yi, zi = np.nonzero(keep)
    positions = np.stack([cx[xi], cy[yi], cz[zi]], axis=1)
    return positions, order[xi, yi, zi]


def compute_rir(
    room: RoomSpec,
    src,
    mic,
    sample_rate: int = 16000,
    max_order: int | None = None,
    duration: float | None = None,
) -> Rir:
    """Image-source impulse response from ``src`` to ``mic``.

    Per-image attenuation is beta**order / (4 pi distance) with beta the
    uniform pressure reflection coefficient sqrt(1 - alpha). Unless capped by
    ``max_order``, enough images are summed for the response to span the full
    requested reverberation time after the direct arrival.
    """
    src = np.asarray(src, dtype=np.float64)
    mic = np.asarray(mic, dtype=np.float64)
    for point, name in ((src, "source"), (mic, "microphone")):
        if np.any(point <= 0.0) or np.any(point >= room.dims):
            raise ParameterError(f"{name} at {point} is not strictly inside the room")
    alpha = absorption_from_t60(room)
    beta = math.sqrt(1.0 - alpha)
    direct = float(np.linalg.norm(src - mic))
    if duration is None:
        duration = direct / SPEED_OF_SOUND + room.t60
    positions, orders = image_sources(room, src, max_order, duration * SPEED_OF_SOUND)
    dists = np.linalg.norm(positions - mic, axis=1)
    delays = dists * sample_rate / SPEED_OF_SOUND
    amps = beta**orders / (4.0 * np.pi * dists)
    if max_order is None:
        keep = dists <= duration * SPEED_OF_SOUND
        delays, amps = delays[keep], amps[keep]
    npts = int(math.ceil(delays.max())) + SINC_HALF_TAPS + 1
    rir = np.zeros(npts)
    _scatter_images(rir, delays, amps)
    return Rir(rir, sample_rate)


def schroeder_curve(r: Rir) -> np.ndarray:
    """Backward-integrated energy decay, normalized to 1 at the start."""
    energy = np.cumsum(r.taps[::-1] ** 2)[::-1]
    total = energy[0]
    if total <= 0.0:
        raise EstimationError("RIR has no energy")
    return energy / total


def measure_t60(r: Rir) -> float:
    """Reverberation time by Schroeder integration: a line is fit to the
    decay between -5 and -25 dB and extrapolated to -60 dB."""
    if r.taps.shape[0] < 0.2 * r.sample_rate:
        raise ParameterError("need at least 200 ms of response to estimate T60")
    with np.errstate(divide="ignore"):
        decay_db = 10.0 * np.log10(schroeder_curve(r))
    below5 = np.nonzero(decay_db <= -5.0)[0]
    below25 = np.nonzero(decay_db <= -25.0)[0]
    if below5.size == 0 or below25.size == 0:
        raise EstimationError("decay never reaches -25 dB; response is not decaying")
    i5, i25 = below5[0], below25[0]
    t = np.arange(r.taps.shape[0]) / r.sample_rate
    window = np.nonzero((decay_db <= -5.0) & (decay_db >= -25.0))[0]
    if window.size < 8:
        # Degenerate (near-instant) decay: scale the -5 to -25 dB crossing gap.
        return 3.0 * (t[i25] - t[i5])
    slope, _ = np.polyfit(t[window], decay_db[window], 1)
    if slope >= 0.0:
        raise EstimationError("energy decay slope is non-negative")
    return float(-60.0 / slope)


@dataclass(frozen=True)
class ScenarioParams:
    """Sampling ranges for one scene family; defaults follow the standard
    evaluation geometry."""

    family: str = "fixed"  # "fixed" | "variable" | "separation"
    width_range: tuple[float, float] = (2.5, 5.0)
    length_range: tuple[float, float] = (3.0, 9.0)
    height_range: tuple[float, float] = (2.2, 3.5)
    t60_range: tuple[float, float] = (0.2, 0.5)
    array_height: float = 1.5
    array_wall_clearance: float = 1.0
    target_angle: float = 30.0  # fixed family
    grid_resolution_deg: float = 2.0  # variable family
    n_speakers: int = 2  # separation family
    n_interferers: int = 5
    target_distance: tuple[float, float] = (0.3, 1.0)
    speaker_distance: tuple[float, float] = (0.8, 1.2)  # separation family
    interferer_min_distance: float = 1.0
    exclusion_deg: float = 15.0
    min_gap_deg: float = 10.0
    snr_range: tuple[float, float] = (-14.0, 0.0)
    speaker_height_mean: float = 1.6
    speaker_height_std: float = 0.08

    def __post_init__(self):
        if self.family not in ("fixed", "variable", "separation"):
            raise ParameterError(f"unknown scenario family: {self.family}")
        if self.family == "variable" and 360.0 % self.grid_resolution_deg != 0:
            raise ParameterError("grid resolution must divide 360 degrees")
        if self.family == "separation" and self.n_speakers < 2:
            raise ParameterError("separation scenes need at least 2 speakers")


class _PlacementFailed(Exception):
    pass


def _reach(room: RoomSpec, origin: np.ndarray, angle_abs_deg: float) -> float:
    """Distance from origin to the nearest wall along a horizontal ray,
    minus the wall margin."""
    phi = math.radians(angle_abs_deg)
    direction = np.array([math.cos(phi), math.sin(phi)])
    reach = math.inf
    for axis in range(2):
        if direction[axis] > 1e-12:
            reach = min(reach, (room.dims[axis] - WALL_MARGIN - origin[axis]) / direction[axis])
        elif direction[axis] < -1e-12:
            reach = min(reach, (WALL_MARGIN - origin[axis]) / direction[axis])
    return reach


def _speaker_height(rng: np.random.Generator, room: RoomSpec, params: ScenarioParams) -> float:
    for _ in range(_PLACE_RETRIES):
        h = rng.normal(params.speaker_height_mean, params.speaker_height_std)
        if WALL_MARGIN < h < room.height - WALL_MARGIN:
            return float(h)
    raise _PlacementFailed("could not draw a speaker height inside the room")


def _place_source(
    rng, room, center, rotation, angle_rel, dist_range, min_reach, params
) -> SourcePlacement:
    reach = _reach(room, center[:2], rotation + angle_rel)
    lo, hi = dist_range
    if reach < max(lo, min_reach):
        raise _PlacementFailed(f"no room along {angle_rel:.1f} deg")
    dist = rng.uniform(lo, min(hi, reach)) if hi > lo else lo
    return SourcePlacement(angle_rel, float(dist), _speaker_height(rng, room, params), "target")


def _place_interferers(rng, room, center, rotation, target_angle, params) -> list[SourcePlacement]:
    """One interferer per angular segment of the arc outside the target's
    exclusion zone, each at least 1 m from the array center."""
    arc = 360.0 - 2.0 * params.exclusion_deg
    seg = arc / params.n_interferers
    out = []
    for i in range(params.n_interferers):
        seg_lo = target_angle + params.exclusion_deg + i * seg
        for attempt in range(_PLACE_RETRIES):
            angle = (seg_lo + rng.uniform(0.0, seg)) % 360.0
            reach = _reach(room, center[:2], rotation + angle)
            if reach >= params.interferer_min_distance:
                dist = rng.uniform(params.interferer_min_distance, reach)
                height = _speaker_height(rng, room, params)
                out.append(SourcePlacement(float(angle), float(dist), height, "interferer"))
                break
        else:
            raise _PlacementFailed(f"segment {i} cannot hold an interferer")
    return out


def _separation_angles(rng: np.random.Generator, params: ScenarioParams) -> list[float]:
    """The circle is split into one segment per speaker with a uniform draw
    in each; neighbors must stay at least ``min_gap_deg`` apart."""
    n = params.n_speakers
    seg = 360.0 / n
    for _ in range(_ROOM_RETRIES):
        angles = [i * seg + rng.uniform(0.0, seg) for i in range(n)]
        gaps = [circular_distance(angles[i], angles[(i + 1) % n]) for i in range(n)]
        if min(gaps) >= params.min_gap_deg:
            return angles
    raise _PlacementFailed("could not satisfy the minimum angular gap")


def sample_scenario(seed: int, params: ScenarioParams) -> Scenario:
    """Draw one scene; the same seed and params reproduce it bit-exactly.

    Rooms that cannot host a valid placement are resampled; a persistent
    failure after 100 rooms raises."""
    rng = np.random.default_rng(seed)
    for _ in range(_ROOM_RETRIES):
        room = RoomSpec(
            width=rng.uniform(*params.width_range),
            length=rng.uniform(*params.length_range),
            height=rng.uniform(*params.height_range),
            t60=rng.uniform(*params.t60_range),
        )
        clear = params.array_wall_clearance
        if room.width <= 2 * clear or room.length <= 2 * clear:
            continue
        center = (
            rng.uniform(clear, room.width - clear),
            rng.uniform(clear, room.length - clear),
            params.array_height,
        )
        rotation = rng.uniform(0.0, 360.0)
        array = MicArray(center=center, rotation_deg=rotation)
        snr_db = rng.uniform(*params.snr_range)
        origin = np.asarray(center)
        try:
            if params.family == "separation":
                angles = _separation_angles(rng, params)
                sources = [
                    _place_source(rng, room, origin, rotation, a, params.speaker_distance, 0.0, params)
                    for a in angles
                ]
            else:
                if params.family == "fixed":
                    target_angle = params.target_angle % 360.0
                else:
                    n_grid = int(round(360.0 / params.grid_resolution_deg))
                    target_angle = float(rng.integers(0, n_grid)) * params.grid_resolution_deg
                target = _place_source(
                    rng, room, origin, rotation, target_angle, params.target_distance, 0.0, params
                )
                sources = [target] + _place_interferers(
                    rng, room, origin, rotation, target_angle, params
                )
        except _PlacementFailed:
            continue
        return Scenario(room, array, tuple(sources), float(snr_db), seed, params.family)
    raise ParameterError("no feasible scene geometry after 100 room attempts")


@dataclass
class RenderResult:
    mixture: Waveform  # (n_mics, n) reverberant sum
    target_ref: Waveform | None  # direct-path target at the reference mic
    source_images: list[Waveform]  # per-source reverberant images, (n_mics, n)
    source_refs: list[Waveform]  # per-source direct-path references, mono


def _direct_path_ref(dry: np.ndarray, src_pos, mic_pos, sample_rate: int) -> np.ndarray:
    dist = float(np.linalg.norm(np.asarray(src_pos) - np.asarray(mic_pos)))
    delay = dist * sample_rate / SPEED_OF_SOUND
    length = int(math.ceil(delay)) + SINC_HALF_TAPS + 1
    kernel = fractional_delay_kernel(delay, length) / (4.0 * np.pi * dist)
    return fftconvolve(dry, kernel)[: dry.shape[0]]


def render_mixture(
    scenario: Scenario,
    dry_sources: list[Waveform],
    rir_provider=None,
) -> RenderResult:
    """Convolve each dry source with its room responses and mix.

    The interferer group gets one common gain so that the target-to-
    interferer power ratio at the reference channel equals the scene's SNR.
    ``rir_provider(room, src_pos, mic_positions) -> list[Rir]`` may replace
    the image-source engine (used for oracle tests).
    """
    if len(dry_sources) != len(scenario.sources):
        raise ParameterError(
            f"{len(dry_sources)} dry signals for {len(scenario.sources)} sources"
        )
    rate = dry_sources[0].sample_rate
    n = min(w.n_samples for w in dry_sources)
    mics = scenario.array.positions()

    if rir_provider is None:

        def rir_provider(room, src_pos, mic_positions):
            return [compute_rir(room, src_pos, m, rate) for m in mic_positions]

    images, refs = [], []
    for src, dry in zip(scenario.sources, dry_sources):
        pos = scenario.source_position(src)
        rirs = rir_provider(scenario.room, pos, mics)
        dry_mono = dry.mono()[:n]
        image = np.stack([fftconvolve(dry_mono, r.taps)[:n] for r in rirs])
        images.append(image)
        refs.append(_direct_path_ref(dry_mono, pos, mics[0], rate))

    roles = [s.role for s in scenario.sources]
    if "interferer" in roles:
        target_idx = roles.index("target")
        target_power = float(np.mean(images[target_idx][0] ** 2))
        interf = [im for im, r in zip(images, roles) if r == "interferer"]
        interf_power = float(np.mean(sum(im[0] for im in interf) ** 2))
        if target_power == 0.0 or interf_power == 0.0:
            raise NumericError("cannot scale SNR: silent target or interferer sum")
        gain = math.sqrt(target_power / (interf_power * 10.0 ** (scenario.snr_db / 10.0)))
        images = [im if r == "target" else im * gain for im, r in zip(images, roles)]
        target_ref = Waveform(refs[target_idx][None, :], rate)
    else:
        target_ref = None

    mixture = Waveform(sum(images), rate)
    return RenderResult(
        mixture=mixture,
        target_ref=target_ref,
        source_images=[Waveform(im, rate) for im in images],
        source_refs=[Waveform(r[None, :], rate) for r in refs],
    )
