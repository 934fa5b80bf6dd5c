"""Random shoebox scene generation: geometry, image-source RIRs, rendering.

Scenes follow a fixed recipe: one target source, one noise source and 4
nodes of 4 microphones each, all at least 0.5 m away from the walls; the
two sources keep 0.5 m from each other and from every node centre.  The
microphones of a node form a horizontal 5 cm square around the node
centre, so a node-internal array is compact enough to be treated as
sample-synchronous hardware.

RIRs are computed with the image-source method for shoebox rooms: each
image contributes a windowed-sinc pulse at its fractional propagation
delay, attenuated by 1/r spreading and by the wall reflection
coefficient sqrt(1 - absorption) per bounce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from asyncse.signals import TimeSignal

SPEED_OF_SOUND = 343.0

N_NODES = 4
MICS_PER_NODE = 4
MIN_SPACING = 0.5
MIC_SQUARE_SIDE = 0.05

_MIC_OFFSETS = 0.5 * MIC_SQUARE_SIDE * np.array(
    [[-1, -1, 0], [-1, 1, 0], [1, -1, 0], [1, 1, 0]], dtype=float
)

# fractional-delay pulse used to place image arrivals
_FDL = 81
_FDL_HALF = _FDL // 2

_ROOM_RANGES = {"length": (3.0, 8.0), "width": (3.0, 5.0), "height": (2.0, 3.0)}


@dataclass(frozen=True)
class RoomGeometry:
    length: float
    width: float
    height: float
    absorption: float

    def __post_init__(self):
        for name in ("length", "width", "height"):
            lo, hi = _ROOM_RANGES[name]
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"room {name} {v} m outside supported range [{lo}, {hi}] m")
        if not 0.0 < self.absorption <= 1.0:
            raise ValueError(f"absorption must be in (0, 1], got {self.absorption}")

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.length, self.width, self.height])

    def contains(self, point: np.ndarray) -> bool:
        p = np.asarray(point)
        return bool(np.all(p > 0) and np.all(p < self.dims))


@dataclass(frozen=True)
class ScenePlacement:
    target_pos: np.ndarray
    noise_pos: np.ndarray
    node_centers: np.ndarray  # (N_NODES, 3)
    mic_positions: np.ndarray  # (N_NODES, MICS_PER_NODE, 3)


@dataclass(frozen=True)
class SceneSignals:
    """Per-mic source images and their sum; mixtures == target + noise exactly."""

    target_images: np.ndarray  # (K, M, L)
    noise_images: np.ndarray  # (K, M, L)
    mixtures: np.ndarray  # (K, M, L)
    sample_rate: int = 16000

    @property
    def n_nodes(self) -> int:
        return self.target_images.shape[0]

    @property
    def mics_per_node(self) -> int:
        return self.target_images.shape[1]


def placement_ok(room: RoomGeometry, placement: ScenePlacement) -> bool:
    """Check every 0.5 m constraint: walls, source-source, source-node."""
    dims = room.dims
    sources = np.stack([placement.target_pos, placement.noise_pos])
    mics = placement.mic_positions.reshape(-1, 3)
    for pts in (sources, mics):
        if np.any(pts < MIN_SPACING) or np.any(dims - pts < MIN_SPACING):
            return False
    if np.linalg.norm(placement.target_pos - placement.noise_pos) < MIN_SPACING:
        return False
    for src in sources:
        dist = np.linalg.norm(placement.node_centers - src, axis=1)
        if np.any(dist < MIN_SPACING):
            return False
    return True


def sample_scene(seed: int, max_rejections: int = 10000) -> tuple[RoomGeometry, ScenePlacement]:
    """Draw a random scene; deterministic for a fixed seed.

    Room dimensions are drawn once and only the placement is
    rejection-sampled, so dimension histograms stay uniform over their
    ranges regardless of how hard a given room is to populate.
    """
    rng = np.random.default_rng(seed)
    room = RoomGeometry(
        length=rng.uniform(*_ROOM_RANGES["length"]),
        width=rng.uniform(*_ROOM_RANGES["width"]),
        height=rng.uniform(*_ROOM_RANGES["height"]),
        absorption=rng.uniform(0.3, 0.8),
    )
    dims = room.dims
    lo = np.full(3, MIN_SPACING)
    # node centres keep an extra half mic-square so every mic clears the walls
    node_lo = lo + np.array([MIC_SQUARE_SIDE / 2, MIC_SQUARE_SIDE / 2, 0.0])
    for attempt in range(max_rejections):
        target = rng.uniform(lo, dims - lo)
        noise = rng.uniform(lo, dims - lo)
        centers = rng.uniform(node_lo, dims - node_lo, size=(N_NODES, 3))
        mics = centers[:, None, :] + _MIC_OFFSETS[None, :, :]
        placement = ScenePlacement(target, noise, centers, mics)
        if placement_ok(room, placement):
            return room, placement
    raise RuntimeError(
        f"could not place sources/nodes after {max_rejections} rejections in a "
        f"{room.length:.2f} x {room.width:.2f} x {room.height:.2f} m room"
    )


def _axis_images(coord: float, size: float, max_order: int) -> list[tuple[float, int]]:
    """1-D image coordinates and their reflection counts up to max_order."""
    out = []
    for m in range(-max_order - 1, max_order + 2):
        n_even = abs(2 * m)
        if n_even <= max_order:
            out.append((coord + 2 * m * size, n_even))
        n_odd = abs(2 * m - 1)
        if n_odd <= max_order:
            out.append((-coord + 2 * m * size, n_odd))
    return out


def simulate_rir(
    room: RoomGeometry,
    src: np.ndarray,
    mic: np.ndarray,
    max_order: int = 6,
    sample_rate: int = 16000,
) -> TimeSignal:
    """Image-source RIR between a source and a microphone.

    Each image at distance r contributes beta**n / r at delay r / c, with
    beta = sqrt(1 - absorption) and n its bounce count; fractional delays
    are realised with an 81-tap Hann-windowed sinc.
    """
    src = np.asarray(src, dtype=float)
    mic = np.asarray(mic, dtype=float)
    if not room.contains(src):
        raise ValueError(f"source position {src} outside room")
    if not room.contains(mic):
        raise ValueError(f"microphone position {mic} outside room")

    beta = np.sqrt(1.0 - room.absorption)
    axes = [
        _axis_images(src[0], room.length, max_order),
        _axis_images(src[1], room.width, max_order),
        _axis_images(src[2], room.height, max_order),
    ]
    coords, counts = [], []
    for cx, nx in axes[0]:
        for cy, ny in axes[1]:
            n_xy = nx + ny
            if n_xy > max_order:
                continue
            for cz, nz in axes[2]:
                if n_xy + nz <= max_order:
                    coords.append((cx, cy, cz))
                    counts.append(n_xy + nz)
    coords = np.asarray(coords)
    counts = np.asarray(counts)

    dist = np.linalg.norm(coords - mic, axis=1)
    delays = dist / SPEED_OF_SOUND * sample_rate
    amps = beta**counts / dist

    n_samples = int(np.ceil(delays.max())) + _FDL_HALF + 1
    rir = np.zeros(n_samples)
    centers = np.round(delays).astype(int)
    offsets = np.arange(-_FDL_HALF, _FDL_HALF + 1)
    idx = centers[:, None] + offsets[None, :]
    u = idx - delays[:, None]
    pulses = np.sinc(u) * (0.5 + 0.5 * np.cos(np.pi * u / (_FDL_HALF + 1)))
    # normalise each pulse by its band-limited gain at the arrival time, so
    # an arrival of amplitude a really peaks at a after reconstruction
    gains = np.einsum("ij,ij->i", pulses, np.sinc(u))
    pulses *= (amps / gains)[:, None]
    valid = (idx >= 0) & (idx < n_samples)
    np.add.at(rir, idx[valid], pulses[valid])
    return TimeSignal(rir, sample_rate)


def render_scene(
    placement: ScenePlacement,
    room: RoomGeometry,
    target_dry: TimeSignal,
    noise_dry: TimeSignal,
    snr_db: float | None = 0.0,
    max_order: int = 6,
) -> SceneSignals:
    """Convolve dry sources with per-mic RIRs and mix at a given SNR.

    The SNR is set at the first microphone of node 1 by scaling the noise
    images; snr_db=None leaves the raw convolution levels untouched.
    """
    if target_dry.sample_rate != noise_dry.sample_rate:
        raise ValueError("target and noise sample rates differ")
    fs = target_dry.sample_rate
    n_dry = min(len(target_dry), len(noise_dry))
    if n_dry == 0:
        raise ValueError("zero-energy source: empty dry signal")
    t_dry = target_dry.samples[:n_dry]
    n_dry_sig = noise_dry.samples[:n_dry]
    if not np.any(t_dry != 0.0):
        raise ValueError("zero-energy source: target dry signal is silent")
    if snr_db is not None and not np.any(n_dry_sig != 0.0):
        raise ValueError("zero-energy source: noise dry signal is silent")

    mics = placement.mic_positions
    n_nodes, n_mics = mics.shape[:2]
    rirs_t, rirs_n = [], []
    for k in range(n_nodes):
        for m in range(n_mics):
            rirs_t.append(simulate_rir(room, placement.target_pos, mics[k, m], max_order, fs).samples)
            rirs_n.append(simulate_rir(room, placement.noise_pos, mics[k, m], max_order, fs).samples)
    rir_len = max(len(r) for r in rirs_t + rirs_n)
    out_len = n_dry + rir_len - 1

    def images(dry, rirs):
        out = np.zeros((n_nodes, n_mics, out_len))
        for i, rir in enumerate(rirs):
            conv = fftconvolve(dry, rir)
            out[i // n_mics, i % n_mics, : len(conv)] = conv
        return out

    target_images = images(t_dry, rirs_t)
    noise_images = images(n_dry_sig, rirs_n)

    if snr_db is not None:
        e_s = np.sum(target_images[0, 0] ** 2)
        e_n = np.sum(noise_images[0, 0] ** 2)
        if e_n == 0.0:
            raise ValueError("zero-energy source: noise image is silent at the reference mic")
        noise_images *= np.sqrt(e_s / (e_n * 10.0 ** (snr_db / 10.0)))

    return SceneSignals(target_images, noise_images, target_images + noise_images, fs)


# --- built-in synthetic sources -------------------------------------------


def synthetic_speech(duration_s: float, sample_rate: int = 16000, seed: int = 0) -> TimeSignal:
    """Speech-like test source: band-passed noise, amplitude-modulated with
    syllable-rate fluctuations and occasional pauses."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    x = rng.standard_normal(n)
    # rough vocal band: difference of smoothed versions ~ 150-3500 Hz
    x = _smooth(x, int(sample_rate / 7000) + 1) - _smooth(x, int(sample_rate / 300) + 1)

    env = np.zeros(n)
    pos = 0
    while pos < n:
        burst = int(rng.uniform(0.15, 0.45) * sample_rate)
        pause = int(rng.uniform(0.05, 0.30) * sample_rate)
        level = rng.uniform(0.5, 1.0)
        env[pos : pos + burst] = level
        pos += burst + pause
    env = _smooth(env, int(0.02 * sample_rate))
    t = np.arange(n) / sample_rate
    env *= 1.0 + 0.4 * np.sin(2 * np.pi * 3.7 * t + rng.uniform(0, 2 * np.pi))

    x *= env
    rms = np.sqrt(np.mean(x**2))
    if rms == 0.0:
        raise RuntimeError("synthetic speech came out silent; use a different seed")
    return TimeSignal(0.1 * x / rms, sample_rate)


def synthetic_noise(duration_s: float, sample_rate: int = 16000, seed: int = 1) -> TimeSignal:
    """Stationary coloured noise source (low-pass shaped white noise)."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    x = rng.standard_normal(n)
    x = _smooth(x, int(sample_rate / 2500) + 1)
    rms = np.sqrt(np.mean(x**2))
    return TimeSignal(0.1 * x / rms, sample_rate)


def synthetic_interferer(duration_s: float, sample_rate: int = 16000, seed: int = 1) -> TimeSignal:
    """Nonstationary interferer: amplitude-modulated coloured noise with its
    own burst/pause pattern, competing in the same band as the target."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    x = rng.standard_normal(n)
    x = _smooth(x, int(sample_rate / 5000) + 1) - _smooth(x, int(sample_rate / 250) + 1)

    env = np.zeros(n)
    pos = 0
    while pos < n:
        burst = int(rng.uniform(0.2, 0.6) * sample_rate)
        pause = int(rng.uniform(0.05, 0.25) * sample_rate)
        env[pos : pos + burst] = rng.uniform(0.4, 1.0)
        pos += burst + pause
    env = _smooth(env, int(0.03 * sample_rate))

    x *= env
    rms = np.sqrt(np.mean(x**2))
    if rms == 0.0:
        raise RuntimeError("synthetic interferer came out silent; use a different seed")
    return TimeSignal(0.1 * x / rms, sample_rate)


def _smooth(x: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return x.copy()
    kernel = np.hanning(width + 2)[1:-1]
    kernel /= kernel.sum()
    return fftconvolve(x, kernel, mode="same")
