"""Synthetic multi-cell network instances.

Geometry is a cluster of pointy-top hexagonal cells (circumradius
``cell_radius_m``) with the BS at each center. ``B = 7`` uses the standard
7-cell cluster with wrap-around; ``B = 1`` is a single isolated cell; any
other ``B`` falls back to a ``rows x cols`` offset grid wrapped as a torus.

Randomness comes from independent PCG64 substreams of one seed, one per
purpose (see :data:`STREAMS`), so e.g. changing ``M`` never moves devices.
"""

import json
import math
import struct
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .errors import ScenarioIOError, SchemaVersionMismatch, UnsupportedLayout

STREAMS = {"positions": 0, "signatures": 1, "activity": 2, "channels": 3, "noise": 4}
MIN_DISTANCE_M = 5.0

MAGIC = b"COVACTSC"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ScenarioConfig:
    B: int = 7
    N: int = 200
    K: int = 20
    L: int = 20
    M: int = 512
    cell_radius_m: float = 250.0
    pathloss_a_db: float = 128.1
    pathloss_b: float = 37.6
    tx_power_dbm: float = 23.0
    noise_psd_dbm_hz: float = -169.0
    bandwidth_hz: float = 10e6
    seed: int = 0
    ideal: bool = False
    normalize: bool = False

    def __post_init__(self):
        if self.B < 1 or self.L < 1 or self.M < 1 or self.N < 0:
            raise ValueError(f"invalid dimensions B={self.B} N={self.N} L={self.L} M={self.M}")
        if not 0 <= self.K <= self.N:
            raise ValueError(f"need 0 <= K <= N, got K={self.K} N={self.N}")

    @classmethod
    def from_mapping(cls, values):
        """Build from string/number values, e.g. an INI section."""
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            if key not in kinds:
                raise KeyError(f"unknown scenario key {key!r}")
            kw[key] = coerce_value(raw, kinds[key])
        return cls(**kw)


def coerce_value(raw, kind):
    kind = kind if isinstance(kind, str) else kind.__name__
    if not isinstance(raw, str):
        return {"int": int, "float": float, "bool": bool}[kind](raw)
    if kind == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "int":
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    return float(raw)


@dataclass
class Scenario:
    config: ScenarioConfig
    bs_positions: np.ndarray      # (B, 2) meters
    device_positions: np.ndarray  # (B, N, 2) meters
    gains: np.ndarray             # (B, B, N): gains[b, j, n] = g_{bjn}, BS b <- device n of cell j
    signatures: np.ndarray        # (B, L, N) complex, signatures[j] = S_j
    noise_var: float

    def flat_gains(self):
        """(B, B*N) table; column ``j*N + n`` is device n of cell j."""
        B, _, N = self.gains.shape
        return self.gains.reshape(B, B * N).copy()

    def flat_signatures(self):
        """(L, B*N) matrix of all signature columns in flat coordinate order."""
        B, L, N = self.signatures.shape
        return np.ascontiguousarray(self.signatures.transpose(1, 0, 2).reshape(L, B * N))


@dataclass
class GroundTruth:
    active: np.ndarray  # (B*N,) int8, grouped by home cell


@dataclass
class ObservationSet:
    sample_covs: np.ndarray  # (B, L, L) complex
    antennas_used: int       # 0 in ideal mode


def substream(seed, purpose):
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[purpose],))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------- geometry

def _hex_cluster_centers(B, R):
    if B == 1:
        return np.zeros((1, 2)), np.zeros((1, 2))
    if B == 7:
        d = math.sqrt(3.0) * R
        ang = np.deg2rad(60.0 * np.arange(6))
        centers = np.vstack([[0.0, 0.0], np.column_stack([d * np.cos(ang), d * np.sin(ang)])])
        # cluster translations: 2u + v of the cell lattice, rotated in 60 degree steps
        t = d * np.array([2.5, math.sqrt(3.0) / 2.0])
        rot = [np.array([[math.cos(x), -math.sin(x)], [math.sin(x), math.cos(x)]]) for x in ang]
        shifts = np.vstack([[0.0, 0.0]] + [r @ t for r in rot])
        return centers, shifts
    return _torus_grid(B, R)


def _torus_grid(B, R):
    rows = max(r for r in range(1, int(math.isqrt(B)) + 1) if B % r == 0)
    cols = B // rows
    if rows * cols != B:
        raise UnsupportedLayout(f"cannot lay out {B} cells on a torus grid")
    dx, dy = math.sqrt(3.0) * R, 1.5 * R
    centers = np.array([[c * dx + (r % 2) * dx / 2.0, r * dy] for r in range(rows) for c in range(cols)])
    shifts = np.array([[p * cols * dx, q * rows * dy] for p in (0, -1, 1) for q in (0, -1, 1)])
    return centers, shifts


def _in_hexagon(xy, R):
    x, y = np.abs(xy[:, 0]), np.abs(xy[:, 1])
    return (x <= math.sqrt(3.0) / 2.0 * R) & (y <= R - x / math.sqrt(3.0))


def _sample_hexagon(rng, n, R):
    out = np.empty((0, 2))
    half_w = math.sqrt(3.0) / 2.0 * R
    while out.shape[0] < n:
        cand = rng.uniform([-half_w, -R], [half_w, R], size=(2 * (n - out.shape[0]) + 8, 2))
        out = np.vstack([out, cand[_in_hexagon(cand, R)]])
    return out[:n]


def build_geometry(config, rng=None):
    """Return ``(bs_positions (B, 2), device_positions (B, N, 2), wrap_shifts)``."""
    if config.B < 1:
        raise UnsupportedLayout(f"B={config.B}")
    rng = substream(config.seed, "positions") if rng is None else rng
    R = config.cell_radius_m
    centers, shifts = _hex_cluster_centers(config.B, R)
    devices = np.stack([centers[j] + _sample_hexagon(rng, config.N, R) for j in range(config.B)])
    return centers, devices, shifts


def pathloss_db(d_m, config):
    d_km = np.maximum(np.asarray(d_m, dtype=float), MIN_DISTANCE_M) / 1000.0
    return config.pathloss_a_db + config.pathloss_b * np.log10(d_km)


def wrapped_distances(bs_positions, device_positions, shifts):
    """(B, B, N) distances BS b -> device n of cell j, minimized over wrap images."""
    # images: (S, B, N, 2)
    images = device_positions[None] + shifts[:, None, None, :]
    diff = images[:, None] - bs_positions[None, :, None, None, :]
    return np.sqrt((diff**2).sum(-1)).min(axis=0)


def compute_gains(bs_positions, device_positions, config, shifts=None):
    if shifts is None:
        shifts = np.zeros((1, 2))
    dist = wrapped_distances(bs_positions, device_positions, shifts)
    return 10.0 ** (-pathloss_db(dist, config) / 10.0)


def noise_variance(config):
    """Noise power over the band divided by the transmit power (linear)."""
    db = config.noise_psd_dbm_hz + 10.0 * math.log10(config.bandwidth_hz) - config.tx_power_dbm
    return 10.0 ** (db / 10.0)


def complex_gaussian(rng, shape, var=1.0):
    scale = math.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def build_scenario(config):
    bs, devices, shifts = build_geometry(config)
    gains = compute_gains(bs, devices, config, shifts)
    noise = noise_variance(config)
    if config.normalize:
        gains = gains / noise
        noise = 1.0
    sig_rng = substream(config.seed, "signatures")
    signatures = np.stack([complex_gaussian(sig_rng, (config.L, config.N)) for _ in range(config.B)])
    return Scenario(config, bs, devices, gains, signatures, noise)


def draw_truth(config, rng=None):
    rng = substream(config.seed, "activity") if rng is None else rng
    active = np.zeros((config.B, config.N), dtype=np.int8)
    for j in range(config.B):
        active[j, rng.choice(config.N, size=config.K, replace=False)] = 1
    return GroundTruth(active.reshape(-1))


def model_covariances(scn, a):
    """Sigma_b(a) = sum_j S_j A_j G_bj S_j^H + noise_var I for every b, shape (B, L, L)."""
    S = scn.flat_signatures()
    G = scn.flat_gains()
    L = S.shape[0]
    a = np.asarray(a, dtype=float)
    out = np.empty((G.shape[0], L, L), dtype=np.complex128)
    for b in range(G.shape[0]):
        out[b] = (S * (a * G[b])) @ S.conj().T + scn.noise_var * np.eye(L)
    return out


def synthesize_observations(scn, truth, rng=None, ideal=None):
    """Per-BS sample covariances ``Y_b Y_b^H / M``.

    ``ideal=True`` returns the exact model covariance of ``truth`` instead
    (the infinite-antenna limit). Channels are drawn only for active devices;
    inactive rows of ``H`` never reach ``Y``.
    """
    cfg = scn.config
    ideal = cfg.ideal if ideal is None else ideal
    if ideal:
        return ObservationSet(model_covariances(scn, truth.active), 0)
    if rng is None:
        ch_rng, nz_rng = substream(cfg.seed, "channels"), substream(cfg.seed, "noise")
    else:
        ch_rng = nz_rng = rng
    B, L, M, N = cfg.B, cfg.L, cfg.M, cfg.N
    act = truth.active.reshape(B, N).astype(bool)
    covs = np.empty((B, L, L), dtype=np.complex128)
    for b in range(B):
        Y = complex_gaussian(nz_rng, (L, M), scn.noise_var)
        for j in range(B):
            idx = np.flatnonzero(act[j])
            H = complex_gaussian(ch_rng, (idx.size, M))
            Y += (scn.signatures[j][:, idx] * np.sqrt(scn.gains[b, j, idx])) @ H
        C = Y @ Y.conj().T / M
        covs[b] = 0.5 * (C + C.conj().T)
    return ObservationSet(covs, M)


def generate(config):
    """Scenario, truth and observations as a pure function of ``config``."""
    scn = build_scenario(config)
    truth = draw_truth(config)
    return scn, truth, synthesize_observations(scn, truth)


def rescaled(scn, obs, c):
    """Copy with gains, noise variance and sample covariances multiplied by ``c``."""
    return replace(scn, gains=scn.gains * c, noise_var=scn.noise_var * c), \
        ObservationSet(obs.sample_covs * c, obs.antennas_used)


# ---------------------------------------------------------------- file container
#
# layout (little-endian):
#   8s magic | u32 version | u32 n | n bytes UTF-8 JSON config
#   then arrays in fixed order, each: u8 kind (0 f8, 1 c16, 2 i8) | u32 ndim | ndim*u64 shape | data
#   complex data is interleaved (re, im) f8 pairs

_ARRAYS = ("bs_positions", "device_positions", "gains", "signatures", "noise_var",
           "active", "sample_covs")
_KINDS = {0: "<f8", 1: "<c16", 2: "<i1"}


def _write_array(fh, arr):
    arr = np.asarray(arr)
    kind = 1 if np.iscomplexobj(arr) else (2 if arr.dtype == np.int8 else 0)
    fh.write(struct.pack("<BI", kind, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype=_KINDS[kind]).tobytes())


def _read_exact(fh, n, path):
    buf = fh.read(n)
    if len(buf) != n:
        raise ScenarioIOError(f"{path}: truncated scenario file")
    return buf


def _read_array(fh, path):
    kind, ndim = struct.unpack("<BI", _read_exact(fh, 5, path))
    if kind not in _KINDS or ndim > 8:
        raise ScenarioIOError(f"{path}: corrupt array header")
    shape = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim, path))
    dt = np.dtype(_KINDS[kind])
    count = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(_read_exact(fh, count * dt.itemsize, path), dtype=dt)
    return data.reshape(shape).astype(dt.newbyteorder("="))


def save_scenario(path, scn, truth, obs):
    cfg = json.dumps(asdict(scn.config), sort_keys=True).encode()
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", FORMAT_VERSION, len(cfg)))
            fh.write(cfg)
            for arr in (scn.bs_positions, scn.device_positions, scn.gains, scn.signatures,
                        np.array([scn.noise_var]), truth.active.astype(np.int8), obs.sample_covs):
                _write_array(fh, arr)
            fh.write(struct.pack("<Q", obs.antennas_used))
    except OSError as exc:
        raise ScenarioIOError(f"cannot write scenario to {path}: {exc}") from exc


def load_scenario(path):
    """Inverse of :func:`save_scenario`; returns ``(Scenario, GroundTruth, ObservationSet)``."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise ScenarioIOError(f"cannot read scenario {path}: {exc}") from exc
    with fh:
        head = fh.read(len(MAGIC))
        if head != MAGIC:
            raise SchemaVersionMismatch(f"{path}: not a scenario file (bad magic {head!r})")
        version, n = struct.unpack("<II", _read_exact(fh, 8, path))
        if version != FORMAT_VERSION:
            raise SchemaVersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
        try:
            config = ScenarioConfig(**json.loads(_read_exact(fh, n, path)))
        except (ValueError, TypeError) as exc:
            raise ScenarioIOError(f"{path}: corrupt config block: {exc}") from exc
        arrs = {name: _read_array(fh, path) for name in _ARRAYS}
        (m,) = struct.unpack("<Q", _read_exact(fh, 8, path))
    scn = Scenario(config, arrs["bs_positions"], arrs["device_positions"], arrs["gains"],
                   arrs["signatures"], float(arrs["noise_var"][0]))
    return scn, GroundTruth(arrs["active"]), ObservationSet(arrs["sample_covs"], int(m))
