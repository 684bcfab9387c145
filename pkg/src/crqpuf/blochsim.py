"""Imperfect n-qubit device simulator on the Bloch sphere.

The challenge family is a tensor product of single-qubit rotation chains
followed by a Hadamard, so the device is n independent qubits: each is a
Bloch vector starting at (0,0,1), rotated per gate by gain*angle + offset
about its axis, shrunk by (1 - depol_per_gate) after every gate, and read
out through an asymmetric bit-flip channel plus symmetric white noise.

Conventions: R_Y(t) and R_X(t) are exp(-i t Y/2) and exp(-i t X/2); on the
Bloch sphere R_Y: (x,z) -> (x cos t + z sin t, z cos t - x sin t), R_X:
(y,z) -> (y cos t - z sin t, y sin t + z cos t), H: (x,y,z) -> (z,-y,x).
The Hadamard is preceded by an extra R_Y(h_tilt) modelling its
miscalibration; tilt and Hadamard together cost one depolarizing shrink.
p1 = (1 - z)/2.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _jsonio, rng
from ._kernels import chain_z
from .errors import ConfigError, ParseError

TWO_PI = 2.0 * math.pi

_AXES = ("Y", "X")


@dataclass(frozen=True)
class QubitImperfection:
    """Systematic per-qubit deviations from the ideal gate set."""

    gain_y: float = 1.0
    gain_x: float = 1.0
    offset_y: float = 0.0
    offset_x: float = 0.0
    h_tilt: float = 0.0
    depol_per_gate: float = 0.0
    readout_p10: float = 0.0
    readout_p01: float = 0.0

    def __post_init__(self):
        vals = [self.gain_y, self.gain_x, self.offset_y, self.offset_x,
                self.h_tilt, self.depol_per_gate, self.readout_p10, self.readout_p01]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("imperfection parameters must be finite")
        if abs(self.gain_y - 1.0) >= 0.5 or abs(self.gain_x - 1.0) >= 0.5:
            raise ValueError("gains must satisfy |gain - 1| < 0.5")
        if abs(self.offset_y) >= math.pi / 4 or abs(self.offset_x) >= math.pi / 4:
            raise ValueError("offsets must satisfy |offset| < pi/4")
        if abs(self.h_tilt) >= math.pi / 2:
            raise ValueError("h_tilt must satisfy |h_tilt| < pi/2")
        if not 0.0 <= self.depol_per_gate < 0.5:
            raise ValueError("depol_per_gate must be in [0, 0.5)")
        for p in (self.readout_p10, self.readout_p01):
            if not 0.0 <= p < 1.0:
                raise ValueError("readout probabilities must be in [0, 1)")


IDEAL_QUBIT = QubitImperfection()


@dataclass(frozen=True)
class DeviceFingerprint:
    """The secret device identity: per-qubit imperfections plus white noise."""

    device_id: str
    n: int
    qubits: tuple
    white_noise_eps: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        qubits = tuple(self.qubits)
        if len(qubits) != self.n:
            raise ValueError("qubit count does not match n")
        if not all(isinstance(q, QubitImperfection) for q in qubits):
            raise ValueError("qubits must be QubitImperfection values")
        if not 0.0 <= self.white_noise_eps < 0.5:
            raise ValueError("white_noise_eps must be in [0, 0.5)")
        object.__setattr__(self, "qubits", qubits)
        # per-parameter vectors for the kernels, precomputed once
        arr = {
            "gain_y": np.array([q.gain_y for q in qubits]),
            "gain_x": np.array([q.gain_x for q in qubits]),
            "offset_y": np.array([q.offset_y for q in qubits]),
            "offset_x": np.array([q.offset_x for q in qubits]),
            "shrink": 1.0 - np.array([q.depol_per_gate for q in qubits]),
            "p10": np.array([q.readout_p10 for q in qubits]),
            "p01": np.array([q.readout_p01 for q in qubits]),
        }
        tilt = np.array([q.h_tilt for q in qubits])
        arr["cos_tilt"] = np.cos(tilt)
        arr["sin_tilt"] = np.sin(tilt)
        object.__setattr__(self, "_arr", arr)


@dataclass(frozen=True)
class GateChain:
    """Axis sequence of a rotation chain, in application order (index 0 first)."""

    axes: tuple
    final_hadamard: bool = True

    def __post_init__(self):
        axes = tuple(self.axes)
        if len(axes) < 1:
            raise ValueError("a gate chain needs at least one rotation")
        if any(a not in _AXES for a in axes):
            raise ValueError(f"axes must be drawn from {_AXES}")
        object.__setattr__(self, "axes", axes)

    @property
    def t(self):
        return len(self.axes)


@dataclass(frozen=True, eq=False)
class Challenge:
    """A gate chain shared by all qubits plus a t x n matrix of angles."""

    structure: GateChain
    angles: np.ndarray

    def __post_init__(self):
        ang = np.array(self.angles, dtype=np.float64, order="C")
        if ang.ndim != 2:
            raise ValueError("angles must be a t x n matrix")
        if ang.shape[0] != self.structure.t:
            raise ValueError("angle rows must match the chain length")
        if ang.shape[1] < 1:
            raise ValueError("challenge needs at least one qubit")
        if not np.all(np.isfinite(ang)):
            raise ValueError("angles must be finite")
        if np.any(ang < 0.0) or np.any(ang >= TWO_PI):
            raise ValueError("angles must lie in [0, 2*pi)")
        ang.setflags(write=False)
        object.__setattr__(self, "angles", ang)

    @property
    def t(self):
        return self.angles.shape[0]

    @property
    def n(self):
        return self.angles.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Challenge):
            return NotImplemented
        return self.structure == other.structure and np.array_equal(self.angles, other.angles)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Finite-shot readout bits, one row per shot."""

    shots: int
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.dtype != np.bool_:
            if not np.all((bits == 0) | (bits == 1)):
                raise ValueError("bits must be binary")
            bits = bits.astype(bool)
        if bits.ndim != 2 or bits.shape[0] != self.shots:
            raise ValueError("bits must be a shots x n matrix")
        bits = np.ascontiguousarray(bits)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n(self):
        return self.bits.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SampleBatch):
            return NotImplemented
        return self.shots == other.shots and np.array_equal(self.bits, other.bits)


@dataclass(frozen=True)
class ImperfectionConfig:
    """Sampling distributions for qgen.

    Gains are normal(1, gain_sd), offsets normal(0, offset_sd), tilt
    normal(0, tilt_sd), depol uniform(depol_lo, depol_hi), readout flip
    rates uniform(readout_lo, readout_hi); eps is the white-noise rate.
    Width limits keep 6-sigma draws inside the QubitImperfection bounds.
    """

    gain_sd: float = 0.002
    offset_sd: float = 0.01
    tilt_sd: float = 0.05
    depol_lo: float = 0.002
    depol_hi: float = 0.02
    readout_lo: float = 0.01
    readout_hi: float = 0.08
    eps: float = 0.02

    def __post_init__(self):
        vals = [self.gain_sd, self.offset_sd, self.tilt_sd, self.depol_lo,
                self.depol_hi, self.readout_lo, self.readout_hi, self.eps]
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
            raise ConfigError("imperfection parameters must be finite numbers")
        if self.gain_sd < 0 or self.gain_sd > 0.5 / 6:
            raise ConfigError("gain_sd must be in [0, 0.5/6]")
        if self.offset_sd < 0 or self.offset_sd > math.pi / 4 / 6:
            raise ConfigError("offset_sd must be in [0, pi/24]")
        if self.tilt_sd < 0 or self.tilt_sd > math.pi / 2 / 6:
            raise ConfigError("tilt_sd must be in [0, pi/12]")
        if not 0.0 <= self.depol_lo <= self.depol_hi < 0.5:
            raise ConfigError("need 0 <= depol_lo <= depol_hi < 0.5")
        if not 0.0 <= self.readout_lo <= self.readout_hi < 1.0:
            raise ConfigError("need 0 <= readout_lo <= readout_hi < 1")
        if not 0.0 <= self.eps < 0.5:
            raise ConfigError("eps must be in [0, 0.5)")

    @classmethod
    def ideal(cls):
        """Zero-width distributions centered at the ideal gate set."""
        return cls(gain_sd=0.0, offset_sd=0.0, tilt_sd=0.0, depol_lo=0.0,
                   depol_hi=0.0, readout_lo=0.0, readout_hi=0.0, eps=0.0)


DEFAULT_IMPERFECTIONS = ImperfectionConfig()


def ideal_fingerprint(n, device_id="ideal"):
    """A device with identity imperfections and no white noise."""
    return DeviceFingerprint(device_id, n, (IDEAL_QUBIT,) * n, 0.0)


def qgen(seed, n, cfg=None):
    """Draw a device fingerprint; deterministic in (seed, n, cfg)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    if cfg is None:
        cfg = DEFAULT_IMPERFECTIONS
    gen = np.random.default_rng(np.random.SeedSequence([seed, rng.QGEN]))
    gain_y = gen.normal(1.0, cfg.gain_sd, n)
    gain_x = gen.normal(1.0, cfg.gain_sd, n)
    offset_y = gen.normal(0.0, cfg.offset_sd, n)
    offset_x = gen.normal(0.0, cfg.offset_sd, n)
    tilt = gen.normal(0.0, cfg.tilt_sd, n)
    depol = gen.uniform(cfg.depol_lo, cfg.depol_hi, n)
    p10 = gen.uniform(cfg.readout_lo, cfg.readout_hi, n)
    p01 = gen.uniform(cfg.readout_lo, cfg.readout_hi, n)
    qubits = tuple(
        QubitImperfection(gain_y[j], gain_x[j], offset_y[j], offset_x[j],
                          tilt[j], depol[j], p10[j], p01[j])
        for j in range(n)
    )
    return DeviceFingerprint(f"device-{seed}", n, qubits, cfg.eps)


def _effective_trig(fp, challenge):
    """cos/sin of per-gate effective angles gain*theta + offset, plus axis flags."""
    arr = fp._arr
    t, n = challenge.angles.shape
    eff = np.empty((t, n))
    is_y = np.empty(t, dtype=np.uint8)
    for i, axis in enumerate(challenge.structure.axes):
        if axis == "Y":
            eff[i] = arr["gain_y"] * challenge.angles[i] + arr["offset_y"]
            is_y[i] = 1
        else:
            eff[i] = arr["gain_x"] * challenge.angles[i] + arr["offset_x"]
            is_y[i] = 0
    return np.cos(eff), np.sin(eff), is_y


def born_p1(fp, challenge):
    """Per-qubit pre-readout probability of outcome 1."""
    if challenge.n != fp.n:
        raise ValueError("challenge qubit count does not match the fingerprint")
    arr = fp._arr
    cos_eff, sin_eff, is_y = _effective_trig(fp, challenge)
    z = chain_z(cos_eff[None], sin_eff[None], is_y, arr["shrink"],
                arr["cos_tilt"], arr["sin_tilt"],
                challenge.structure.final_hadamard)[0]
    return 0.5 * (1.0 - z)


def ideal_p1(challenge):
    """Noiseless per-qubit p1 by exact 2x2 unitary algebra on |0>."""
    t, n = challenge.angles.shape
    a = np.ones(n, dtype=complex)
    b = np.zeros(n, dtype=complex)
    for i, axis in enumerate(challenge.structure.axes):
        half = 0.5 * challenge.angles[i]
        c, s = np.cos(half), np.sin(half)
        if axis == "Y":
            a, b = c * a - s * b, s * a + c * b
        else:
            a, b = c * a - 1j * s * b, -1j * s * a + c * b
    if challenge.structure.final_hadamard:
        r = 1.0 / math.sqrt(2.0)
        a, b = r * (a + b), r * (a - b)
    return np.abs(b) ** 2


def observed_mean(fp, challenge):
    """Exact expectation of a sampled bit: readout asymmetry then white noise."""
    p1 = born_p1(fp, challenge)
    arr = fp._arr
    q = p1 * (1.0 - arr["p01"]) + (1.0 - p1) * arr["p10"]
    eps = fp.white_noise_eps
    return eps + (1.0 - 2.0 * eps) * q


def sample(fp, challenge, shots, stream_seed):
    """Finite-shot readout; deterministic in (fp, challenge, shots, stream_seed)."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    m = observed_mean(fp, challenge)
    gen = np.random.default_rng(stream_seed)
    u = gen.random((shots, fp.n))
    return SampleBatch(shots, u < m)


def _final_bloch(fp, challenge):
    """Diagnostic: the full final Bloch vector (x, y, z) per qubit.

    Mirrors the kernel arithmetic but keeps all three components.
    """
    arr = fp._arr
    cos_eff, sin_eff, is_y = _effective_trig(fp, challenge)
    n = challenge.n
    x, y, z = np.zeros(n), np.zeros(n), np.ones(n)
    shrink = arr["shrink"]
    for i in range(challenge.t):
        c, s = cos_eff[i], sin_eff[i]
        if is_y[i]:
            x, z = x * c + z * s, z * c - x * s
        else:
            y, z = y * c - z * s, y * s + z * c
        x, y, z = x * shrink, y * shrink, z * shrink
    if challenge.structure.final_hadamard:
        c, s = arr["cos_tilt"], arr["sin_tilt"]
        x, z = x * c + z * s, z * c - x * s
        x, y, z = z, -y, x
        x, y, z = x * shrink, y * shrink, z * shrink
    return x, y, z


_QUBIT_FIELDS = ("gain_y", "gain_x", "offset_y", "offset_x",
                 "h_tilt", "depol", "p10", "p01")


def serialize_fingerprint(fp):
    doc = {
        "device_id": fp.device_id,
        "n": fp.n,
        "eps": fp.white_noise_eps,
        "qubits": [
            {"gain_y": q.gain_y, "gain_x": q.gain_x,
             "offset_y": q.offset_y, "offset_x": q.offset_x,
             "h_tilt": q.h_tilt, "depol": q.depol_per_gate,
             "p10": q.readout_p10, "p01": q.readout_p01}
            for q in fp.qubits
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def parse_fingerprint(text):
    doc = _jsonio.loads(text)
    device_id = _jsonio.get(doc, "device_id", str, "$")
    n = _jsonio.get(doc, "n", int, "$")
    eps = _jsonio.get(doc, "eps", float, "$")
    raw = _jsonio.get(doc, "qubits", list, "$")
    qubits = []
    for j, entry in enumerate(raw):
        path = f"$.qubits[{j}]"
        vals = {f: _jsonio.get(entry, f, float, path) for f in _QUBIT_FIELDS}
        try:
            qubits.append(QubitImperfection(
                vals["gain_y"], vals["gain_x"], vals["offset_y"], vals["offset_x"],
                vals["h_tilt"], vals["depol"], vals["p10"], vals["p01"]))
        except ValueError as e:
            raise ParseError(str(e), position=path) from None
    try:
        return DeviceFingerprint(device_id, n, tuple(qubits), eps)
    except ValueError as e:
        raise ParseError(str(e), position="$") from None
