"""Challenge-response authentication protocol on top of the SQ layer.

Signatures quantize per-qubit means to 5 bits. Enrollment stores m
reference signatures per challenge plus the intra-device Hamming
statistics (mu, sigma); authentication accepts a candidate when its
average distance to the references stays within mu + k*sigma.
"""
import json
from dataclasses import dataclass

import numpy as np

from . import _jsonio, rng, sqlayer
from .blochsim import TWO_PI, Challenge, GateChain
from .errors import ParseError

BITS_PER_QUBIT = 5
_LEVELS = (1 << BITS_PER_QUBIT) - 1


@dataclass(frozen=True, eq=False)
class Signature:
    """Packed quantized response: 5 bits per qubit, MSB first."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.array(self.bits, dtype=np.uint8)
        if b.ndim != 1 or b.size == 0 or b.size % BITS_PER_QUBIT != 0:
            raise ValueError("bits length must be a positive multiple of 5")
        if np.any(b > 1):
            raise ValueError("bits must be 0 or 1")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def n_qubits(self):
        return self.bits.size // BITS_PER_QUBIT

    def as_string(self):
        return "".join(map(str, self.bits.tolist()))

    @classmethod
    def from_string(cls, s):
        if not s or any(c not in "01" for c in s):
            raise ValueError("signature string must be non-empty and binary")
        return cls(np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0"))

    def __eq__(self, other):
        if not isinstance(other, Signature):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)


def encode_signature(response):
    """Quantize means to 5-bit codes, rounding halves away from zero."""
    vals = response.values if isinstance(response, sqlayer.ResponseVector) else None
    if vals is None:
        vals = np.asarray(response, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("response must be a non-empty vector")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0.0) or np.any(vals > 1.0):
            raise ValueError("response values must lie in [0, 1]")
    q = np.floor(vals * _LEVELS + 0.5).astype(np.int64)
    np.clip(q, 0, _LEVELS, out=q)
    shifts = np.arange(BITS_PER_QUBIT - 1, -1, -1)
    bits = ((q[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    return Signature(bits)


def hamming(a, b):
    if a.bits.size != b.bits.size:
        raise ValueError("signature lengths differ")
    return int(np.count_nonzero(a.bits != b.bits))


def random_challenge(rng_seed, n, structure):
    """Uniform angles in [0, 2pi) for every gate slot of the structure."""
    if not isinstance(structure, GateChain):
        raise TypeError("structure must be a GateChain")
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = np.random.default_rng(rng_seed)
    angles = gen.uniform(0.0, TWO_PI, size=(structure.t, n))
    # uniform() can round up to the open endpoint; pull those back inside
    np.minimum(angles, np.nextafter(TWO_PI, 0.0), out=angles)
    return Challenge(structure, angles)


def _pair_distances(signatures):
    d = []
    for i in range(len(signatures)):
        for j in range(i + 1, len(signatures)):
            d.append(hamming(signatures[i], signatures[j]))
    return np.asarray(d, dtype=np.float64)


@dataclass(frozen=True)
class CRPRecord:
    """One enrolled challenge with its reference signatures and stats."""

    index: int
    challenge: Challenge
    signatures: tuple
    mu: float
    sigma: float

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("index must be >= 0")
        if len(self.signatures) < 2:
            raise ValueError("need at least 2 reference signatures")
        sizes = {s.bits.size for s in self.signatures}
        if len(sizes) != 1:
            raise ValueError("reference signatures must share one length")
        d = _pair_distances(self.signatures)
        if self.mu != float(np.mean(d)) or self.sigma != float(np.std(d)):
            raise ValueError("mu/sigma do not match the stored signatures")


@dataclass(frozen=True)
class CRPDatabase:
    device_id: str
    n: int
    m: int
    shots: int
    records: tuple

    def __post_init__(self):
        if self.n < 1 or self.m < 2 or self.shots < 1:
            raise ValueError("need n >= 1, m >= 2, shots >= 1")
        if not self.records:
            raise ValueError("database needs at least one record")
        seen = set()
        for rec in self.records:
            if rec.index in seen:
                raise ValueError(f"duplicate challenge index {rec.index}")
            seen.add(rec.index)
            if len(rec.signatures) != self.m:
                raise ValueError(f"record {rec.index}: expected {self.m} signatures")
            if rec.signatures[0].n_qubits != self.n:
                raise ValueError(f"record {rec.index}: signature width is not n={self.n}")
            if rec.challenge.n != self.n:
                raise ValueError(f"record {rec.index}: challenge width is not n={self.n}")
        object.__setattr__(self, "_by_index", {r.index: r for r in self.records})

    def record(self, index):
        try:
            return self._by_index[index]
        except KeyError:
            raise IndexError(f"no enrolled challenge with index {index}") from None


def enroll(fp, challenges, m, shots, seed):
    """Collect m signatures per challenge and their intra-device stats."""
    if m < 2:
        raise ValueError("m must be >= 2")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    records = []
    for idx, ch in enumerate(challenges):
        sigs = []
        for r in range(m):
            stream = rng.substream(seed, rng.ENROLL, idx * m + r)
            sigs.append(encode_signature(sqlayer.sq_response(fp, ch, shots, stream)))
        d = _pair_distances(sigs)
        records.append(
            CRPRecord(idx, ch, tuple(sigs), float(np.mean(d)), float(np.std(d)))
        )
    return CRPDatabase(fp.device_id, fp.n, m, shots, tuple(records))


@dataclass(frozen=True)
class AuthDecision:
    accepted: bool
    avg_hd: float
    mu: float
    sigma: float
    k: float


def authenticate(db, index, candidate, k=1.0, two_sided=False):
    """Threshold test of the candidate's mean distance to the references."""
    rec = db.record(index)
    if candidate.bits.size != db.n * BITS_PER_QUBIT:
        raise ValueError("candidate signature width does not match the database")
    dists = [hamming(candidate, s) for s in rec.signatures]
    avg_hd = float(np.mean(dists))
    hi = rec.mu + k * rec.sigma
    if two_sided:
        accepted = rec.mu - k * rec.sigma <= avg_hd <= hi
    else:
        accepted = avg_hd <= hi
    return AuthDecision(bool(accepted), avg_hd, rec.mu, rec.sigma, float(k))


# --- JSON forms -----------------------------------------------------------


def _challenge_to_obj(ch):
    return {
        "axes": list(ch.structure.axes),
        "final_h": ch.structure.final_hadamard,
        "angles": ch.angles.tolist(),
    }


def _challenge_from_obj(obj, path):
    _jsonio.expect(obj, dict, path)
    axes_raw = _jsonio.get(obj, "axes", list, path)
    axes = []
    for i, a in enumerate(axes_raw):
        if a not in ("Y", "X"):
            raise ParseError("axis must be 'Y' or 'X'", f"{path}.axes[{i}]")
        axes.append(a)
    final_h = _jsonio.get(obj, "final_h", bool, path)
    rows = _jsonio.get(obj, "angles", list, path)
    try:
        angles = np.array(rows, dtype=np.float64)
        if angles.ndim != 2:
            raise ValueError("angles must be a rectangular matrix")
        structure = GateChain(tuple(axes), final_h)
        return Challenge(structure, angles)
    except (ValueError, TypeError) as e:
        raise ParseError(str(e), f"{path}.angles") from None


def serialize_challenge(ch):
    return json.dumps(_challenge_to_obj(ch), indent=2) + "\n"


def parse_challenge(text):
    return _challenge_from_obj(_jsonio.loads(text), "$")


def serialize_signature(sig):
    return sig.as_string()


def parse_signature(text):
    try:
        return Signature.from_string(text.strip())
    except ValueError as e:
        raise ParseError(str(e), "$") from None


def serialize_crpdb(db):
    obj = {
        "device_id": db.device_id,
        "n": db.n,
        "m": db.m,
        "shots": db.shots,
        "records": [
            {
                "index": rec.index,
                "challenge": _challenge_to_obj(rec.challenge),
                "signatures": [s.as_string() for s in rec.signatures],
                "mu": rec.mu,
                "sigma": rec.sigma,
            }
            for rec in db.records
        ],
    }
    return json.dumps(obj, indent=2) + "\n"


def parse_crpdb(text):
    obj = _jsonio.loads(text)
    _jsonio.expect(obj, dict, "$")
    device_id = _jsonio.get(obj, "device_id", str, "$")
    n = _jsonio.get(obj, "n", int, "$")
    m = _jsonio.get(obj, "m", int, "$")
    shots = _jsonio.get(obj, "shots", int, "$")
    raw_records = _jsonio.get(obj, "records", list, "$")
    records = []
    for i, raw in enumerate(raw_records):
        path = f"$.records[{i}]"
        _jsonio.expect(raw, dict, path)
        index = _jsonio.get(raw, "index", int, path)
        challenge = _challenge_from_obj(raw.get("challenge"), f"{path}.challenge")
        sig_strs = _jsonio.get(raw, "signatures", list, path)
        sigs = []
        for j, s in enumerate(sig_strs):
            _jsonio.expect(s, str, f"{path}.signatures[{j}]")
            try:
                sigs.append(Signature.from_string(s))
            except ValueError as e:
                raise ParseError(str(e), f"{path}.signatures[{j}]") from None
        mu = _jsonio.get(raw, "mu", float, path)
        sigma = _jsonio.get(raw, "sigma", float, path)
        try:
            records.append(CRPRecord(index, challenge, tuple(sigs), mu, sigma))
        except ValueError as e:
            raise ParseError(str(e), path) from None
    try:
        return CRPDatabase(device_id, n, m, shots, tuple(records))
    except ValueError as e:
        raise ParseError(str(e), "$") from None


# --- wire messages --------------------------------------------------------


def make_challenge_message(index, challenge):
    obj = {"type": "challenge", "index": index, "challenge": _challenge_to_obj(challenge)}
    return json.dumps(obj, separators=(",", ":"))


def make_response_message(index, signature):
    obj = {"type": "response", "index": index, "signature": signature.as_string()}
    return json.dumps(obj, separators=(",", ":"))


def make_decision_message(index, decision):
    obj = {
        "type": "decision",
        "index": index,
        "accepted": decision.accepted,
        "avg_hd": decision.avg_hd,
        "mu": decision.mu,
        "sigma": decision.sigma,
    }
    return json.dumps(obj, separators=(",", ":"))


def parse_message(line):
    obj = _jsonio.loads(line)
    _jsonio.expect(obj, dict, "$")
    kind = _jsonio.get(obj, "type", str, "$")
    index = _jsonio.get(obj, "index", int, "$")
    if kind == "challenge":
        ch = _challenge_from_obj(obj.get("challenge"), "$.challenge")
        return {"type": kind, "index": index, "challenge": ch}
    if kind == "response":
        s = _jsonio.get(obj, "signature", str, "$")
        try:
            sig = Signature.from_string(s)
        except ValueError as e:
            raise ParseError(str(e), "$.signature") from None
        return {"type": kind, "index": index, "signature": sig}
    if kind == "decision":
        return {
            "type": kind,
            "index": index,
            "accepted": _jsonio.get(obj, "accepted", bool, "$"),
            "avg_hd": _jsonio.get(obj, "avg_hd", float, "$"),
            "mu": _jsonio.get(obj, "mu", float, "$"),
            "sigma": _jsonio.get(obj, "sigma", float, "$"),
        }
    raise ParseError(f"unknown message type '{kind}'", "$.type")
