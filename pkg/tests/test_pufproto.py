"""Protocol layer: quantization, Hamming metric, enrollment, decisions."""
import numpy as np
import pytest

from crqpuf import (
    CRPDatabase,
    CRPRecord,
    Challenge,
    GateChain,
    ParseError,
    ResponseVector,
    Signature,
    authenticate,
    encode_signature,
    enroll,
    hamming,
    make_challenge_message,
    make_decision_message,
    make_response_message,
    parse_challenge,
    parse_crpdb,
    parse_message,
    parse_signature,
    qgen,
    random_challenge,
    serialize_challenge,
    serialize_crpdb,
    serialize_signature,
)
from crqpuf.blochsim import TWO_PI

RNG = np.random.default_rng(4242)
ST = GateChain(("Y",), True)


def _sig_from_codes(codes):
    """Signature whose per-qubit 5-bit fields hold the given integers."""
    bits = ((np.asarray(codes)[:, None] >> np.arange(4, -1, -1)) & 1).ravel()
    return Signature(bits.astype(np.uint8))


class TestEncoding:
    def test_endpoints(self):
        sig = encode_signature(np.array([0.0, 1.0, 0.5]))
        assert sig.as_string() == "00000" + "11111" + "10000"

    def test_rounding_is_half_away_from_zero(self):
        # v*31 = 0.5 must round up to 1, and 1.5 up to 2
        sig = encode_signature(np.array([0.5 / 31.0, 1.5 / 31.0]))
        assert sig.as_string() == "00001" + "00010"

    def test_all_levels_round_trip(self):
        codes = np.arange(32)
        sig = encode_signature(codes / 31.0)
        assert sig == _sig_from_codes(codes)

    def test_accepts_response_vector(self):
        rv = ResponseVector(np.array([0.0, 1.0]), 5)
        assert encode_signature(rv).as_string() == "0000011111"

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            encode_signature(np.array([1.1]))


class TestSignature:
    def test_string_round_trip(self):
        s = Signature(np.array([0, 1, 1, 0, 1] * 3, dtype=np.uint8))
        assert Signature.from_string(s.as_string()) == s
        assert s.n_qubits == 3

    def test_validation(self):
        with pytest.raises(ValueError):
            Signature(np.array([0, 1, 2, 0, 1], dtype=np.uint8))
        with pytest.raises(ValueError):
            Signature(np.array([0, 1, 1], dtype=np.uint8))
        with pytest.raises(ValueError):
            Signature.from_string("01a01")

    def test_parse_serialize(self):
        s = _sig_from_codes([3, 17, 30])
        assert parse_signature(serialize_signature(s)) == s
        with pytest.raises(ParseError):
            parse_signature("01x10")


class TestHamming:
    def test_metric_properties_on_random_pairs(self):
        width = 40
        a = RNG.integers(0, 2, (10_000, width), dtype=np.uint8)
        b = RNG.integers(0, 2, (10_000, width), dtype=np.uint8)
        c = RNG.integers(0, 2, (10_000, width), dtype=np.uint8)
        dab = (a != b).sum(axis=1)
        dba = (b != a).sum(axis=1)
        dac = (a != c).sum(axis=1)
        dbc = (b != c).sum(axis=1)
        assert np.all(dab == dba)
        assert np.all(dab >= 0) and np.all(dab <= width)
        assert np.all(dac <= dab + dbc)
        # spot check the package function against the vectorized counts
        for i in range(0, 10_000, 997):
            got = hamming(Signature(a[i]), Signature(b[i]))
            assert got == int(dab[i])
        assert hamming(Signature(a[0]), Signature(a[0])) == 0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            hamming(_sig_from_codes([1]), _sig_from_codes([1, 2]))


class TestRandomChallenge:
    def test_deterministic_and_in_range(self):
        c1 = random_challenge(5, 9, ST)
        c2 = random_challenge(5, 9, ST)
        assert c1 == c2
        assert c1.angles.shape == (1, 9)
        assert np.all((c1.angles >= 0) & (c1.angles < TWO_PI))
        assert random_challenge(6, 9, ST) != c1

    def test_multi_gate_structure(self):
        st = GateChain(("X", "X", "Y", "Y"), True)
        ch = random_challenge(1, 4, st)
        assert ch.angles.shape == (4, 4)
        assert ch.structure == st

    def test_validation(self):
        with pytest.raises(TypeError):
            random_challenge(1, 4, ("Y",))
        with pytest.raises(ValueError):
            random_challenge(1, 0, ST)


class TestEnroll:
    def test_deterministic_and_consistent(self):
        fp = qgen(3, 5)
        chs = [random_challenge(100 + i, 5, ST) for i in range(3)]
        db1 = enroll(fp, chs, 4, 250, 9)
        db2 = enroll(fp, chs, 4, 250, 9)
        assert db1 == db2
        assert db1.m == 4 and db1.n == 5 and db1.shots == 250
        assert len(db1.records) == 3
        for rec in db1.records:
            assert len(rec.signatures) == 4
            d = [hamming(rec.signatures[i], rec.signatures[j])
                 for i in range(4) for j in range(i + 1, 4)]
            assert rec.mu == float(np.mean(d))
            assert rec.sigma == float(np.std(d))

    def test_validates_arguments(self):
        fp = qgen(3, 5)
        chs = [random_challenge(0, 5, ST)]
        with pytest.raises(ValueError):
            enroll(fp, chs, 1, 250, 9)
        with pytest.raises(ValueError):
            enroll(fp, chs, 2, 0, 9)

    def test_record_rejects_wrong_stats(self):
        fp = qgen(3, 2)
        ch = random_challenge(0, 2, ST)
        db = enroll(fp, [ch], 3, 100, 1)
        rec = db.records[0]
        with pytest.raises(ValueError):
            CRPRecord(0, ch, rec.signatures, rec.mu + 1.0, rec.sigma)


def _db_with_distances():
    """Handcrafted database: m=3 references with pair distances 2, 4, 6."""
    s0 = _sig_from_codes([0, 0])        # 0000000000
    s1 = _sig_from_codes([3, 0])        # flips bits {3,4} of qubit 0
    s2 = _sig_from_codes([0b11000, 3])  # flips 4 bits disjoint from s1's
    ch = random_challenge(0, 2, ST)
    d = [2.0, 4.0, 6.0]
    rec = CRPRecord(0, ch, (s0, s1, s2), float(np.mean(d)), float(np.std(d)))
    # degenerate record: identical references, sigma = 0
    twin = _sig_from_codes([7, 7])
    rec0 = CRPRecord(1, ch, (twin, twin, twin), 0.0, 0.0)
    return CRPDatabase("dev", 2, 3, 100, (rec, rec0)), (s0, s1, s2, twin)


class TestAuthenticate:
    def test_rule_table(self):
        db, (s0, s1, s2, _) = _db_with_distances()
        mu, sigma = 4.0, float(np.std([2.0, 4.0, 6.0]))
        # candidate = s0: avg_hd = (0 + 2 + 4)/3 = 2.0, inside
        d = authenticate(db, 0, s0, k=1.0)
        assert d.accepted and d.avg_hd == 2.0 and d.mu == mu and d.sigma == sigma
        # far candidate: distances (10, 8, 6), avg 8.0 > mu + sigma
        far = _sig_from_codes([31, 31])
        d_far = authenticate(db, 0, far, k=1.0)
        assert not d_far.accepted and d_far.avg_hd == 8.0

    def test_exact_boundary_accepts(self):
        # m=2 gives sigma=0 exactly, so the window edge is just mu
        s0 = _sig_from_codes([0, 0])
        s1 = _sig_from_codes([3, 0])
        ch = random_challenge(0, 2, ST)
        rec = CRPRecord(0, ch, (s0, s1), 2.0, 0.0)
        db = CRPDatabase("dev", 2, 2, 100, (rec,))
        on_edge = _sig_from_codes([0b00101, 0])   # distances (2, 2), avg exactly mu
        outside = _sig_from_codes([0b01101, 0])   # distances (3, 3)
        assert authenticate(db, 0, on_edge, k=5.0).accepted
        assert authenticate(db, 0, on_edge, k=0.0).accepted
        assert not authenticate(db, 0, outside, k=5.0).accepted

    def test_two_sided_rejects_too_close(self):
        db, (s0, s1, s2, _) = _db_with_distances()
        # candidate s0 has avg_hd 2.0 < mu - k*sigma for small k
        d = authenticate(db, 0, s0, k=0.5, two_sided=True)
        assert not d.accepted
        assert authenticate(db, 0, s0, k=0.5, two_sided=False).accepted
        assert authenticate(db, 0, s0, k=2.0, two_sided=True).accepted

    def test_sigma_zero_degenerate(self):
        db, (_, _, _, twin) = _db_with_distances()
        # identical references: accept only exact avg_hd <= mu = 0
        assert authenticate(db, 1, twin, k=3.0).accepted
        near = _sig_from_codes([7, 6])
        d = authenticate(db, 1, near, k=3.0)
        assert not d.accepted and d.sigma == 0.0 and d.mu == 0.0

    def test_k_zero_window_is_mu(self):
        db, (s0, _, s2, _) = _db_with_distances()
        # one-sided k=0: accept iff avg_hd <= mu = 4.0
        assert authenticate(db, 0, s0, k=0.0).accepted          # avg 2.0
        far = _sig_from_codes([31, 31])
        assert not authenticate(db, 0, far, k=0.0).accepted     # avg 8.0

    def test_unknown_index(self):
        db, _ = _db_with_distances()
        with pytest.raises(IndexError):
            authenticate(db, 99, _sig_from_codes([0, 0]))

    def test_width_mismatch(self):
        db, _ = _db_with_distances()
        with pytest.raises(ValueError):
            authenticate(db, 0, _sig_from_codes([0, 0, 0]))


class TestChallengeJSON:
    def test_round_trip(self):
        ch = random_challenge(8, 3, GateChain(("X", "Y"), True))
        text = serialize_challenge(ch)
        assert parse_challenge(text) == ch
        assert serialize_challenge(parse_challenge(text)) == text

    def test_rejects_two_pi(self):
        ch = random_challenge(8, 1, ST)
        text = serialize_challenge(ch).replace(
            repr(float(ch.angles[0, 0])), repr(TWO_PI)
        )
        with pytest.raises(ParseError):
            parse_challenge(text)

    def test_rejects_bad_axis(self):
        text = serialize_challenge(random_challenge(8, 1, ST)).replace('"Y"', '"Z"')
        with pytest.raises(ParseError):
            parse_challenge(text)

    def test_rejects_ragged_angles(self):
        with pytest.raises(ParseError):
            parse_challenge('{"axes": ["Y"], "final_h": true, "angles": [[0.1, 0.2], [0.3]]}')


class TestCRPDatabaseJSON:
    def test_round_trip_byte_identity(self):
        fp = qgen(21, 4)
        chs = [random_challenge(i, 4, ST) for i in range(3)]
        db = enroll(fp, chs, 3, 150, 5)
        text = serialize_crpdb(db)
        back = parse_crpdb(text)
        assert back == db
        assert serialize_crpdb(back) == text

    def test_rejects_tampered_stats(self):
        fp = qgen(21, 2)
        db = enroll(fp, [random_challenge(0, 2, ST)], 3, 150, 5)
        text = serialize_crpdb(db)
        bad = text.replace(f'"mu": {db.records[0].mu!r}', '"mu": 0.125')
        assert bad != text
        with pytest.raises(ParseError):
            parse_crpdb(bad)

    def test_rejects_malformed(self):
        with pytest.raises(ParseError):
            parse_crpdb("[]")
        with pytest.raises(ParseError):
            parse_crpdb('{"device_id": "d"}')


class TestMessages:
    def test_challenge_message_round_trip(self):
        ch = random_challenge(3, 2, ST)
        line = make_challenge_message(4, ch)
        assert "\n" not in line
        msg = parse_message(line)
        assert msg["type"] == "challenge" and msg["index"] == 4
        assert msg["challenge"] == ch

    def test_response_message_round_trip(self):
        sig = _sig_from_codes([5, 9])
        msg = parse_message(make_response_message(2, sig))
        assert msg["type"] == "response" and msg["signature"] == sig

    def test_decision_message_round_trip(self):
        db, (s0, _, _, _) = _db_with_distances()
        dec = authenticate(db, 0, s0)
        msg = parse_message(make_decision_message(0, dec))
        assert msg["type"] == "decision"
        assert msg["accepted"] == dec.accepted
        assert msg["avg_hd"] == dec.avg_hd
        assert msg["mu"] == dec.mu and msg["sigma"] == dec.sigma

    def test_unknown_type(self):
        with pytest.raises(ParseError):
            parse_message('{"type": "hello", "index": 0}')
        with pytest.raises(ParseError):
            parse_message('{"index": 0}')
