"""Experiment runner: attack evaluations, curve dumps, MITM demo.

Every run is fully determined by its ExperimentConfig: all randomness is
derived from root_seed through tagged substreams, reports carry no
timestamps, and artifact names are fixed, so rerunning a config yields
byte-identical files.
"""
import json
import math
import os
from contextlib import contextmanager
from dataclasses import dataclass, fields, replace

import numpy as np

from . import attack, blochsim, pufproto, rng, sqlayer
from .blochsim import TWO_PI, GateChain, ImperfectionConfig
from .errors import ConfigError, CrqpufError, StageError

# application-order presets; the 2D training structure is "training"
CHAIN_PRESETS = {
    "training": ("X", "Y"),
    "grouped": ("X", "X", "Y", "Y"),
    "alternating": ("X", "Y", "X", "Y", "X", "Y", "X", "Y"),
}

FINGERPRINT_FILE = "fingerprint.json"
CRPDB_FILE = "crpdb.json"
MODEL_1D_FILE = "model_1d.json"
MODEL_2D_FILE = "model_2d.json"
TRANSCRIPT_FILE = "transcript.jsonl"


def resolve_chain(selector):
    """Map a config chain selector to a GateChain, or None if unset."""
    if selector is None:
        return None
    if isinstance(selector, str):
        if selector not in CHAIN_PRESETS:
            raise ConfigError(
                f"unknown chain preset {selector!r}; expected one of {sorted(CHAIN_PRESETS)}"
            )
        return GateChain(CHAIN_PRESETS[selector], final_hadamard=True)
    try:
        return GateChain(tuple(selector), final_hadamard=True)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid chain selector: {e}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs for one experiment; field names match the JSON config file."""

    root_seed: int = 0
    n: int = 27
    L: int = 30
    grid: int = 30
    shots: int = 2000
    holdout: int = 15
    reps: int = 5
    degree: int = 10
    k: float = 1.0
    two_sided: bool = False
    imperfections: ImperfectionConfig = blochsim.DEFAULT_IMPERFECTIONS
    chain: object = None

    def __post_init__(self):
        limits = {"root_seed": 0, "n": 1, "L": 2, "grid": 2, "shots": 1,
                  "holdout": 1, "reps": 2, "degree": 1}
        for name, lo in limits.items():
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < lo:
                raise ConfigError(f"{name} must be an integer >= {lo}")
        if not (isinstance(self.k, (int, float)) and not isinstance(self.k, bool)
                and math.isfinite(self.k) and self.k >= 0.0):
            raise ConfigError("k must be a finite number >= 0")
        object.__setattr__(self, "k", float(self.k))
        if not isinstance(self.two_sided, bool):
            raise ConfigError("two_sided must be a boolean")
        if not isinstance(self.imperfections, ImperfectionConfig):
            raise ConfigError("imperfections must be an ImperfectionConfig")
        if self.chain is not None and not isinstance(self.chain, str):
            object.__setattr__(self, "chain", tuple(self.chain))
        resolve_chain(self.chain)


_IMP_FIELDS = tuple(f.name for f in fields(ImperfectionConfig))
_INT_KEYS = ("root_seed", "n", "L", "grid", "shots", "holdout", "reps", "degree")
_ALL_KEYS = _INT_KEYS + ("k", "two_sided", "imperfections", "chain")


def config_to_obj(cfg):
    obj = {name: getattr(cfg, name) for name in _INT_KEYS}
    obj["k"] = cfg.k
    obj["two_sided"] = cfg.two_sided
    obj["imperfections"] = {f: getattr(cfg.imperfections, f) for f in _IMP_FIELDS}
    obj["chain"] = list(cfg.chain) if isinstance(cfg.chain, tuple) else cfg.chain
    return obj


def config_from_obj(obj):
    """Build a config from a (possibly partial) JSON-style dict."""
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(obj) - set(_ALL_KEYS))
    if unknown:
        raise ConfigError(f"unknown config fields: {unknown}")
    kwargs = {}
    for key in _INT_KEYS:
        if key in obj:
            v = obj[key]
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{key} must be an integer")
            kwargs[key] = v
    if "k" in obj:
        v = obj["k"]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError("k must be a number")
        kwargs["k"] = float(v)
    if "two_sided" in obj:
        if not isinstance(obj["two_sided"], bool):
            raise ConfigError("two_sided must be a boolean")
        kwargs["two_sided"] = obj["two_sided"]
    if "imperfections" in obj:
        sub = obj["imperfections"]
        if not isinstance(sub, dict):
            raise ConfigError("imperfections must be an object")
        bad = sorted(set(sub) - set(_IMP_FIELDS))
        if bad:
            raise ConfigError(f"unknown imperfection fields: {bad}")
        merged = {f: getattr(blochsim.DEFAULT_IMPERFECTIONS, f) for f in _IMP_FIELDS}
        for f, v in sub.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"imperfections.{f} must be a number")
            merged[f] = float(v)
        kwargs["imperfections"] = ImperfectionConfig(**merged)
    if "chain" in obj and obj["chain"] is not None:
        ch = obj["chain"]
        if isinstance(ch, str):
            kwargs["chain"] = ch
        elif isinstance(ch, list) and all(isinstance(a, str) for a in ch):
            kwargs["chain"] = tuple(ch)
        else:
            raise ConfigError("chain must be null, a preset name, or a list of axes")
    return ExperimentConfig(**kwargs)


def config_from_json(text):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e.msg}") from None
    return config_from_obj(obj)


def config_to_json(cfg):
    return json.dumps(config_to_obj(cfg), indent=2) + "\n"


@dataclass(frozen=True)
class ExperimentReport:
    """In-memory mirror of the emitted report JSON."""

    experiment: str
    config: dict
    chain: tuple
    fit: dict
    challenges: tuple
    rates: dict
    artifacts: tuple

    def to_obj(self):
        return {
            "experiment": self.experiment,
            "config": self.config,
            "chain": list(self.chain),
            "fit": self.fit,
            "challenges": list(self.challenges),
            "rates": self.rates,
            "artifacts": list(self.artifacts),
        }


def serialize_report(report):
    return json.dumps(report.to_obj(), indent=2) + "\n"


@contextmanager
def _stage(name):
    try:
        yield
    except StageError:
        raise
    except (CrqpufError, ValueError, OSError) as e:
        raise StageError(name, str(e)) from e


def _write(out_dir, name, text):
    with open(os.path.join(out_dir, name), "w", encoding="utf-8") as f:
        f.write(text)


def _read(out_dir, name, stage):
    path = os.path.join(out_dir, name)
    if not os.path.exists(path):
        raise StageError(stage, f"missing required artifact: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def _make_challenges(cfg, structure):
    return [
        pufproto.random_challenge(
            rng.substream(cfg.root_seed, rng.CHALLENGE, i), cfg.n, structure
        )
        for i in range(cfg.holdout)
    ]


def _candidate_row(db, idx, sig, cfg):
    d = pufproto.authenticate(db, idx, sig, k=cfg.k, two_sided=cfg.two_sided)
    return d, {"avg_hd": d.avg_hd, "accepted": d.accepted}


def _rate(count, total):
    return count / total


def _report_csv(rows, kinds):
    cols = ["index", "mu", "sigma"]
    for kind in kinds:
        cols += [f"{kind}_avg_hd", f"{kind}_accepted"]
    out = [",".join(cols)]
    for row in rows:
        cells = [str(row["index"]), repr(row["mu"]), repr(row["sigma"])]
        for kind in kinds:
            cells.append(repr(row[kind]["avg_hd"]))
            cells.append(str(int(row[kind]["accepted"])))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def run_qgen(cfg, out_dir):
    """Draw a fingerprint and persist it for later stages."""
    os.makedirs(out_dir, exist_ok=True)
    with _stage("qgen"):
        fp = blochsim.qgen(cfg.root_seed, cfg.n, cfg.imperfections)
    with _stage("artifacts"):
        _write(out_dir, FINGERPRINT_FILE, blochsim.serialize_fingerprint(fp))
    return fp


def run_enroll(cfg, out_dir):
    """Enroll the persisted device on fresh challenges; persist the database."""
    with _stage("startup"):
        fp = blochsim.parse_fingerprint(_read(out_dir, FINGERPRINT_FILE, "startup"))
    structure = resolve_chain(cfg.chain) or GateChain(("Y",), final_hadamard=True)
    with _stage("challenges"):
        challenges = [
            pufproto.random_challenge(
                rng.substream(cfg.root_seed, rng.CHALLENGE, i), fp.n, structure
            )
            for i in range(cfg.holdout)
        ]
    with _stage("enroll"):
        db = pufproto.enroll(fp, challenges, cfg.reps, cfg.shots, cfg.root_seed)
    with _stage("artifacts"):
        _write(out_dir, CRPDB_FILE, pufproto.serialize_crpdb(db))
    return db


def _run_learn(cfg, out_dir, mode):
    with _stage("startup"):
        fp = blochsim.parse_fingerprint(_read(out_dir, FINGERPRINT_FILE, "startup"))
    with _stage("train"):
        if mode == "1d":
            ts = attack.collect_training_1d(fp, cfg.L, cfg.shots, cfg.root_seed)
            model, fit = attack.train_model_1d(ts, cfg.degree)
        else:
            ts = attack.collect_training_2d(fp, cfg.grid, cfg.shots, cfg.root_seed)
            model, fit = attack.train_model_2d(ts, cfg.degree)
    name = MODEL_1D_FILE if mode == "1d" else MODEL_2D_FILE
    with _stage("artifacts"):
        _write(out_dir, name, attack.serialize_model(model))
    return model, fit


def run_learn_1d(cfg, out_dir):
    """Train the per-qubit 1D models against the persisted device."""
    return _run_learn(cfg, out_dir, "1d")


def run_learn_2d(cfg, out_dir):
    """Train the per-qubit 2D models against the persisted device."""
    return _run_learn(cfg, out_dir, "2d")


def _attack_pipeline(cfg, out_dir, mode):
    os.makedirs(out_dir, exist_ok=True)
    with _stage("qgen"):
        fp = blochsim.qgen(cfg.root_seed, cfg.n, cfg.imperfections)
    if mode == "1d":
        structure = GateChain(("Y",), final_hadamard=True)
    else:
        structure = resolve_chain(cfg.chain) or resolve_chain("grouped")
    with _stage("challenges"):
        challenges = _make_challenges(cfg, structure)
    with _stage("enroll"):
        db = pufproto.enroll(fp, challenges, cfg.reps, cfg.shots, cfg.root_seed)
    with _stage("train"):
        if mode == "1d":
            ts = attack.collect_training_1d(fp, cfg.L, cfg.shots, cfg.root_seed)
            model, fit = attack.train_model_1d(ts, cfg.degree)
        else:
            ts = attack.collect_training_2d(fp, cfg.grid, cfg.shots, cfg.root_seed)
            model, fit = attack.train_model_2d(ts, cfg.degree)
    with _stage("evaluate"):
        imp_fp = blochsim.qgen(
            rng.substream(cfg.root_seed, rng.IMPOSTOR_SEED, 0), cfg.n, cfg.imperfections
        )
        rows = []
        counts = {"forged": 0, "honest": 0, "impostor": 0}
        for idx, ch in enumerate(challenges):
            if mode == "1d":
                forged = attack.predict_1d(model, ch)
            else:
                forged = attack.predict_chain(model, ch)
            sig_f = pufproto.encode_signature(forged)
            sig_h = pufproto.encode_signature(
                sqlayer.sq_response(
                    fp, ch, cfg.shots, rng.substream(cfg.root_seed, rng.HONEST, idx)
                )
            )
            sig_i = pufproto.encode_signature(
                sqlayer.sq_response(
                    imp_fp, ch, cfg.shots, rng.substream(cfg.root_seed, rng.IMPOSTOR, idx)
                )
            )
            rec = db.record(idx)
            row = {"index": idx, "mu": rec.mu, "sigma": rec.sigma}
            for kind, sig in (("forged", sig_f), ("honest", sig_h), ("impostor", sig_i)):
                _, cell = _candidate_row(db, idx, sig, cfg)
                row[kind] = cell
                counts[kind] += cell["accepted"]
            rows.append(row)
        rates = {kind: _rate(counts[kind], cfg.holdout) for kind in counts}
    model_file = MODEL_1D_FILE if mode == "1d" else MODEL_2D_FILE
    report_json = f"report_{mode}.json"
    report_csv = f"report_{mode}.csv"
    artifacts = (FINGERPRINT_FILE, CRPDB_FILE, model_file, report_json, report_csv)
    report = ExperimentReport(
        experiment=f"attack-{mode}",
        config=config_to_obj(cfg),
        chain=structure.axes,
        fit=fit,
        challenges=tuple(rows),
        rates=rates,
        artifacts=artifacts,
    )
    with _stage("artifacts"):
        _write(out_dir, FINGERPRINT_FILE, blochsim.serialize_fingerprint(fp))
        _write(out_dir, CRPDB_FILE, pufproto.serialize_crpdb(db))
        _write(out_dir, model_file, attack.serialize_model(model))
        _write(out_dir, report_json, serialize_report(report))
        _write(out_dir, report_csv, _report_csv(rows, ("forged", "honest", "impostor")))
    return report


def run_attack_1d(cfg, out_dir):
    """Full 1D pipeline: enroll, train on the angle grid, forge, authenticate."""
    return _attack_pipeline(cfg, out_dir, "1d")


def run_attack_2d(cfg, out_dir, chain=None):
    """Chain pipeline: bivariate model, holdout challenges on the given chain."""
    if chain is not None:
        cfg = replace(cfg, chain=tuple(chain.axes) if isinstance(chain, GateChain) else chain)
    return _attack_pipeline(cfg, out_dir, "2d")


def run_baselines(cfg, out_dir):
    """Honest and impostor acceptance rates with no attack in the loop."""
    os.makedirs(out_dir, exist_ok=True)
    with _stage("qgen"):
        fp = blochsim.qgen(cfg.root_seed, cfg.n, cfg.imperfections)
    structure = resolve_chain(cfg.chain) or GateChain(("Y",), final_hadamard=True)
    with _stage("challenges"):
        challenges = _make_challenges(cfg, structure)
    with _stage("enroll"):
        db = pufproto.enroll(fp, challenges, cfg.reps, cfg.shots, cfg.root_seed)
    with _stage("evaluate"):
        imp_fp = blochsim.qgen(
            rng.substream(cfg.root_seed, rng.IMPOSTOR_SEED, 0), cfg.n, cfg.imperfections
        )
        rows = []
        counts = {"honest": 0, "impostor": 0}
        for idx, ch in enumerate(challenges):
            sig_h = pufproto.encode_signature(
                sqlayer.sq_response(
                    fp, ch, cfg.shots, rng.substream(cfg.root_seed, rng.HONEST, idx)
                )
            )
            sig_i = pufproto.encode_signature(
                sqlayer.sq_response(
                    imp_fp, ch, cfg.shots, rng.substream(cfg.root_seed, rng.IMPOSTOR, idx)
                )
            )
            rec = db.record(idx)
            row = {"index": idx, "mu": rec.mu, "sigma": rec.sigma}
            for kind, sig in (("honest", sig_h), ("impostor", sig_i)):
                _, cell = _candidate_row(db, idx, sig, cfg)
                row[kind] = cell
                counts[kind] += cell["accepted"]
            rows.append(row)
        rates = {kind: _rate(counts[kind], cfg.holdout) for kind in counts}
    report = ExperimentReport(
        experiment="baselines",
        config=config_to_obj(cfg),
        chain=structure.axes,
        fit=None,
        challenges=tuple(rows),
        rates=rates,
        artifacts=("baselines_report.json",),
    )
    with _stage("artifacts"):
        _write(out_dir, "baselines_report.json", serialize_report(report))
    return report


def run_fig4(cfg, out_dir):
    """Dump measured grid means and the fitted curves for plotting."""
    os.makedirs(out_dir, exist_ok=True)
    with _stage("qgen"):
        fp = blochsim.qgen(cfg.root_seed, cfg.n, cfg.imperfections)
    with _stage("train"):
        ts = attack.collect_training_1d(fp, cfg.L, cfg.shots, cfg.root_seed)
        model, fit = attack.train_model_1d(ts, cfg.degree)
    with _stage("artifacts"):
        dense = np.linspace(0.0, TWO_PI, 500)
        lines = ["qubit,theta,measured_mean,fitted_value"]
        for q in range(cfg.n):
            on_grid = model.models[q].evaluate(ts.thetas)
            for l in range(cfg.L):
                lines.append(
                    f"{q},{float(ts.thetas[l])!r},"
                    f"{float(ts.means[l, q])!r},{float(on_grid[l])!r}"
                )
            on_dense = model.models[q].evaluate(dense)
            for i in range(dense.size):
                lines.append(f"{q},{float(dense[i])!r},,{float(on_dense[i])!r}")
        report = ExperimentReport(
            experiment="fig4",
            config=config_to_obj(cfg),
            chain=("Y",),
            fit=fit,
            challenges=(),
            rates={},
            artifacts=("fig4.csv", "fig4_report.json"),
        )
        _write(out_dir, "fig4.csv", "\n".join(lines) + "\n")
        _write(out_dir, "fig4_report.json", serialize_report(report))
    return report


def run_mitm_demo(cfg, out_dir):
    """Replay the wire protocol with Eve forging every response from files."""
    with _stage("startup"):
        db = pufproto.parse_crpdb(_read(out_dir, CRPDB_FILE, "startup"))
        model = attack.parse_model(_read(out_dir, MODEL_1D_FILE, "startup"))
        if model.kind != "poly1d":
            raise StageError("startup", "the MITM demo requires a poly1d model")
        if model.n != db.n:
            raise StageError("startup", "model width does not match the database")
    with _stage("protocol"):
        lines = []
        rows = []
        accepted = 0
        for rec in db.records:
            lines.append(pufproto.make_challenge_message(rec.index, rec.challenge))
            sig = pufproto.encode_signature(attack.predict_1d(model, rec.challenge))
            lines.append(pufproto.make_response_message(rec.index, sig))
            dec = pufproto.authenticate(db, rec.index, sig, k=cfg.k, two_sided=cfg.two_sided)
            lines.append(pufproto.make_decision_message(rec.index, dec))
            rows.append({
                "index": rec.index,
                "mu": dec.mu,
                "sigma": dec.sigma,
                "forged": {"avg_hd": dec.avg_hd, "accepted": dec.accepted},
            })
            accepted += dec.accepted
        rates = {"forged": _rate(accepted, len(db.records))}
    report = ExperimentReport(
        experiment="mitm",
        config=config_to_obj(cfg),
        chain=db.records[0].challenge.structure.axes,
        fit=None,
        challenges=tuple(rows),
        rates=rates,
        artifacts=(TRANSCRIPT_FILE, "mitm_report.json"),
    )
    with _stage("artifacts"):
        _write(out_dir, TRANSCRIPT_FILE, "\n".join(lines) + "\n")
        _write(out_dir, "mitm_report.json", serialize_report(report))
    return report
