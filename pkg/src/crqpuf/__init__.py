"""Desk-scale laboratory for classical-readout quantum PUFs.

Simulates an imperfect n-qubit device behind a statistical-query
interface, runs the challenge-response authentication protocol on it,
and breaks the protocol with per-qubit polynomial regression.
"""
from ._kernels import get_backend, set_backend
from .attack import (
    AttackModel,
    PolynomialModel,
    TrainingSet1D,
    TrainingSet2D,
    chain_reduce,
    collect_training_1d,
    collect_training_2d,
    degree_for_error,
    fit_poly,
    fit_poly2d,
    grid_angles,
    parse_model,
    predict_1d,
    predict_chain,
    serialize_model,
    train_model_1d,
    train_model_2d,
)
from .blochsim import (
    DEFAULT_IMPERFECTIONS,
    TWO_PI,
    Challenge,
    DeviceFingerprint,
    GateChain,
    ImperfectionConfig,
    QubitImperfection,
    SampleBatch,
    born_p1,
    ideal_fingerprint,
    ideal_p1,
    observed_mean,
    parse_fingerprint,
    qgen,
    sample,
    serialize_fingerprint,
)
from .errors import (
    ConfigError,
    CrqpufError,
    FitError,
    NoiseTooLargeError,
    ParseError,
    StageError,
)
from .harness import (
    CHAIN_PRESETS,
    ExperimentConfig,
    ExperimentReport,
    config_from_json,
    config_to_json,
    resolve_chain,
    run_attack_1d,
    run_attack_2d,
    run_baselines,
    run_enroll,
    run_fig4,
    run_learn_1d,
    run_learn_2d,
    run_mitm_demo,
    run_qgen,
    serialize_report,
)
from .pufproto import (
    AuthDecision,
    CRPDatabase,
    CRPRecord,
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
    random_challenge,
    serialize_challenge,
    serialize_crpdb,
    serialize_signature,
)
from .sqlayer import (
    ResponseVector,
    SQConfig,
    debias,
    noise_admissible,
    shots_for_tolerance,
    sq_response,
)

__version__ = "0.1.0"
