"""Polynomial-regression modelling attack against the SQ interface.

The adversary queries the device on a grid of rotation angles, fits one
low-degree polynomial per qubit to the noisy means, and afterwards
forges responses to unseen challenges. Product chains reduce to at most
one effective angle per axis, so a bivariate model covers every chain
built from Y and X rotations.
"""
import json
import math
from dataclasses import dataclass

import numpy as np

from . import _jsonio, blochsim, rng, sqlayer
from .blochsim import TWO_PI, Challenge, GateChain
from .errors import FitError, ParseError

_KINDS = ("poly1d", "poly2d")


def grid_angles(L):
    """L evenly spaced angles covering [0, 2pi)."""
    if L < 2:
        raise ValueError("L must be >= 2")
    return TWO_PI * np.arange(L) / L


def _scale(theta, scaling):
    # affine map of [lo, hi] onto [-1, 1]; keeps Vandermonde systems sane
    lo, hi = scaling
    return 2.0 * (np.asarray(theta, dtype=np.float64) - lo) / (hi - lo) - 1.0


def _monomials(degree):
    """Exponent pairs (i, j) with i + j <= degree, graded lexicographic."""
    return [(i, s - i) for s in range(degree + 1) for i in range(s, -1, -1)]


def _design_1d(x, degree):
    return np.vander(x, degree + 1, increasing=True)


def _design_2d(x, y, degree):
    return np.stack([x**i * y**j for (i, j) in _monomials(degree)], axis=1)


def _check_training_arrays(thetas, means, shots):
    if means.ndim != 2 or means.shape[0] != thetas.shape[0]:
        raise ValueError("means must be (points, n) aligned with thetas")
    if not (np.all(np.isfinite(thetas)) and np.all(np.isfinite(means))):
        raise ValueError("training data must be finite")
    if np.any(means < 0.0) or np.any(means > 1.0):
        raise ValueError("means must lie in [0, 1]")
    if shots < 0:
        raise ValueError("shots must be >= 0")


@dataclass(frozen=True, eq=False)
class TrainingSet1D:
    """Grid means for single Y-rotation challenges: means[l, j] at thetas[l]."""

    thetas: np.ndarray
    means: np.ndarray
    shots: int
    seed: int

    def __post_init__(self):
        thetas = np.array(self.thetas, dtype=np.float64)
        means = np.array(self.means, dtype=np.float64)
        if thetas.ndim != 1 or thetas.size < 2:
            raise ValueError("thetas must hold at least 2 angles")
        _check_training_arrays(thetas, means, self.shots)
        thetas.setflags(write=False)
        means.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "means", means)

    @property
    def n(self):
        return self.means.shape[1]


@dataclass(frozen=True, eq=False)
class TrainingSet2D:
    """Grid means for X-then-Y chains; thetas columns are (theta_x, theta_y)."""

    thetas: np.ndarray
    means: np.ndarray
    shots: int
    seed: int
    grid: int

    def __post_init__(self):
        thetas = np.array(self.thetas, dtype=np.float64)
        means = np.array(self.means, dtype=np.float64)
        if thetas.ndim != 2 or thetas.shape[1] != 2:
            raise ValueError("thetas must be a (points, 2) matrix")
        if self.grid < 2 or self.grid * self.grid != thetas.shape[0]:
            raise ValueError("thetas must hold a full grid x grid point set")
        _check_training_arrays(thetas, means, self.shots)
        thetas.setflags(write=False)
        means.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "means", means)

    @property
    def n(self):
        return self.means.shape[1]


def _query_means(fp, challenge, shots, stream_seed):
    # shots=0 is the infinite-shot limit: exact observed means, no sampling
    if shots == 0:
        return blochsim.observed_mean(fp, challenge)
    return sqlayer.sq_response(fp, challenge, shots, stream_seed).values


def collect_training_1d(fp, L, shots, seed):
    """Query the device on the L-point angle grid, one row per angle."""
    thetas = grid_angles(L)
    structure = GateChain(("Y",), final_hadamard=True)
    means = np.empty((L, fp.n))
    for l, theta in enumerate(thetas):
        ch = Challenge(structure, np.full((1, fp.n), theta))
        means[l] = _query_means(fp, ch, shots, rng.substream(seed, rng.TRAIN, l))
    return TrainingSet1D(thetas, means, shots, seed)


def collect_training_2d(fp, G, shots, seed):
    """Query an X-then-Y chain over the full G x G angle grid."""
    g = grid_angles(G)
    structure = GateChain(("X", "Y"), final_hadamard=True)
    pts = np.empty((G * G, 2))
    means = np.empty((G * G, fp.n))
    for l in range(G * G):
        tx, ty = g[l // G], g[l % G]
        pts[l] = (tx, ty)
        ch = Challenge(structure, np.vstack([np.full(fp.n, tx), np.full(fp.n, ty)]))
        means[l] = _query_means(fp, ch, shots, rng.substream(seed, rng.TRAIN, l))
    return TrainingSet2D(pts, means, shots, seed, G)


@dataclass(frozen=True, eq=False)
class PolynomialModel:
    """One qubit's fitted response surface, coefficients over scaled angles."""

    kind: str
    degree: int
    coefficients: np.ndarray
    scaling: tuple = (0.0, TWO_PI)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        lo, hi = self.scaling
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError("scaling must be a finite (lo, hi) with lo < hi")
        coef = np.array(self.coefficients, dtype=np.float64)
        if coef.ndim != 1 or coef.size != self.n_terms:
            raise ValueError(f"expected {self.n_terms} coefficients")
        if not np.all(np.isfinite(coef)):
            raise ValueError("coefficients must be finite")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "scaling", (float(lo), float(hi)))

    @property
    def n_terms(self):
        if self.kind == "poly1d":
            return self.degree + 1
        return (self.degree + 1) * (self.degree + 2) // 2

    def evaluate(self, a, b=None):
        """Raw polynomial value at angle(s); unclipped."""
        if self.kind == "poly1d":
            if b is not None:
                raise ValueError("poly1d evaluates a single angle array")
            P = _design_1d(np.atleast_1d(_scale(a, self.scaling)), self.degree)
        else:
            if b is None:
                raise ValueError("poly2d needs (theta_x, theta_y)")
            x = np.atleast_1d(_scale(a, self.scaling))
            y = np.atleast_1d(_scale(b, self.scaling))
            P = _design_2d(x, y, self.degree)
        return P @ self.coefficients


def _lstsq_checked(A, rhs):
    coef, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    if rank < A.shape[1]:
        raise FitError(f"design matrix rank {rank} < {A.shape[1]} terms")
    return coef


def _residual_diag(pred, target):
    resid = pred - target
    return {
        "rmse": float(np.sqrt(np.mean(resid**2))),
        "max_abs": float(np.max(np.abs(resid))),
    }


def fit_poly(thetas, values, degree, scaling=(0.0, TWO_PI)):
    """Least-squares fit of one univariate response curve."""
    thetas = np.asarray(thetas, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if thetas.ndim != 1 or thetas.shape != values.shape:
        raise ValueError("thetas and values must be matching vectors")
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if thetas.size <= degree:
        raise ValueError("need more sample points than the degree")
    A = _design_1d(_scale(thetas, scaling), degree)
    coef = _lstsq_checked(A, values)
    return PolynomialModel("poly1d", degree, coef, scaling), _residual_diag(A @ coef, values)


def fit_poly2d(points, values, degree, scaling=(0.0, TWO_PI)):
    """Least-squares fit of one bivariate response surface."""
    points = np.asarray(points, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] != values.shape[0]:
        raise ValueError("points must be (count, 2) aligned with values")
    if degree < 1:
        raise ValueError("degree must be >= 1")
    terms = (degree + 1) * (degree + 2) // 2
    if points.shape[0] < terms:
        raise ValueError("need at least as many points as polynomial terms")
    A = _design_2d(_scale(points[:, 0], scaling), _scale(points[:, 1], scaling), degree)
    coef = _lstsq_checked(A, values)
    return PolynomialModel("poly2d", degree, coef, scaling), _residual_diag(A @ coef, values)


@dataclass(frozen=True, eq=False)
class AttackModel:
    """Per-qubit polynomial models plus provenance metadata."""

    kind: str
    degree: int
    models: tuple
    metadata: dict

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}")
        if not self.models:
            raise ValueError("need at least one per-qubit model")
        for m in self.models:
            if m.kind != self.kind or m.degree != self.degree:
                raise ValueError("per-qubit models disagree on kind or degree")
            if m.scaling != self.models[0].scaling:
                raise ValueError("per-qubit models disagree on scaling")
        coef = np.stack([m.coefficients for m in self.models], axis=1)
        object.__setattr__(self, "_coef", np.ascontiguousarray(coef))

    @property
    def n(self):
        return len(self.models)

    @property
    def scaling(self):
        return self.models[0].scaling


def _wrap_models(kind, degree, coef, scaling):
    # coef is (terms, n) straight from the multi-RHS solve
    return tuple(
        PolynomialModel(kind, degree, coef[:, j].copy(), scaling)
        for j in range(coef.shape[1])
    )


def train_model_1d(ts, degree, scaling=(0.0, TWO_PI)):
    """Fit all qubits at once against the shared 1D design matrix."""
    if ts.thetas.size <= degree:
        raise ValueError("need more grid points than the degree")
    A = _design_1d(_scale(ts.thetas, scaling), degree)
    coef = _lstsq_checked(A, ts.means)
    models = _wrap_models("poly1d", degree, coef, scaling)
    metadata = {"L": int(ts.thetas.size), "shots": int(ts.shots), "seed": int(ts.seed)}
    return AttackModel("poly1d", degree, models, metadata), _residual_diag(A @ coef, ts.means)


def train_model_2d(ts, degree, scaling=(0.0, TWO_PI)):
    """Fit all qubits at once against the shared 2D design matrix."""
    terms = (degree + 1) * (degree + 2) // 2
    if ts.thetas.shape[0] < terms:
        raise ValueError("need at least as many grid points as polynomial terms")
    A = _design_2d(_scale(ts.thetas[:, 0], scaling), _scale(ts.thetas[:, 1], scaling), degree)
    coef = _lstsq_checked(A, ts.means)
    models = _wrap_models("poly2d", degree, coef, scaling)
    metadata = {"G": int(ts.grid), "shots": int(ts.shots), "seed": int(ts.seed)}
    return AttackModel("poly2d", degree, models, metadata), _residual_diag(A @ coef, ts.means)


def chain_reduce(challenge):
    """Collapse a product chain to one effective angle per axis, mod 2pi."""
    n = challenge.n
    theta_x = np.zeros(n)
    theta_y = np.zeros(n)
    for i, axis in enumerate(challenge.structure.axes):
        if axis == "X":
            theta_x = theta_x + challenge.angles[i]
        else:
            theta_y = theta_y + challenge.angles[i]
    return np.mod(theta_x, TWO_PI), np.mod(theta_y, TWO_PI)


def _forge(model, P):
    values = np.clip(np.einsum("ij,ji->i", P, model._coef), 0.0, 1.0)
    return sqlayer.ResponseVector(values, 0)


def predict_1d(model, challenge):
    """Forge the response to a single Y-rotation challenge."""
    if model.kind != "poly1d":
        raise ValueError("predict_1d needs a poly1d model")
    if challenge.structure.axes != ("Y",) or not challenge.structure.final_hadamard:
        raise ValueError("challenge must be a single Y rotation with final H")
    if challenge.n != model.n:
        raise ValueError("challenge width does not match the model")
    P = _design_1d(_scale(challenge.angles[0], model.scaling), model.degree)
    return _forge(model, P)


def predict_chain(model, challenge):
    """Forge the response to any product chain via its reduced angles."""
    if challenge.n != model.n:
        raise ValueError("challenge width does not match the model")
    theta_x, theta_y = chain_reduce(challenge)
    if model.kind == "poly2d":
        P = _design_2d(
            _scale(theta_x, model.scaling), _scale(theta_y, model.scaling), model.degree
        )
    else:
        if np.any(theta_x != 0.0):
            raise ValueError("poly1d model cannot represent X rotations")
        P = _design_1d(_scale(theta_y, model.scaling), model.degree)
    return _forge(model, P)


def degree_for_error(eps_hat):
    """Degree sufficient for uniform error eps_hat on the product-state family."""
    if not (math.isfinite(eps_hat) and eps_hat > 0.0):
        raise ValueError("eps_hat must be positive")
    return math.ceil(1.0 / eps_hat)


# --- JSON form ------------------------------------------------------------


def serialize_model(model):
    lo, hi = model.scaling
    obj = {
        "kind": model.kind,
        "degree": model.degree,
        "scaling": {"lo": lo, "hi": hi},
        "qubits": [m.coefficients.tolist() for m in model.models],
        "metadata": dict(model.metadata),
    }
    return json.dumps(obj, indent=2) + "\n"


def parse_model(text):
    obj = _jsonio.loads(text)
    _jsonio.expect(obj, dict, "$")
    kind = _jsonio.get(obj, "kind", str, "$")
    if kind not in _KINDS:
        raise ParseError(f"kind must be one of {_KINDS}", "$.kind")
    degree = _jsonio.get(obj, "degree", int, "$")
    if degree < 1:
        raise ParseError("degree must be >= 1", "$.degree")
    sc = _jsonio.get(obj, "scaling", dict, "$")
    lo = _jsonio.get(sc, "lo", float, "$.scaling")
    hi = _jsonio.get(sc, "hi", float, "$.scaling")
    rows = _jsonio.get(obj, "qubits", list, "$")
    if not rows:
        raise ParseError("qubits must be non-empty", "$.qubits")
    models = []
    for j, row in enumerate(rows):
        path = f"$.qubits[{j}]"
        _jsonio.expect(row, list, path)
        coef = [_jsonio.expect(c, float, f"{path}[{i}]") for i, c in enumerate(row)]
        try:
            models.append(PolynomialModel(kind, degree, np.array(coef), (lo, hi)))
        except ValueError as e:
            raise ParseError(str(e), path) from None
    metadata = _jsonio.get(obj, "metadata", dict, "$")
    size_key = "L" if kind == "poly1d" else "G"
    _jsonio.get(metadata, size_key, int, "$.metadata")
    _jsonio.get(metadata, "shots", int, "$.metadata")
    _jsonio.get(metadata, "seed", int, "$.metadata")
    try:
        return AttackModel(kind, degree, tuple(models), metadata)
    except ValueError as e:
        raise ParseError(str(e), "$") from None
