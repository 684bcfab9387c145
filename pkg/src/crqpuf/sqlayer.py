"""Statistical-query responses from finite noisy samples.

The verifier and the attacker both see only per-qubit empirical means of
white-noise-corrupted readout bits. This module builds those means and
carries the Hoeffding sample-complexity and noise-admissibility
arithmetic for them.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import blochsim
from ._kernels import count_below
from .errors import NoiseTooLargeError


@dataclass(frozen=True, eq=False)
class ResponseVector:
    """Per-qubit empirical means in [0,1].

    shots is the sample count behind the means; 0 marks synthetic values
    (model predictions, exact expectations) that were never sampled.
    """

    values: np.ndarray
    shots: int

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size < 1:
            raise ValueError("values must be a non-empty vector")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        if np.any(vals < 0.0) or np.any(vals > 1.0):
            raise ValueError("values must lie in [0, 1]")
        if self.shots < 0:
            raise ValueError("shots must be >= 0")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self):
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ResponseVector):
            return NotImplemented
        return self.shots == other.shots and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class SQConfig:
    """Accuracy target of a statistical query: tolerance, confidence, noise."""

    tau: float
    delta: float
    eps: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0.0):
            raise ValueError("tau must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if not 0.0 <= self.eps < 0.5:
            raise ValueError("eps must be in [0, 0.5)")


def sq_response(fp, challenge, shots, stream_seed):
    """Empirical per-qubit mean of a finite sample batch."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    m = blochsim.observed_mean(fp, challenge)
    gen = np.random.default_rng(stream_seed)
    u = gen.random((shots, fp.n))
    counts = count_below(u, m)
    return ResponseVector(counts / shots, shots)


def shots_for_tolerance(tau, delta=None, eps=0.0):
    """Hoeffding count sufficient for a tau-accurate debiased mean.

    Accepts (tau, delta, eps) scalars or a single SQConfig.
    """
    if isinstance(tau, SQConfig):
        if delta is not None:
            raise TypeError("pass either an SQConfig or scalars, not both")
        tau, delta, eps = tau.tau, tau.delta, tau.eps
    if not (math.isfinite(tau) and tau > 0.0):
        raise ValueError("tau must be positive")
    if delta is None or not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    if eps < 0.0:
        raise ValueError("eps must be >= 0")
    if eps >= 0.5:
        raise NoiseTooLargeError("white-noise rate >= 1/2: SQ simulation impossible")
    half_width = tau * (1.0 - 2.0 * eps)
    return math.ceil(math.log(2.0 / delta) / (2.0 * half_width * half_width))


def noise_admissible(fp, challenge, tau):
    """Per qubit, whether eps <= tau * |1 - 2q| for the pre-noise mean q."""
    p1 = blochsim.born_p1(fp, challenge)
    arr = fp._arr
    q = p1 * (1.0 - arr["p01"]) + (1.0 - p1) * arr["p10"]
    return fp.white_noise_eps <= tau * np.abs(1.0 - 2.0 * q)


def debias(v, eps):
    """Invert the white-noise mixing channel, clamping to [0,1]."""
    if eps < 0.0:
        raise ValueError("eps must be >= 0")
    if eps >= 0.5:
        raise NoiseTooLargeError("white-noise rate >= 1/2 cannot be inverted")
    vals = np.clip((v.values - eps) / (1.0 - 2.0 * eps), 0.0, 1.0)
    return ResponseVector(vals, v.shots)
