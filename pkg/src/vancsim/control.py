"""Per-ear feedforward adaptive controller and its supporting tools.

The controller is a single-channel filtered-reference LMS: the reference
is pre-filtered by an estimate of the control-speaker-to-sensor path so
the stochastic gradient keeps the right sign, and the coefficient vector
moves against e(n) times that filtered reference.

Timing convention: the error sample handed to :meth:`FxLmsController.step`
was produced by control emitted in *earlier* steps (the loop through the
scene has one step of actuator latency). The update therefore pairs e(n)
with the filtered-reference vector as of the previous step, which makes
the gradient exact when the path estimate matches the physical path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy import signal as sps

from .scene import PathFIR

MISALIGNMENT_NONE = None


class IdentificationError(RuntimeError):
    """System identification could not produce a usable path estimate."""


def misalignment_db(true_taps: np.ndarray, estimated_taps: np.ndarray) -> float:
    """Normalized estimation error 20*log10(||s - s_hat|| / ||s||)."""
    s = np.asarray(true_taps, dtype=float)
    s_hat = np.asarray(estimated_taps, dtype=float)
    n = max(len(s), len(s_hat))
    s = np.pad(s, (0, n - len(s)))
    s_hat = np.pad(s_hat, (0, n - len(s_hat)))
    denom = np.linalg.norm(s)
    if denom == 0:
        raise ValueError("true path has zero norm")
    err = np.linalg.norm(s - s_hat)
    if err == 0:
        return float("-inf")
    return 20.0 * math.log10(err / denom)


class DivergenceGuard:
    """Latched watchdog on the running error power.

    The first ``window_s`` of samples seen after the arm delay sets the
    baseline; afterwards the mean of e^2 over a sliding window of the same
    length is compared against ``trip_ratio`` times the baseline. Once
    tripped it stays tripped until :meth:`reset`.
    """

    def __init__(
        self,
        sample_rate: int,
        window_s: float = 0.5,
        trip_ratio: float = 30.0,
        arm_delay_s: float = 0.0,
    ) -> None:
        if trip_ratio <= 1.0:
            raise ValueError("trip_ratio must exceed 1")
        if window_s <= 0.0:
            raise ValueError("window must be positive")
        self.sample_rate = int(sample_rate)
        self.window_s = float(window_s)
        self.trip_ratio = float(trip_ratio)
        self._arm_delay = int(round(arm_delay_s * sample_rate))
        self._window_n = max(1, int(round(window_s * sample_rate)))
        self.baseline_power: float | None = None
        self.tripped = False
        self.trip_sample: int | None = None
        self._n_seen = 0
        self._buf = np.zeros(self._window_n)
        self._buf_fill = 0
        self._buf_pos = 0
        self._running_sum = 0.0

    def update(self, e_n: float) -> bool:
        """Feed one error sample; returns the (latched) tripped flag."""
        if self.tripped:
            self._n_seen += 1
            return True
        self._n_seen += 1
        if self._n_seen <= self._arm_delay:
            return False
        p = e_n * e_n
        if self._buf_fill < self._window_n:
            self._buf[self._buf_fill] = p
            self._buf_fill += 1
            self._running_sum += p
            if self._buf_fill == self._window_n and self.baseline_power is None:
                self.baseline_power = self._running_sum / self._window_n
            return False
        # Sliding window over e^2; exact (recomputed) once per turnover
        # to keep the incremental sum from drifting.
        self._running_sum += p - self._buf[self._buf_pos]
        self._buf[self._buf_pos] = p
        self._buf_pos += 1
        if self._buf_pos == self._window_n:
            self._buf_pos = 0
            self._running_sum = float(np.sum(self._buf))
        mean_power = self._running_sum / self._window_n
        assert self.baseline_power is not None
        if self.baseline_power > 0 and mean_power > self.trip_ratio * self.baseline_power:
            self.tripped = True
            self.trip_sample = self._n_seen
        return self.tripped

    def reset(self) -> None:
        """Clear the latch and re-measure the baseline from scratch."""
        self.tripped = False
        self.trip_sample = None
        self.baseline_power = None
        self._buf_fill = 0
        self._buf_pos = 0
        self._running_sum = 0.0
        self._buf[:] = 0.0


class FxLmsController:
    """Streaming filtered-reference LMS controller for one ear.

    Single-owner state; the two ears run as independent instances. With
    ``normalized`` set (the default) the step size is
    ``mu0 / (eps + ||filtered reference history||^2)``, which keeps the
    adaptation speed independent of absolute signal scale. Raw mode keeps
    ``mu0`` as-is for analytic comparisons.

    An optional :class:`DivergenceGuard` watches the error stream; once it
    trips the controller freezes its coefficients and outputs zero until
    the guard is reset.
    """

    def __init__(
        self,
        n_taps: int,
        secondary_path_estimate: np.ndarray,
        mu0: float = 0.05,
        normalized: bool = True,
        leakage: float = 0.0,
        guard: DivergenceGuard | None = None,
        eps: float = 1e-12,
    ) -> None:
        if n_taps < 1:
            raise ValueError("controller needs at least one tap")
        self.l_taps = int(n_taps)
        self.s_hat = np.asarray(secondary_path_estimate, dtype=np.float64).copy()
        if self.s_hat.ndim != 1 or len(self.s_hat) < 1:
            raise ValueError("secondary path estimate must be a non-empty vector")
        self.m_taps = len(self.s_hat)
        self.mu0 = float(mu0)
        self.normalized = bool(normalized)
        self.leakage = float(leakage)
        self.guard = guard
        self.eps = float(eps)
        self.weights = np.zeros(self.l_taps)
        self._x_hist = np.zeros(max(self.l_taps, self.m_taps))
        # Filtered reference up to the previous step, newest first.
        self._r_hist = np.zeros(self.l_taps)
        self.steps = 0

    @property
    def frozen(self) -> bool:
        return self.guard.tripped if self.guard is not None else False

    def set_secondary_estimate(self, taps: np.ndarray) -> None:
        """Swap in a new path estimate (same length); histories persist."""
        taps = np.asarray(taps, dtype=np.float64)
        if len(taps) != self.m_taps:
            raise ValueError("path estimate length cannot change mid-run")
        self.s_hat = taps.copy()

    def step(self, x_n: float, e_n: float) -> float:
        """Consume one reference/error pair, emit one control sample.

        ``e_n`` is the sensor reading caused by control emitted in prior
        steps. Output uses the pre-update coefficients.
        """
        if not (math.isfinite(x_n) and math.isfinite(e_n)):
            raise ValueError("controller inputs must be finite")
        if self.guard is not None and self.guard.update(e_n):
            self.steps += 1
            return 0.0
        xh = self._x_hist
        xh[1:] = xh[:-1]
        xh[0] = x_n
        r_n = float(np.dot(self.s_hat, xh[: self.m_taps]))
        y_n = float(np.dot(self.weights, xh[: self.l_taps]))
        if self.normalized:
            mu = self.mu0 / (self.eps + float(np.dot(self._r_hist, self._r_hist)))
        else:
            mu = self.mu0
        if self.leakage:
            self.weights *= 1.0 - mu * self.leakage
        self.weights -= (mu * e_n) * self._r_hist
        rh = self._r_hist
        rh[1:] = rh[:-1]
        rh[0] = r_n
        self.steps += 1
        return y_n


def wiener_oracle(
    x: np.ndarray,
    d: np.ndarray,
    path_taps: np.ndarray,
    n_taps: int,
    ridge_scale: float = 1e-10,
) -> np.ndarray:
    """Batch least-squares reference for the converged controller.

    Minimizes ``||d + path * (w * x)||^2`` over ``n_taps`` coefficients by
    solving the normal equations with a trace-scaled ridge for numerical
    safety on near-singular problems.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if len(x) != len(d):
        raise ValueError("x and d must have equal length")
    if len(x) < 4 * n_taps:
        raise ValueError("need signals much longer than the filter")
    if np.all(d == 0.0):
        return np.zeros(n_taps)
    r = sps.lfilter(np.asarray(path_taps, dtype=float), [1.0], x)
    n = len(r)
    cols = [np.concatenate([np.zeros(k), r[: n - k]]) for k in range(n_taps)]
    design = np.stack(cols, axis=1)
    gram = design.T @ design
    ridge = ridge_scale * np.trace(gram) / n_taps
    gram[np.diag_indices_from(gram)] += ridge
    rhs = -design.T @ d
    return sla.solve(gram, rhs, assume_a="pos")


def identify_secondary_path(
    excite: "np.ndarray | object",
    response: "np.ndarray | object",
    n_taps: int,
    mu: float = 0.5,
    sample_rate: int | None = None,
    true_path: np.ndarray | None = None,
    norm_bound: float = 1e6,
) -> tuple[PathFIR, float | None]:
    """Normalized-LMS identification of the speaker-to-sensor path.

    ``excite`` should be persistently exciting (white noise works well).
    Returns the estimated :class:`PathFIR` plus the misalignment in dB
    when ``true_path`` is supplied (simulation), else ``None``.

    Raises :class:`IdentificationError` on zero excitation or if the
    coefficient norm runs away past ``norm_bound``.
    """
    ex, rate_e = _as_samples(excite, sample_rate)
    rs, rate_r = _as_samples(response, sample_rate)
    rate = rate_e or rate_r
    if rate is None:
        raise ValueError("sample_rate required when passing bare arrays")
    if len(ex) != len(rs):
        raise ValueError("excitation and response must have equal length")
    if not np.any(ex):
        raise IdentificationError("excitation signal is identically zero")
    s_hat = np.zeros(n_taps)
    xh = np.zeros(n_taps)
    eps = 1e-12
    check_every = 1024
    for i in range(len(ex)):
        xh[1:] = xh[:-1]
        xh[0] = ex[i]
        err = rs[i] - float(np.dot(s_hat, xh))
        s_hat += (mu * err / (eps + float(np.dot(xh, xh)))) * xh
        if i % check_every == 0:
            norm = float(np.linalg.norm(s_hat))
            if not math.isfinite(norm) or norm > norm_bound:
                raise IdentificationError(
                    f"identification diverged at sample {i} (||s_hat||={norm:.3g})"
                )
    fir = PathFIR(s_hat, int(rate))
    if true_path is None:
        return fir, MISALIGNMENT_NONE
    return fir, misalignment_db(true_path, s_hat)


def _as_samples(sig, sample_rate):
    samples = getattr(sig, "samples", None)
    if samples is not None:
        return np.asarray(samples, dtype=float), getattr(sig, "sample_rate", sample_rate)
    return np.asarray(sig, dtype=float), sample_rate
