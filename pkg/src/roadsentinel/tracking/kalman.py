"""Constant-velocity Kalman filter over (cx, cy, aspect, height) box measurements.

Noise standard deviations scale with box height, following the usual
DeepSORT/ByteTrack parameterisation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..geometry import BBox

NDIM = 4
STD_WEIGHT_POSITION = 1.0 / 20
STD_WEIGHT_VELOCITY = 1.0 / 160

_MOTION = np.eye(2 * NDIM)
_MOTION[:NDIM, NDIM:] = np.eye(NDIM)
_OBSERVE = np.eye(NDIM, 2 * NDIM)


class NumericalFailure(ArithmeticError):
    pass


@dataclass
class KalmanState:
    mean: np.ndarray  # cx, cy, a, h, vcx, vcy, va, vh
    covariance: np.ndarray

    def bbox(self) -> BBox:
        return BBox.from_xyah(self.mean[:NDIM])


def kalman_initiate(measurement: np.ndarray) -> KalmanState:
    """Start a track from an unassociated (cx, cy, a, h) measurement."""
    m = np.asarray(measurement, dtype=float)
    mean = np.r_[m, np.zeros(NDIM)]
    h = m[3]
    std = [
        2 * STD_WEIGHT_POSITION * h,
        2 * STD_WEIGHT_POSITION * h,
        1e-2,
        2 * STD_WEIGHT_POSITION * h,
        10 * STD_WEIGHT_VELOCITY * h,
        10 * STD_WEIGHT_VELOCITY * h,
        1e-5,
        10 * STD_WEIGHT_VELOCITY * h,
    ]
    return KalmanState(mean, np.diag(np.square(std)))


def kalman_predict(s: KalmanState, freeze_height_velocity: bool = False) -> KalmanState:
    """Advance one frame under the constant-velocity model.

    `freeze_height_velocity` zeroes the height rate first, which is what the
    tracker does for tracks that are not currently matched.
    """
    mean = s.mean.copy()
    if freeze_height_velocity:
        mean[7] = 0.0
    h = mean[3]
    std_pos = [STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-2, STD_WEIGHT_POSITION * h]
    std_vel = [STD_WEIGHT_VELOCITY * h, STD_WEIGHT_VELOCITY * h, 1e-5, STD_WEIGHT_VELOCITY * h]
    q = np.diag(np.square(np.r_[std_pos, std_vel]))
    mean = _MOTION @ mean
    cov = _MOTION @ s.covariance @ _MOTION.T + q
    return KalmanState(mean, cov)


def _project(s: KalmanState) -> tuple[np.ndarray, np.ndarray]:
    h = s.mean[3]
    std = [STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1, STD_WEIGHT_POSITION * h]
    r = np.diag(np.square(std))
    return _OBSERVE @ s.mean, _OBSERVE @ s.covariance @ _OBSERVE.T + r


def kalman_update(s: KalmanState, measurement: np.ndarray | BBox) -> KalmanState:
    """Measurement update with a box (or its xyah vector)."""
    z = measurement.to_xyah() if isinstance(measurement, BBox) else np.asarray(measurement, dtype=float)
    projected_mean, projected_cov = _project(s)
    try:
        chol = scipy.linalg.cho_factor(projected_cov, lower=True, check_finite=True)
        gain = scipy.linalg.cho_solve(chol, (s.covariance @ _OBSERVE.T).T, check_finite=False).T
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"innovation covariance not invertible: {exc}") from exc
    innovation = z - projected_mean
    mean = s.mean + gain @ innovation
    cov = s.covariance - gain @ projected_cov @ gain.T
    cov = (cov + cov.T) / 2.0
    return KalmanState(mean, cov)
