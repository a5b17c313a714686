from .assignment import Assignment, assign, solve
from .kalman import KalmanState, NumericalFailure, kalman_initiate, kalman_predict, kalman_update
from .tracker import Detection, Track, Tracker, TrackerParams, TrackStatus, track_step

__all__ = [
    "Assignment",
    "Detection",
    "KalmanState",
    "NumericalFailure",
    "Track",
    "TrackStatus",
    "Tracker",
    "TrackerParams",
    "assign",
    "kalman_initiate",
    "kalman_predict",
    "kalman_update",
    "solve",
    "track_step",
]
