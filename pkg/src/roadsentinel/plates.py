"""Plate text post-processing: grammar checks, per-track identity voting, CER."""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Iterable, Sequence

from .geometry import BBox, intersection_area

CONTAINMENT_THRESHOLD = 0.9

# OCR confusions corrected by slot class
_TO_DIGIT = {"O": "0", "I": "1", "Z": "2", "S": "5", "B": "8"}
_TO_LETTER = {"0": "O", "1": "I", "5": "S", "8": "B"}


class InvalidPlate(ValueError):
    pass


class EmptyTruth(ValueError):
    pass


@dataclass(frozen=True)
class PlateGrammar:
    """Positional plate format; `pattern` is a string of L (letter) / D (digit)."""

    pattern: str = "LLLDDDL"
    alphabet: str = string.ascii_uppercase

    def __post_init__(self):
        if not self.pattern or set(self.pattern) - {"L", "D"}:
            raise ValueError(f"plate pattern must be a non-empty string of L/D, got {self.pattern!r}")
        if not self.alphabet or not set(self.alphabet) <= set(string.ascii_uppercase):
            raise ValueError("letter alphabet must be a non-empty subset of A-Z")

    def matches(self, text: str) -> bool:
        if len(text) != len(self.pattern):
            return False
        for ch, slot in zip(text, self.pattern):
            if slot == "D" and ch not in string.digits:
                return False
            if slot == "L" and ch not in self.alphabet:
                return False
        return True


DEFAULT_GRAMMAR = PlateGrammar()


@dataclass(frozen=True)
class PlateObservation:
    bbox: BBox
    text: str
    text_score: float
    frame_index: int

    def __post_init__(self):
        if not 0.0 <= self.text_score <= 1.0:
            raise ValueError(f"text_score must be in [0, 1], got {self.text_score}")


@dataclass(frozen=True)
class PlateIdentity:
    text: str
    confidence: float
    votes: int


def containment(inner: BBox, outer: BBox) -> float:
    return intersection_area(inner, outer) / inner.area


def match_plate_to_vehicle(plate: BBox, vehicles: Sequence[tuple[int, BBox]]) -> int | None:
    """Track whose box best contains the plate, or None below the containment gate."""
    best: tuple[float, float, int] | None = None
    for track_id, box in vehicles:
        c = containment(plate, box)
        if c < CONTAINMENT_THRESHOLD:
            continue
        key = (-c, box.area, track_id)
        if best is None or key < best:
            best = key
    return None if best is None else best[2]


def normalize_plate(text: str, grammar: PlateGrammar = DEFAULT_GRAMMAR) -> str:
    cleaned = "".join(ch for ch in text.upper() if ch not in " -\t")
    if len(cleaned) != len(grammar.pattern):
        raise InvalidPlate(f"expected {len(grammar.pattern)} characters, got {len(cleaned)} in {text!r}")
    out = []
    for pos, (ch, slot) in enumerate(zip(cleaned, grammar.pattern)):
        if slot == "D":
            ch = _TO_DIGIT.get(ch, ch)
            if ch not in string.digits:
                raise InvalidPlate(f"position {pos} needs a digit, got {ch!r}")
        else:
            ch = _TO_LETTER.get(ch, ch)
            if ch not in grammar.alphabet:
                raise InvalidPlate(f"position {pos} needs a letter, got {ch!r}")
        out.append(ch)
    return "".join(out)


def aggregate_identity(
    observations: Iterable[PlateObservation], grammar: PlateGrammar = DEFAULT_GRAMMAR
) -> PlateIdentity | None:
    """Score-weighted majority over the observations that normalise; None if none do."""
    weight: dict[str, float] = {}
    votes: dict[str, int] = {}
    for obs in observations:
        try:
            text = normalize_plate(obs.text, grammar)
        except InvalidPlate:
            continue
        weight[text] = weight.get(text, 0.0) + obs.text_score
        votes[text] = votes.get(text, 0) + 1
    if not votes:
        return None
    # equal weight: more votes, then alphabetical for determinism
    winner = min(votes, key=lambda t: (-weight[t], -votes[t], t))
    total = sum(weight.values())
    if total > 0:
        confidence = weight[winner] / total
    else:
        confidence = votes[winner] / sum(votes.values())
    return PlateIdentity(winner, confidence, votes[winner])


def edit_distance(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def cer(predicted: str, truth: str) -> float:
    """Levenshtein distance over the length of the truth string."""
    if not truth:
        raise EmptyTruth("character error rate needs a non-empty reference")
    return edit_distance(predicted, truth) / len(truth)
