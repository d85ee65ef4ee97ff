"""Pseudolabeling by fused walker segmentations.

One round runs both walkers from the current training set, keeps the pixels
where the two segmentations agree, promotes the most confident agreeing
pixels into the training set (class round-robin), and extracts per-class
high-confidence clusters for the subspace alignment step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graph import (
    ProbabilityMap,
    SeedSet,
    WeightedGraph,
    argmax_segmentation,
    erw_solve,
    rw_solve,
)
from .hsi import LabelMap


@dataclass(frozen=True)
class TrainingEntry:
    pixel: int
    label: int
    origin: str  # "initial" | "pseudo"
    iteration: int


class TrainingSet:
    """Labeled plus pseudo-labeled target pixels; append-only."""

    def __init__(self, entries: list[TrainingEntry]):
        self._entries = list(entries)
        self._by_pixel = {e.pixel: e for e in self._entries}
        if len(self._by_pixel) != len(self._entries):
            raise DataError("training set pixels must be unique")

    @classmethod
    def from_initial(cls, labeled: list[tuple[int, int]]) -> "TrainingSet":
        return cls([TrainingEntry(p, lab, "initial", 0) for p, lab in labeled])

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, pixel: int) -> bool:
        return pixel in self._by_pixel

    @property
    def entries(self) -> tuple[TrainingEntry, ...]:
        return tuple(self._entries)

    def pixels(self) -> np.ndarray:
        return np.array([e.pixel for e in self._entries], dtype=np.int64)

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self._entries], dtype=np.int64)

    def initial_entries(self) -> list[TrainingEntry]:
        return [e for e in self._entries if e.origin == "initial"]

    def per_class_counts(self, classes: int) -> np.ndarray:
        counts = np.zeros(classes, dtype=np.int64)
        for e in self._entries:
            counts[e.label - 1] += 1
        return counts

    def seeds(self) -> SeedSet:
        return SeedSet(tuple((e.pixel, e.label) for e in self._entries))

    def extended(self, new: list[tuple[int, int]], iteration: int) -> "TrainingSet":
        """New set with pseudo entries appended; existing pixels are rejected."""
        added = []
        for pixel, label in new:
            if pixel in self._by_pixel:
                raise DataError(f"pixel {pixel} already in the training set")
            added.append(TrainingEntry(pixel, label, "pseudo", iteration))
        return TrainingSet(self._entries + added)


@dataclass(frozen=True)
class TargetClusters:
    """Per-class high-confidence pixel indices for subspace alignment."""

    members: dict  # class label -> np.ndarray of pixel indices

    def __post_init__(self):
        seen: set[int] = set()
        for pixels in self.members.values():
            as_set = set(int(p) for p in pixels)
            if seen & as_set:
                raise DataError("a pixel appears in more than one cluster")
            seen |= as_set

    def total(self) -> int:
        return sum(len(p) for p in self.members.values())

    def per_class_counts(self) -> dict:
        return {cls: int(len(p)) for cls, p in sorted(self.members.items())}


def label_verification(
    s_rw: LabelMap, s_erw: LabelMap, exclude=()
) -> tuple[np.ndarray, np.ndarray]:
    """Pixels labeled identically by both segmentations, minus `exclude`.

    Returns (pixels, labels), pixels ascending.
    """
    if (s_rw.width, s_rw.height) != (s_erw.width, s_erw.height):
        raise DataError("segmentation dimensions differ")
    agree = s_rw.labels == s_erw.labels
    mask = agree.copy()
    exclude = np.asarray(list(exclude), dtype=np.int64)
    if exclude.size:
        mask[exclude] = False
    pixels = np.flatnonzero(mask)
    return pixels, s_rw.labels[pixels].astype(np.int64)


def mbt_select(
    candidate_pixels: np.ndarray,
    candidate_labels: np.ndarray,
    p_erw: ProbabilityMap,
    p: int,
) -> list[tuple[int, int]]:
    """Pick up to p candidates, cycling classes and taking each class's
    highest-probability remaining candidate; exhausted classes are skipped.
    """
    if p < 1:
        raise DataError("selection size must be at least 1")
    queues: dict[int, list[tuple[int, int]]] = {}
    for cls in np.unique(candidate_labels):
        members = candidate_pixels[candidate_labels == cls]
        probs = p_erw.probs[members, cls - 1]
        order = np.lexsort((members, -probs))  # prob desc, pixel asc on ties
        queues[int(cls)] = [(int(members[i]), int(cls)) for i in order]
    selected: list[tuple[int, int]] = []
    cursors = {cls: 0 for cls in queues}
    class_cycle = sorted(queues)
    while len(selected) < p:
        progressed = False
        for cls in class_cycle:
            if len(selected) >= p:
                break
            if cursors[cls] < len(queues[cls]):
                selected.append(queues[cls][cursors[cls]])
                cursors[cls] += 1
                progressed = True
        if not progressed:
            break
    return selected


def extract_target_clusters(
    candidate_pixels: np.ndarray,
    candidate_labels: np.ndarray,
    p_erw: ProbabilityMap,
    initial_labels: list[tuple[int, int]],
    classes: int,
) -> TargetClusters:
    """Keep candidates whose top probability strictly exceeds their class
    mean, merged with the initially labeled pixels of each class."""
    top = p_erw.probs.max(axis=1)
    members: dict[int, np.ndarray] = {}
    initial_by_class: dict[int, list[int]] = {c: [] for c in range(1, classes + 1)}
    for pixel, cls in initial_labels:
        initial_by_class[cls].append(pixel)
    for cls in range(1, classes + 1):
        cand = candidate_pixels[candidate_labels == cls]
        kept = np.array([], dtype=np.int64)
        if cand.size:
            conf = top[cand]
            kept = cand[conf > conf.mean()]
        merged = np.unique(np.concatenate([kept, np.asarray(initial_by_class[cls], dtype=np.int64)]))
        members[cls] = merged
    return TargetClusters(members)


@dataclass(frozen=True)
class RoundResult:
    training_set: TrainingSet
    clusters: TargetClusters
    p_erw: ProbabilityMap
    candidate_count: int
    selected: list  # [(pixel, label), ...]


def pseudolabel_round(
    graph: WeightedGraph,
    ts: TrainingSet,
    priors: ProbabilityMap,
    gamma: float,
    query_p: int,
    classes: int,
    iteration: int,
) -> RoundResult:
    """One full pseudolabeling pass; the input training set is not mutated."""
    counts = ts.per_class_counts(classes)
    if (counts == 0).any():
        missing = [c + 1 for c in np.flatnonzero(counts == 0)]
        raise DataError(f"training set lacks seeds for classes {missing}")
    seeds = ts.seeds()
    p_rw = rw_solve(graph, seeds, classes)
    p_erw = erw_solve(graph, seeds, priors, gamma)
    s_rw = argmax_segmentation(p_rw)
    s_erw = argmax_segmentation(p_erw)
    cand_pixels, cand_labels = label_verification(s_rw, s_erw, exclude=ts.pixels())
    selected = mbt_select(cand_pixels, cand_labels, p_erw, query_p)
    new_ts = ts.extended(selected, iteration)
    initial = [(e.pixel, e.label) for e in ts.initial_entries()]
    clusters = extract_target_clusters(cand_pixels, cand_labels, p_erw, initial, classes)
    return RoundResult(new_ts, clusters, p_erw, int(cand_pixels.size), selected)
