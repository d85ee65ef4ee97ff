"""Raster ingestion, spectral preprocessing, and experiment sampling.

Cubes are stored band-sequential: a ``(bands, n_pixels)`` float32 array where
pixel ``i`` sits at ``row * width + col``. Label maps are flat ``(n_pixels,)``
integer arrays with 0 meaning unlabeled and 1..C the class indices.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError

CUBE_DTYPE = "f32le"
CUBE_LAYOUT = "bsq"


@dataclass(frozen=True)
class HsiCube:
    """A width x height x bands reflectance raster."""

    width: int
    height: int
    bands: int
    values: np.ndarray  # (bands, width*height) float32, band-sequential

    def __post_init__(self):
        if self.bands < 1 or self.width * self.height < 1:
            raise DataError("cube must have at least one band and one pixel")
        expected = (self.bands, self.width * self.height)
        if self.values.shape != expected:
            raise DataError(
                f"cube values shape {self.values.shape} != expected {expected}"
            )
        if not np.isfinite(self.values).all():
            bad = int(np.flatnonzero(~np.isfinite(self.values))[0])
            raise DataError(f"cube contains non-finite value at flat index {bad}")
        self.values.flags.writeable = False

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def pixel_matrix(self) -> np.ndarray:
        """Spectra as an (n_pixels, bands) float64 matrix."""
        return self.values.T.astype(np.float64)


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel integer labels; 0 = unlabeled."""

    width: int
    height: int
    labels: np.ndarray  # (width*height,) integer

    def __post_init__(self):
        if self.labels.shape != (self.width * self.height,):
            raise DataError(
                f"label array length {self.labels.shape} does not match "
                f"{self.width}x{self.height}"
            )
        if self.labels.min(initial=0) < 0:
            raise DataError("labels must be nonnegative")
        self.labels.flags.writeable = False

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def class_count(self) -> int:
        return int(self.labels.max(initial=0))

    def grid(self) -> np.ndarray:
        return self.labels.reshape(self.height, self.width)

    def labeled_pixels(self, cls: int) -> np.ndarray:
        """Sorted pixel indices carrying class `cls`."""
        return np.flatnonzero(self.labels == cls)


@dataclass(frozen=True)
class ExperimentSplit:
    """Per-class training/test pixel draws for one trial."""

    source_train: list  # [(pixel, label), ...] in the source image
    target_train: list  # [(pixel, label), ...] in the target image
    target_test: list  # [(pixel, label), ...] in the target image
    rng_seed: int

    def __post_init__(self):
        tgt_train = {p for p, _ in self.target_train}
        tgt_test = {p for p, _ in self.target_test}
        if tgt_train & tgt_test:
            raise DataError("target train and test pixels overlap")


def load_cube(header_path: str) -> HsiCube:
    """Load a cube from its JSON header and companion raw file."""
    try:
        with open(header_path, "r", encoding="utf-8") as fh:
            header = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read cube header {header_path}: {exc}") from exc
    try:
        width = int(header["width"])
        height = int(header["height"])
        bands = int(header["bands"])
        dtype = header["dtype"]
        layout = header["layout"]
        data_rel = header["data"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed cube header {header_path}: {exc}") from exc
    if dtype != CUBE_DTYPE or layout != CUBE_LAYOUT:
        raise DataError(
            f"unsupported cube encoding dtype={dtype!r} layout={layout!r}"
        )
    raw_path = os.path.join(os.path.dirname(header_path), data_rel)
    try:
        raw = np.fromfile(raw_path, dtype="<f4")
    except OSError as exc:
        raise DataError(f"cannot read cube payload {raw_path}: {exc}") from exc
    expected = width * height * bands
    if raw.size != expected:
        raise DataError(
            f"cube payload {raw_path} holds {raw.size} values, "
            f"header declares {expected}"
        )
    if not np.isfinite(raw).all():
        bad = int(np.flatnonzero(~np.isfinite(raw))[0])
        raise DataError(f"cube payload contains non-finite value at index {bad}")
    return HsiCube(width, height, bands, raw.reshape(bands, width * height))


def save_cube(cube: HsiCube, header_path: str, data_name: str | None = None) -> None:
    """Write the JSON header plus raw little-endian float payload."""
    if data_name is None:
        stem = os.path.splitext(os.path.basename(header_path))[0]
        data_name = stem + ".raw"
    raw_path = os.path.join(os.path.dirname(header_path), data_name)
    cube.values.astype("<f4").tofile(raw_path)
    header = {
        "width": cube.width,
        "height": cube.height,
        "bands": cube.bands,
        "dtype": CUBE_DTYPE,
        "layout": CUBE_LAYOUT,
        "data": data_name,
    }
    with open(header_path, "w", encoding="utf-8") as fh:
        json.dump(header, fh, sort_keys=True)
        fh.write("\n")


def load_labels(path: str, width: int, height: int) -> LabelMap:
    """Read a raw unsigned 16-bit little-endian label file."""
    try:
        raw = np.fromfile(path, dtype="<u2")
    except OSError as exc:
        raise DataError(f"cannot read label file {path}: {exc}") from exc
    if raw.size != width * height:
        raise DataError(
            f"label file {path} holds {raw.size} values, expected {width * height}"
        )
    return LabelMap(width, height, raw.astype(np.int32))


def save_labels(labels: LabelMap, path: str) -> None:
    if labels.labels.max(initial=0) > np.iinfo(np.uint16).max:
        raise DataError("label value exceeds the unsigned 16-bit range")
    labels.labels.astype("<u2").tofile(path)


def first_principal_component(cube: HsiCube) -> np.ndarray:
    """Leading principal component image, min-max rescaled to [0, 1].

    Bands are mean-centered over pixels; the score along the top eigenvector
    of the band covariance is returned as a (height, width) float array.
    """
    x = cube.pixel_matrix()
    x = x - x.mean(axis=0)
    cov = (x.T @ x) / max(cube.n_pixels - 1, 1)
    if float(np.trace(cov)) <= 0.0:
        raise DataError("cube has zero spectral variance; no principal component")
    eigvals, eigvecs = np.linalg.eigh(cov)
    lead = eigvecs[:, -1]
    # deterministic sign: largest-magnitude loading is positive
    lead = lead * np.sign(lead[np.argmax(np.abs(lead))] or 1.0)
    score = x @ lead
    lo, hi = float(score.min()), float(score.max())
    if hi - lo <= 0.0:
        raise DataError("principal component is constant; degenerate input")
    score = (score - lo) / (hi - lo)
    return score.reshape(cube.height, cube.width)


def lloyd_kmeans(
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int = 100,
    rel_tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd's algorithm with k-means++ seeding.

    Parameters
    ----------
    points : (n, d) array
        Points to cluster.
    k : int
        Number of clusters, 1 <= k <= n.
    rng : numpy Generator
        Drives seeding only; Lloyd updates are deterministic.

    Returns
    -------
    assignment : (n,) int array
    centers : (k, d) array
    objective_history : list of float
        Within-cluster sum of squares after each assignment step.
    """
    n = points.shape[0]
    if not 1 <= k <= n:
        raise DataError(f"k={k} outside [1, {n}]")

    # k-means++: first center uniform, then D^2-weighted draws
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    chosen = np.full(n, False)
    first = int(rng.integers(n))
    centers[0] = points[first]
    chosen[first] = True
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # duplicate points: fall back to any unchosen index
            idx = int(np.flatnonzero(~chosen)[0])
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = points[idx]
        chosen[idx] = True
        d2 = np.minimum(d2, np.sum((points - centers[j]) ** 2, axis=1))

    history: list[float] = []
    assignment = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dist = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        assignment = np.argmin(dist, axis=1)
        objective = float(dist[np.arange(n), assignment].sum())
        history.append(objective)
        new_centers = centers.copy()
        for j in range(k):
            members = assignment == j
            if members.any():
                new_centers[j] = points[members].mean(axis=0)
            else:
                # re-seed an emptied cluster at the worst-served point
                worst = int(np.argmax(dist[np.arange(n), assignment]))
                new_centers[j] = points[worst]
        if np.allclose(new_centers, centers, rtol=0.0, atol=0.0):
            break
        centers = new_centers
        if len(history) >= 2:
            prev, cur = history[-2], history[-1]
            if prev - cur <= rel_tol * max(prev, 1e-300):
                break
    return assignment, centers, history


def kmeans_band_reduce(cube: HsiCube, k: int, rng_seed: int) -> HsiCube:
    """Cluster the bands into k groups and average each group into a new band.

    Bands are treated as points indexed by pixel. Output band j is the mean of
    the bands in cluster j; clusters are ordered by their lowest member band
    index.
    """
    if k > cube.bands:
        raise DataError(f"k={k} exceeds band count {cube.bands}")
    rng = np.random.default_rng(rng_seed)
    points = cube.values.astype(np.float64)
    assignment, _, _ = lloyd_kmeans(points, k, rng)
    first_member = [int(np.flatnonzero(assignment == j)[0]) for j in range(k)]
    order = np.argsort(first_member)
    out = np.empty((k, cube.n_pixels), dtype=np.float32)
    for new_j, j in enumerate(order):
        out[new_j] = points[assignment == j].mean(axis=0).astype(np.float32)
    return HsiCube(cube.width, cube.height, k, out)


def _draw_per_class(
    label_map: LabelMap,
    classes: int,
    count: int,
    rng: np.random.Generator,
    exclude: set[int] | None = None,
    domain: str = "",
) -> list[tuple[int, int]]:
    drawn = []
    for cls in range(1, classes + 1):
        pool = label_map.labeled_pixels(cls)
        if exclude:
            pool = pool[~np.isin(pool, list(exclude))]
        if pool.size < count:
            raise DataError(
                f"class {cls} has only {pool.size} available {domain} pixels, "
                f"{count} requested"
            )
        picks = rng.choice(pool, size=count, replace=False)
        drawn.extend((int(p), cls) for p in np.sort(picks))
    return drawn


def draw_split(
    source_labels: LabelMap,
    target_labels: LabelMap,
    per_class_source: int,
    per_class_target: int,
    test_fraction_or_count,
    rng_seed: int,
    target_test_labels: LabelMap | None = None,
) -> ExperimentSplit:
    """Sample a per-class experiment split, deterministically from rng_seed.

    `test_fraction_or_count` is an int (exact per-class test count) or a float
    in (0, 1] (per-class fraction of the labeled pixels left after the target
    training draw, at least one pixel). Test pixels come from
    `target_test_labels` when given (training maps vs ground truth), else
    from `target_labels`; drawn training pixels are always excluded.
    """
    if target_test_labels is None:
        target_test_labels = target_labels
    classes = max(source_labels.class_count(), target_labels.class_count())
    if classes < 1:
        raise DataError("no labeled pixels in either domain")
    if per_class_source < 1 or per_class_target < 1:
        raise DataError("per-class training counts must be at least 1")
    rng = np.random.default_rng(rng_seed)
    source_train = _draw_per_class(
        source_labels, classes, per_class_source, rng, domain="source"
    )
    target_train = _draw_per_class(
        target_labels, classes, per_class_target, rng, domain="target"
    )
    taken = {p for p, _ in target_train}
    target_test = []
    for cls in range(1, classes + 1):
        pool = target_test_labels.labeled_pixels(cls)
        pool = pool[~np.isin(pool, list(taken))]
        if isinstance(test_fraction_or_count, float):
            if not 0.0 < test_fraction_or_count <= 1.0:
                raise DataError("test fraction must lie in (0, 1]")
            want = max(1, int(round(test_fraction_or_count * pool.size)))
        else:
            want = int(test_fraction_or_count)
        if want < 1 or pool.size < want:
            raise DataError(
                f"class {cls} has {pool.size} labeled target pixels left for "
                f"testing, {want} requested"
            )
        picks = rng.choice(pool, size=want, replace=False)
        target_test.extend((int(p), cls) for p in np.sort(picks))
    return ExperimentSplit(source_train, target_train, target_test, rng_seed)


def _split_by_class(entries: list[tuple[int, int]]) -> dict[str, list[int]]:
    by_class: dict[str, list[int]] = {}
    for pixel, cls in entries:
        by_class.setdefault(str(cls), []).append(pixel)
    return by_class


def save_split(split: ExperimentSplit, path: str) -> None:
    payload = {
        "rng_seed": split.rng_seed,
        "source_train": _split_by_class(split.source_train),
        "target_train": _split_by_class(split.target_train),
        "target_test": _split_by_class(split.target_test),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_split(path: str) -> ExperimentSplit:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read split file {path}: {exc}") from exc

    def unpack(role: str) -> list[tuple[int, int]]:
        out = []
        for cls_str, pixels in sorted(payload[role].items(), key=lambda kv: int(kv[0])):
            out.extend((int(p), int(cls_str)) for p in pixels)
        return out

    try:
        return ExperimentSplit(
            unpack("source_train"),
            unpack("target_train"),
            unpack("target_test"),
            int(payload["rng_seed"]),
        )
    except KeyError as exc:
        raise DataError(f"malformed split file {path}: missing {exc}") from exc
