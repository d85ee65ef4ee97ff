"""Iterative cross-domain collaborative learning plus the four baselines.

Each iteration: classify from the current training set, pseudolabel once to
refresh the training set and extract target clusters, align domains on the
clusters, classify again in the shared subspace, pseudolabel a second time,
then test the cluster-growth convergence rule. The final map is an extended
walker pass seeded by the final training set and the last subspace
probabilities.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .classifier import DEFAULT_C_GRID, predict_proba, train
from .errors import DataError
from .graph import (
    ProbabilityMap,
    SeedSet,
    argmax_segmentation,
    build_graph,
    erw_solve,
)
from .hsi import HsiCube, LabelMap, first_principal_component
from .pseudolabel import RoundResult, TrainingSet, pseudolabel_round
from .subspace import ProjectionPair, cca_pair_baseline, fit_ccca, project, select_components

BASELINES = ("na", "cca", "ccca", "erw")


@dataclass(frozen=True)
class CdclParams:
    """Free parameters of the collaborative loop with the published defaults."""

    beta: float = 710.0
    gamma: float = 1e-5
    rho_threshold: float = 0.5
    query_p: int = 10
    conv_fraction: float = 0.05
    max_iterations: int = 20
    c_grid: tuple = tuple(DEFAULT_C_GRID)
    folds: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if self.beta <= 0:
            raise DataError("beta must be positive")
        if self.gamma < 0:
            raise DataError("gamma must be nonnegative")
        if not 0.0 <= self.rho_threshold <= 1.0:
            raise DataError("rho threshold must lie in [0, 1]")
        if self.query_p < 1:
            raise DataError("query size must be at least 1")
        if not 0.0 < self.conv_fraction <= 1.0:
            raise DataError("convergence fraction must lie in (0, 1]")
        if self.max_iterations < 1:
            raise DataError("need at least one iteration")
        if self.folds < 1:
            raise DataError("folds must be >= 1")
        if len(self.c_grid) == 0:
            raise DataError("grid must not be empty")

    def as_dict(self) -> dict:
        return {
            "beta": self.beta,
            "gamma": self.gamma,
            "rho_threshold": self.rho_threshold,
            "query_p": self.query_p,
            "conv_fraction": self.conv_fraction,
            "max_iterations": self.max_iterations,
            "c_grid": list(self.c_grid),
            "folds": self.folds,
            "rng_seed": self.rng_seed,
        }


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    ts_size: int
    tc_per_class: dict
    tc_total: int
    subspace_dim: int
    rho: list
    test_oa: float | None

    def as_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "ts_size": self.ts_size,
            "tc_per_class": {str(k): v for k, v in self.tc_per_class.items()},
            "tc_total": self.tc_total,
            "subspace_dim": self.subspace_dim,
            "rho": self.rho,
            "test_oa": self.test_oa,
        }


@dataclass
class CdclHistory:
    records: list = field(default_factory=list)
    converged: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def as_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": [r.as_dict() for r in self.records],
        }


class CdclResult(NamedTuple):
    label_map: LabelMap
    probability_map: ProbabilityMap
    history: CdclHistory


def convergence_check(
    prev_tc_total: int,
    new_tc_total: int,
    unlabeled_total: int,
    conv_fraction: float,
) -> bool:
    """Converged when the cluster growth falls below the unlabeled fraction.

    Applied literally: a shrinking cluster count (negative increase) also
    converges.
    """
    if min(prev_tc_total, new_tc_total, unlabeled_total) < 0:
        raise DataError("counts must be nonnegative")
    return (new_tc_total - prev_tc_total) < conv_fraction * unlabeled_total


def _features_by_class(features: np.ndarray, labeled: list) -> dict:
    by_class: dict[int, list[int]] = {}
    for pixel, cls in labeled:
        by_class.setdefault(cls, []).append(pixel)
    return {cls: features[pixels] for cls, pixels in sorted(by_class.items())}


def _as_xy(features: np.ndarray, labeled: list) -> tuple[np.ndarray, np.ndarray]:
    pixels = np.array([p for p, _ in labeled], dtype=np.int64)
    labels = np.array([c for _, c in labeled], dtype=np.int64)
    return features[pixels], labels


def _class_count(*labeled_lists) -> int:
    classes = 0
    for labeled in labeled_lists:
        for _, cls in labeled:
            classes = max(classes, cls)
    return classes


def _validate_coverage(labeled: list, classes: int, name: str) -> None:
    present = {cls for _, cls in labeled}
    missing = [c for c in range(1, classes + 1) if c not in present]
    if missing:
        raise DataError(f"{name} does not cover classes {missing}")


def _oa_at(pm: ProbabilityMap, test: list) -> float:
    pixels = np.array([p for p, _ in test], dtype=np.int64)
    truth = np.array([c for _, c in test], dtype=np.int64)
    pred = np.argmax(pm.probs[pixels], axis=1) + 1
    return float((pred == truth).mean())


def run_cdcl(
    source_cube: HsiCube,
    source_train: list,
    target_cube: HsiCube,
    target_train: list,
    params: CdclParams,
    target_test: list | None = None,
    audit_sink: Callable[[dict], None] | None = None,
    stage_clock: dict | None = None,
    projection_sink: Callable[[ProjectionPair], None] | None = None,
) -> CdclResult:
    """Run the full collaborative loop and return the final classification.

    `target_test` only feeds the per-iteration accuracy in the history.
    `audit_sink` receives one record per pseudolabeling round; `stage_clock`
    accumulates wall-clock seconds per stage; `projection_sink` receives each
    iteration's retained projection pair (dump hooks for the CLI).
    """
    classes = _class_count(source_train, target_train)
    if classes < 2:
        raise DataError("need at least two classes")
    _validate_coverage(source_train, classes, "source training set")
    _validate_coverage(target_train, classes, "target training set")

    def tick(stage: str, start: float) -> None:
        if stage_clock is not None:
            stage_clock[stage] = stage_clock.get(stage, 0.0) + (time.perf_counter() - start)

    t0 = time.perf_counter()
    pc = first_principal_component(target_cube)
    graph = build_graph(pc, params.beta)
    tick("graph", t0)

    x_target = target_cube.pixel_matrix()
    x_source = source_cube.pixel_matrix()
    source_by_class = _features_by_class(x_source, source_train)
    x_source_train, y_source_train = _as_xy(x_source, source_train)
    x_target_init, y_target_init = _as_xy(x_target, target_train)

    ts = TrainingSet.from_initial(target_train)
    unlabeled_total = target_cube.n_pixels - len(target_train)
    rng = np.random.default_rng(params.rng_seed)

    history = CdclHistory()
    prev_tc_total = 0
    last_p2_map: ProbabilityMap | None = None

    def emit_audit(round_label: str, iteration: int, result: RoundResult) -> None:
        if audit_sink is None:
            return
        audit_sink(
            {
                "iteration": iteration,
                "round": round_label,
                "ts_size": len(result.training_set),
                "tc_per_class": {str(k): v for k, v in result.clusters.per_class_counts().items()},
                "candidate_count": result.candidate_count,
                "selected": [[int(p), int(c)] for p, c in result.selected],
            }
        )

    for iteration in range(1, params.max_iterations + 1):
        # classify from the current training set in the raw target space
        t0 = time.perf_counter()
        x_ts, y_ts = _as_xy(x_target, [(e.pixel, e.label) for e in ts.entries])
        model1 = train(
            x_ts, y_ts, list(params.c_grid), params.folds, int(rng.integers(2**31))
        )
        p1 = ProbabilityMap(
            target_cube.width, target_cube.height, classes,
            predict_proba(model1, x_target),
        )
        tick("classifier", t0)

        t0 = time.perf_counter()
        round1 = pseudolabel_round(
            graph, ts, p1, params.gamma, params.query_p, classes, iteration
        )
        ts = round1.training_set
        emit_audit("pre-alignment", iteration, round1)
        tick("pseudolabel", t0)

        # align domains on the freshly extracted clusters
        t0 = time.perf_counter()
        target_by_class = {
            cls: x_target[pixels] for cls, pixels in sorted(round1.clusters.members.items())
        }
        pair = fit_ccca(source_by_class, target_by_class)
        selected_pair = select_components(pair, params.rho_threshold)
        if projection_sink is not None:
            projection_sink(selected_pair)
        tick("alignment", t0)

        # classify again in the shared subspace, initial labels only
        t0 = time.perf_counter()
        z_train = np.vstack(
            [
                project(selected_pair, x_source_train, "source"),
                project(selected_pair, x_target_init, "target"),
            ]
        )
        y_train = np.concatenate([y_source_train, y_target_init])
        model2 = train(
            z_train, y_train, list(params.c_grid), params.folds, int(rng.integers(2**31))
        )
        z_all = project(selected_pair, x_target, "target")
        p2 = ProbabilityMap(
            target_cube.width, target_cube.height, classes,
            predict_proba(model2, z_all),
        )
        last_p2_map = p2
        tick("classifier", t0)

        t0 = time.perf_counter()
        round2 = pseudolabel_round(
            graph, ts, p2, params.gamma, params.query_p, classes, iteration
        )
        ts = round2.training_set
        emit_audit("post-alignment", iteration, round2)
        tick("pseudolabel", t0)

        assert (ts.per_class_counts(classes) > 0).all(), "class collapse"

        tc_total = round1.clusters.total()
        history.records.append(
            IterationRecord(
                iteration=iteration,
                ts_size=len(ts),
                tc_per_class=round1.clusters.per_class_counts(),
                tc_total=tc_total,
                subspace_dim=selected_pair.dim,
                rho=[float(r) for r in selected_pair.rho],
                test_oa=_oa_at(round2.p_erw, target_test) if target_test else None,
            )
        )
        if convergence_check(prev_tc_total, tc_total, unlabeled_total, params.conv_fraction):
            history.converged = True
            break
        prev_tc_total = tc_total

    t0 = time.perf_counter()
    final_probs = erw_solve(graph, ts.seeds(), last_p2_map, params.gamma)
    final_map = argmax_segmentation(final_probs)
    tick("final-erw", t0)
    return CdclResult(final_map, final_probs, history)


def run_baseline(
    name: str,
    source_cube: HsiCube,
    source_train: list,
    target_cube: HsiCube,
    target_train: list,
    params: CdclParams,
) -> tuple[LabelMap, ProbabilityMap]:
    """One of the non-iterative reference methods.

    na: classifier on the initial target labels alone. erw: the na
    probabilities smoothed by one extended-walker pass. cca / ccca: align
    with the paired or cluster variant on the initial labels, train on the
    projected union, classify (no iteration, no pseudolabeling).
    """
    if name not in BASELINES:
        raise DataError(f"unknown baseline {name!r}; expected one of {BASELINES}")
    classes = _class_count(source_train, target_train)
    _validate_coverage(target_train, classes, "target training set")
    x_target = target_cube.pixel_matrix()
    x_target_init, y_target_init = _as_xy(x_target, target_train)
    rng = np.random.default_rng(params.rng_seed)

    if name in ("na", "erw"):
        model = train(
            x_target_init, y_target_init, list(params.c_grid), params.folds,
            int(rng.integers(2**31)),
        )
        probs = ProbabilityMap(
            target_cube.width, target_cube.height, classes,
            predict_proba(model, x_target),
        )
        if name == "na":
            return argmax_segmentation(probs), probs
        pc = first_principal_component(target_cube)
        graph = build_graph(pc, params.beta)
        seeds = SeedSet(tuple(target_train))
        smoothed = erw_solve(graph, seeds, probs, params.gamma)
        return argmax_segmentation(smoothed), smoothed

    _validate_coverage(source_train, classes, "source training set")
    x_source = source_cube.pixel_matrix()
    source_by_class = _features_by_class(x_source, source_train)
    target_by_class = _features_by_class(x_target, target_train)
    if name == "cca":
        pair = cca_pair_baseline(source_by_class, target_by_class, int(rng.integers(2**31)))
    else:
        pair = fit_ccca(source_by_class, target_by_class)
    selected_pair = select_components(pair, params.rho_threshold)
    x_source_train, y_source_train = _as_xy(x_source, source_train)
    z_train = np.vstack(
        [
            project(selected_pair, x_source_train, "source"),
            project(selected_pair, x_target_init, "target"),
        ]
    )
    y_train = np.concatenate([y_source_train, y_target_init])
    model = train(
        z_train, y_train, list(params.c_grid), params.folds, int(rng.integers(2**31))
    )
    probs = ProbabilityMap(
        target_cube.width, target_cube.height, classes,
        predict_proba(model, project(selected_pair, x_target, "target")),
    )
    return argmax_segmentation(probs), probs
