"""Correlation-subspace alignment between heterogeneous domains.

The cluster variant of canonical correlation analysis treats every
cross-domain sample pair within a class as a correspondence. The covariance
matrices are accumulated from per-class sums and scatters in O(n d^2); the
M-pair enumeration is never materialized. The maximizer is obtained by
whitening both scatters (Cholesky) and taking the SVD of the whitened cross
term.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DataError, NumericalError

DEFAULT_RIDGE = 1e-6


@dataclass(frozen=True)
class ClusterStats:
    """Per-class first/second moments of both domains.

    Sufficient statistics for the pairwise-correspondence covariances:
    class sums, counts, raw scatters, and the total correspondence count
    M = sum_c n_s[c] * n_t[c].
    """

    source_sums: np.ndarray      # (C, d_s)
    target_sums: np.ndarray      # (C, d_t)
    source_counts: np.ndarray    # (C,)
    target_counts: np.ndarray    # (C,)
    source_scatters: np.ndarray  # (C, d_s, d_s)
    target_scatters: np.ndarray  # (C, d_t, d_t)

    @property
    def pair_total(self) -> int:
        return int(np.sum(self.source_counts * self.target_counts))

    @classmethod
    def from_samples(
        cls, source: dict[int, np.ndarray], target: dict[int, np.ndarray]
    ) -> "ClusterStats":
        labels = sorted(source)
        if labels != sorted(target):
            raise DataError("source and target must share the same class set")
        for lab in labels:
            if len(source[lab]) == 0 or len(target[lab]) == 0:
                raise DataError(f"class {lab} is empty in one domain")
        d_s = source[labels[0]].shape[1]
        d_t = target[labels[0]].shape[1]
        c = len(labels)
        stats = cls(
            source_sums=np.zeros((c, d_s)),
            target_sums=np.zeros((c, d_t)),
            source_counts=np.zeros(c),
            target_counts=np.zeros(c),
            source_scatters=np.zeros((c, d_s, d_s)),
            target_scatters=np.zeros((c, d_t, d_t)),
        )
        for k, lab in enumerate(labels):
            xs = np.asarray(source[lab], dtype=np.float64)
            xt = np.asarray(target[lab], dtype=np.float64)
            stats.source_sums[k] = xs.sum(axis=0)
            stats.target_sums[k] = xt.sum(axis=0)
            stats.source_counts[k] = xs.shape[0]
            stats.target_counts[k] = xt.shape[0]
            stats.source_scatters[k] = xs.T @ xs
            stats.target_scatters[k] = xt.T @ xt
        return stats


@dataclass(frozen=True)
class ProjectionPair:
    """Per-domain projection bases with their correlation coefficients."""

    source_basis: np.ndarray  # (d_s, d)
    target_basis: np.ndarray  # (d_t, d)
    rho: np.ndarray           # (d,) descending, in [0, 1]
    source_mean: np.ndarray   # (d_s,)
    target_mean: np.ndarray   # (d_t,)

    @property
    def dim(self) -> int:
        return self.source_basis.shape[1]


def pair_weighted_means(stats: ClusterStats) -> tuple[np.ndarray, np.ndarray]:
    """Global per-domain means of the cross-set correspondence distribution."""
    m = stats.pair_total
    mu_s = (stats.target_counts[:, None] * stats.source_sums).sum(axis=0) / m
    mu_t = (stats.source_counts[:, None] * stats.target_sums).sum(axis=0) / m
    return mu_s, mu_t


def ccca_covariances(
    source: dict[int, np.ndarray],
    target: dict[int, np.ndarray],
    center: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Cross/auto covariances over all within-class cross-domain pairs.

    Returns (sigma_st, sigma_ss, sigma_tt, M). With `center` unset the raw
    moment form is used; by default the correspondence-weighted global means
    are subtracted first, which keeps every correlation coefficient in [0, 1].
    """
    stats = ClusterStats.from_samples(source, target)
    m = stats.pair_total
    if m <= 0:
        raise DataError("no cross-set correspondences")
    if center:
        mu_s, mu_t = pair_weighted_means(stats)
    else:
        mu_s = np.zeros(stats.source_sums.shape[1])
        mu_t = np.zeros(stats.target_sums.shape[1])

    n_s = stats.source_counts
    n_t = stats.target_counts
    # centered class sums: sum_i (x_i - mu) = s_c - n_c mu
    cs = stats.source_sums - n_s[:, None] * mu_s
    ct = stats.target_sums - n_t[:, None] * mu_t
    sigma_st = np.einsum("ci,cj->ij", cs, ct) / m
    # centered scatters: S_c - s_c mu^T - mu s_c^T + n_c mu mu^T
    sigma_ss = np.zeros((cs.shape[1], cs.shape[1]))
    sigma_tt = np.zeros((ct.shape[1], ct.shape[1]))
    for k in range(len(n_s)):
        scat_s = (
            stats.source_scatters[k]
            - np.outer(stats.source_sums[k], mu_s)
            - np.outer(mu_s, stats.source_sums[k])
            + n_s[k] * np.outer(mu_s, mu_s)
        )
        scat_t = (
            stats.target_scatters[k]
            - np.outer(stats.target_sums[k], mu_t)
            - np.outer(mu_t, stats.target_sums[k])
            + n_t[k] * np.outer(mu_t, mu_t)
        )
        sigma_ss += n_t[k] * scat_s
        sigma_tt += n_s[k] * scat_t
    sigma_ss /= m
    sigma_tt /= m
    return sigma_st, sigma_ss, sigma_tt, m


def _whitening_factor(scatter: np.ndarray, ridge: float) -> np.ndarray:
    """Lower Cholesky factor of scatter + ridge*I, escalating the ridge
    by 10x up to two retries before giving up."""
    attempt = ridge
    for retry in range(3):
        try:
            return linalg.cholesky(
                scatter + attempt * np.eye(scatter.shape[0]), lower=True
            )
        except linalg.LinAlgError:
            attempt = (attempt if attempt > 0 else np.trace(scatter) / scatter.shape[0] * 1e-12) * 10.0
    raise NumericalError("scatter matrix is not positive definite after ridge escalation")


def solve_correlation_subspace(
    sigma_st: np.ndarray,
    sigma_ss: np.ndarray,
    sigma_tt: np.ndarray,
    epsilon: float | None = None,
    source_mean: np.ndarray | None = None,
    target_mean: np.ndarray | None = None,
) -> ProjectionPair:
    """Solve the correlation maximization as a whitened SVD.

    `epsilon` is a relative ridge: each scatter receives
    epsilon * trace / dim on its diagonal (default 1e-6; pass 0.0 for the
    exact problem). Singular values are clipped to [0, 1] and returned
    descending; min(d_s, d_t) components are kept.
    """
    for mat in (sigma_st, sigma_ss, sigma_tt):
        if not np.isfinite(mat).all():
            raise DataError("covariance input contains non-finite values")
    d_s = sigma_ss.shape[0]
    d_t = sigma_tt.shape[0]
    if sigma_st.shape != (d_s, d_t):
        raise DataError("covariance dimensions are inconsistent")
    if epsilon is None:
        epsilon = DEFAULT_RIDGE
    ridge_s = epsilon * np.trace(sigma_ss) / d_s
    ridge_t = epsilon * np.trace(sigma_tt) / d_t
    chol_s = _whitening_factor(sigma_ss, ridge_s)
    chol_t = _whitening_factor(sigma_tt, ridge_t)
    # whitened cross term: Ls^{-1} Sigma_st Lt^{-T}
    left = linalg.solve_triangular(chol_s, sigma_st, lower=True)
    white = linalg.solve_triangular(chol_t, left.T, lower=True).T
    u_w, svals, vt_w = linalg.svd(white, full_matrices=False)
    basis_s = linalg.solve_triangular(chol_s.T, u_w, lower=False)
    basis_t = linalg.solve_triangular(chol_t.T, vt_w.T, lower=False)
    rho = np.clip(svals, 0.0, 1.0)
    if source_mean is None:
        source_mean = np.zeros(d_s)
    if target_mean is None:
        target_mean = np.zeros(d_t)
    return ProjectionPair(basis_s, basis_t, rho, source_mean, target_mean)


def fit_ccca(
    source: dict[int, np.ndarray],
    target: dict[int, np.ndarray],
    epsilon: float | None = None,
) -> ProjectionPair:
    """Covariance assembly plus the correlation-subspace solve, centered."""
    sigma_st, sigma_ss, sigma_tt, _ = ccca_covariances(source, target, center=True)
    mu_s, mu_t = pair_weighted_means(ClusterStats.from_samples(source, target))
    return solve_correlation_subspace(
        sigma_st, sigma_ss, sigma_tt, epsilon, source_mean=mu_s, target_mean=mu_t
    )


def select_components(pair: ProjectionPair, rho_threshold: float) -> ProjectionPair:
    """Keep components with rho >= threshold; never return an empty basis."""
    keep = np.flatnonzero(pair.rho >= rho_threshold)
    if keep.size == 0:
        keep = np.array([0])
    return ProjectionPair(
        pair.source_basis[:, keep],
        pair.target_basis[:, keep],
        pair.rho[keep],
        pair.source_mean,
        pair.target_mean,
    )


def project(pair: ProjectionPair, samples: np.ndarray, domain: str) -> np.ndarray:
    """Center samples with the domain mean and apply that domain's basis."""
    if domain == "source":
        mean, basis = pair.source_mean, pair.source_basis
    elif domain == "target":
        mean, basis = pair.target_mean, pair.target_basis
    else:
        raise DataError(f"domain must be 'source' or 'target', got {domain!r}")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[None, :]
    if samples.shape[1] != mean.shape[0]:
        raise DataError(
            f"sample dimension {samples.shape[1]} does not match the "
            f"{domain} domain dimension {mean.shape[0]}"
        )
    return (samples - mean) @ basis


def cca_pair_baseline(
    source: dict[int, np.ndarray],
    target: dict[int, np.ndarray],
    rng_seed: int,
    epsilon: float | None = None,
) -> ProjectionPair:
    """Classical paired CCA after random within-class pairing.

    The larger side of each class is subsampled without replacement to the
    size of the smaller; each pair then forms a singleton cluster, which
    makes the cluster machinery coincide with standard paired CCA.
    """
    labels = sorted(source)
    if labels != sorted(target):
        raise DataError("source and target must share the same class set")
    rng = np.random.default_rng(rng_seed)
    paired_source: dict[int, np.ndarray] = {}
    paired_target: dict[int, np.ndarray] = {}
    key = 1
    for lab in labels:
        xs = np.asarray(source[lab], dtype=np.float64)
        xt = np.asarray(target[lab], dtype=np.float64)
        if xs.shape[0] == 0 or xt.shape[0] == 0:
            raise DataError(f"class {lab} is empty in one domain")
        m = min(xs.shape[0], xt.shape[0])
        si = rng.permutation(xs.shape[0])[:m]
        ti = rng.permutation(xt.shape[0])[:m]
        for a, b in zip(si, ti):
            paired_source[key] = xs[a][None, :]
            paired_target[key] = xt[b][None, :]
            key += 1
    return fit_ccca(paired_source, paired_target, epsilon)


def save_projection(pair: ProjectionPair, header_path: str, data_name: str | None = None) -> None:
    """JSON header (dims, rho, means) plus raw f32 bases, source then target."""
    if data_name is None:
        stem = os.path.splitext(os.path.basename(header_path))[0]
        data_name = stem + ".raw"
    raw_path = os.path.join(os.path.dirname(header_path), data_name)
    with open(raw_path, "wb") as fh:
        fh.write(pair.source_basis.astype("<f4").tobytes())
        fh.write(pair.target_basis.astype("<f4").tobytes())
    header = {
        "source_dim": int(pair.source_basis.shape[0]),
        "target_dim": int(pair.target_basis.shape[0]),
        "components": int(pair.dim),
        "rho": [float(r) for r in pair.rho],
        "source_mean": [float(v) for v in pair.source_mean],
        "target_mean": [float(v) for v in pair.target_mean],
        "data": data_name,
    }
    with open(header_path, "w", encoding="utf-8") as fh:
        json.dump(header, fh, sort_keys=True)
        fh.write("\n")
