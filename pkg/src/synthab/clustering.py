"""k-means with k-means++ seeding, elbow-style k selection and scored assignment."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateK, DimensionMismatch, EmptyRange, TooFewRows, UnknownCluster
from .ingest import StandardizedMatrix
from .seeding import derive_seed

DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-4
DEFAULT_RESTARTS = 5
DEFAULT_K = 5


@dataclass(slots=True)
class ClusterModel:
    k: int
    centroids: np.ndarray
    inertia: float
    iterations_run: int
    seed: int
    labels: np.ndarray | None = None
    inertia_history: list[float] = field(default_factory=list)
    means: np.ndarray | None = None
    stds: np.ndarray | None = None

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "means": None if self.means is None else self.means.tolist(),
            "stds": None if self.stds is None else self.stds.tolist(),
            "seed": self.seed,
            "inertia": self.inertia,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClusterModel":
        return cls(
            k=obj["k"],
            centroids=np.asarray(obj["centroids"], dtype=float),
            inertia=float(obj["inertia"]),
            iterations_run=obj.get("iterations_run", 0),
            seed=obj["seed"],
            means=None if obj.get("means") is None else np.asarray(obj["means"], dtype=float),
            stds=None if obj.get("stds") is None else np.asarray(obj["stds"], dtype=float),
        )


@dataclass(frozen=True, slots=True)
class Assignment:
    cluster_id: int
    distance: float
    confidence: float


def _as_rows(X) -> tuple[np.ndarray, StandardizedMatrix | None]:
    if isinstance(X, StandardizedMatrix):
        return X.rows, X
    return np.atleast_2d(np.asarray(X, dtype=float)), None


def _sq_dists(rows: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = rows[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def kmeans_plusplus(rows: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = rows.shape[0]
    chosen = [int(rng.integers(n))]
    closest = ((rows - rows[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every remaining point coincides with a chosen centre
            idx = int(rng.integers(n))
        chosen.append(idx)
        closest = np.minimum(closest, ((rows - rows[idx]) ** 2).sum(axis=1))
    return rows[chosen].copy()


def kmeans_fit(
    X,
    k: int,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> ClusterModel:
    """Lloyd iterations from k-means++ seeds.

    Stops once the largest centroid displacement drops below ``tol`` or after
    ``max_iter`` updates. ``inertia_history`` holds the within-cluster sum of
    squares after each assignment step; it never increases.
    """
    rows, std = _as_rows(X)
    if k < 1:
        raise DegenerateK(f"k must be >= 1, got {k}")
    n = rows.shape[0]
    if n < k:
        raise TooFewRows(f"{n} rows cannot support k={k}")
    rng = np.random.default_rng(seed)
    centroids = kmeans_plusplus(rows, k, rng)

    history: list[float] = []
    iterations = 0
    while True:
        d2 = _sq_dists(rows, centroids)
        labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(n), labels].sum()))
        if iterations >= max_iter:
            break
        new = centroids.copy()
        for j in range(k):
            members = rows[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
        shift = float(np.sqrt(((new - centroids) ** 2).sum(axis=1)).max())
        centroids = new
        iterations += 1
        if shift < tol:
            d2 = _sq_dists(rows, centroids)
            labels = d2.argmin(axis=1)
            history.append(float(d2[np.arange(n), labels].sum()))
            break

    return ClusterModel(
        k=k,
        centroids=centroids,
        inertia=history[-1],
        iterations_run=iterations,
        seed=seed,
        labels=labels,
        inertia_history=history,
        means=None if std is None else std.means.copy(),
        stds=None if std is None else std.stds.copy(),
    )


def fit_best(X, k: int, seed: int = 0, restarts: int = DEFAULT_RESTARTS, **kwargs) -> ClusterModel:
    """Best-of-``restarts`` fit. Ties keep the earliest restart."""
    best = None
    for r in range(restarts):
        model = kmeans_fit(X, k, seed=derive_seed(seed, "restart", r), **kwargs)
        if best is None or model.inertia < best.inertia:
            best = model
    return best


def assign(model: ClusterModel, x) -> Assignment:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.centroids.shape[1],):
        raise DimensionMismatch(f"vector of shape {x.shape} vs centroid dim {model.centroids.shape[1]}")
    dists = np.sqrt(((model.centroids - x) ** 2).sum(axis=1))
    cid = int(dists.argmin())
    d = float(dists[cid])
    return Assignment(cid, d, 1.0 / (1.0 + d))


def assign_all(model: ClusterModel, X) -> list[Assignment]:
    rows, _ = _as_rows(X)
    return [assign(model, row) for row in rows]


@dataclass(frozen=True, slots=True)
class KRow:
    k: int
    inertia: float
    relative_inertia_drop: float | None
    min_cluster_share: float


@dataclass(slots=True)
class KSelectionReport:
    rows: list[KRow]
    chosen_k: int

    def to_json(self) -> dict:
        return {
            "rows": [
                {
                    "k": r.k,
                    "inertia": r.inertia,
                    "relative_inertia_drop": r.relative_inertia_drop,
                    "min_cluster_share": r.min_cluster_share,
                }
                for r in self.rows
            ],
            "chosen_k": self.chosen_k,
        }


def select_k(
    X,
    k_range: tuple[int, int],
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    drop_threshold: float = 0.10,
    min_share: float = 0.05,
    default_k: int = DEFAULT_K,
) -> KSelectionReport:
    """Pick the elbow: the smallest k after which one more cluster buys < 10%.

    ``relative_inertia_drop`` for row k is ``(I_k - I_{k+1}) / I_k``; the fit
    at ``k_hi + 1`` is computed when the data allows it so the last row has a
    value too. A single-k range returns that k.
    """
    rows, _ = _as_rows(X)
    n = rows.shape[0]
    lo, hi = k_range
    if lo > hi:
        raise EmptyRange(f"empty k range {k_range}")
    if lo < 1 or hi > n:
        raise EmptyRange(f"k range {k_range} outside [1, {n}]")

    fits = {k: fit_best(rows, k, seed=derive_seed(seed, "k", k), restarts=restarts) for k in range(lo, hi + 1)}
    if hi + 1 <= n and lo != hi:
        fits[hi + 1] = fit_best(rows, hi + 1, seed=derive_seed(seed, "k", hi + 1), restarts=restarts)

    report_rows = []
    for k in range(lo, hi + 1):
        model = fits[k]
        inertia = model.inertia
        nxt = fits.get(k + 1)
        if nxt is None:
            drop = None
        elif inertia <= 0:
            drop = 0.0
        else:
            drop = max(0.0, (inertia - nxt.inertia) / inertia)
        sizes = np.bincount(model.labels, minlength=k)
        report_rows.append(KRow(k, inertia, drop, float(sizes.min() / n)))

    if lo == hi:
        chosen = lo
    else:
        chosen = next(
            (r.k for r in report_rows
             if r.relative_inertia_drop is not None
             and r.relative_inertia_drop < drop_threshold
             and r.min_cluster_share >= min_share),
            min(default_k, n),
        )
    return KSelectionReport(report_rows, chosen)


def nearest_sessions(
    model: ClusterModel,
    assignments: Mapping[str, Assignment] | Iterable[tuple[str, Assignment]],
    cluster_id: int,
    n: int,
) -> list[str]:
    if not 0 <= cluster_id < model.k:
        raise UnknownCluster(f"cluster {cluster_id} not in 0..{model.k - 1}")
    items = assignments.items() if isinstance(assignments, Mapping) else assignments
    members = sorted(
        ((a.distance, sid) for sid, a in items if a.cluster_id == cluster_id),
    )
    return [sid for _, sid in members[: max(n, 0)]]
