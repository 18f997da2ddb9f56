"""A2C deltas, alignment metrics, behavioural modes and the sample-size bootstrap."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .agent.records import SessionLog, TerminationKind, TerminationReason
from .errors import EmptyInput, LengthMismatch, NoEvaluableShops, ShopMismatch, ZeroHumanDelta
from .seeding import derive_seed

CART_ADD_ERRORS = frozenset({"out_of_stock"})


def a2c_rate(logs: Sequence[SessionLog]) -> float:
    if not logs:
        raise EmptyInput("a2c_rate needs at least one log")
    return sum(lg.a2c for lg in logs) / len(logs)


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


# ------------------------------------------------------------ shop results


@dataclass(frozen=True, slots=True)
class ArmCounts:
    successes: int
    n: int

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.successes <= self.n:
            raise ValueError(f"need 0 <= successes <= n and n >= 1, got {self.successes}/{self.n}")

    @property
    def rate(self) -> float:
        return self.successes / self.n

    @classmethod
    def of(cls, logs: Sequence[SessionLog]) -> "ArmCounts":
        return cls(sum(lg.a2c for lg in logs), len(logs))


@dataclass(frozen=True, slots=True)
class ClusterResult:
    human_delta: float
    control: ArmCounts
    treatment: ArmCounts

    @property
    def agent_delta(self) -> float:
        return self.treatment.rate - self.control.rate


@dataclass(frozen=True, slots=True)
class ShopResult:
    shop_id: str
    human_delta: float
    agent_control: ArmCounts
    agent_treatment: ArmCounts
    per_cluster: Mapping[int, ClusterResult] = field(default_factory=dict)

    @property
    def agent_delta(self) -> float:
        return self.agent_treatment.rate - self.agent_control.rate

    def to_json(self) -> dict:
        return {
            "shop_id": self.shop_id,
            "human_delta": self.human_delta,
            "agent_control": [self.agent_control.successes, self.agent_control.n],
            "agent_treatment": [self.agent_treatment.successes, self.agent_treatment.n],
            "agent_delta": self.agent_delta,
            "per_cluster": {
                str(cid): {
                    "human_delta": c.human_delta,
                    "control": [c.control.successes, c.control.n],
                    "treatment": [c.treatment.successes, c.treatment.n],
                }
                for cid, c in sorted(self.per_cluster.items())
            },
        }


def shop_result(
    shop_id: str,
    human_delta: float,
    control_logs: Sequence[SessionLog],
    treatment_logs: Sequence[SessionLog],
    cluster_human_deltas: Mapping[int, float] | None = None,
) -> ShopResult:
    """Tally both arms; clusters without their own human delta inherit the shop's."""
    by_c: dict[int, list[SessionLog]] = defaultdict(list)
    by_t: dict[int, list[SessionLog]] = defaultdict(list)
    for lg in control_logs:
        if lg.cluster_id is not None:
            by_c[lg.cluster_id].append(lg)
    for lg in treatment_logs:
        if lg.cluster_id is not None:
            by_t[lg.cluster_id].append(lg)
    human = dict(cluster_human_deltas or {})
    per_cluster = {
        cid: ClusterResult(human.get(cid, human_delta), ArmCounts.of(by_c[cid]), ArmCounts.of(by_t[cid]))
        for cid in sorted(set(by_c) & set(by_t))
    }
    return ShopResult(shop_id, human_delta, ArmCounts.of(control_logs), ArmCounts.of(treatment_logs), per_cluster)


# ----------------------------------------------------------------- metrics


def alignment_rate(shops: Sequence[ShopResult]) -> float:
    """Percentage of shops (non-zero human delta) whose agent delta has the same sign."""
    live = [s for s in shops if s.human_delta != 0]
    if not live:
        raise NoEvaluableShops("every shop has a zero human delta")
    aligned = sum(1 for s in live if _sign(s.agent_delta) == _sign(s.human_delta))
    return 100.0 * aligned / len(live)


def alignment_probability(shop: ShopResult, mc_samples: int = 100_000, seed: int = 0) -> float:
    """Posterior P(agent effect has the human sign) under uniform Beta priors."""
    if shop.human_delta == 0:
        raise ZeroHumanDelta(f"shop {shop.shop_id} has zero human delta")
    if mc_samples < 10_000:
        raise ValueError("mc_samples must be >= 10000")
    rng = np.random.default_rng(derive_seed(seed, "alignment", shop.shop_id))
    c, t = shop.agent_control, shop.agent_treatment
    pc = rng.beta(1 + c.successes, 1 + c.n - c.successes, mc_samples)
    pt = rng.beta(1 + t.successes, 1 + t.n - t.successes, mc_samples)
    wins = pt > pc if shop.human_delta > 0 else pc > pt
    return float(wins.mean())


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Product-moment correlation; ``None`` when either side has no variance."""
    if len(xs) != len(ys):
        raise LengthMismatch(f"{len(xs)} vs {len(ys)} values")
    if len(xs) < 2:
        raise ValueError("pearson needs at least two points")
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    # deviations that are pure rounding noise count as zero variance
    if sxx <= 1e-24 * max(1.0, float(x @ x)) or syy <= 1e-24 * max(1.0, float(y @ y)):
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def binomial_noise_band(rate: float, n: int, z: float = 2.5758293035489) -> float:
    """Half-width of the two-sided band for a difference of two rates at n agents each."""
    return z * math.sqrt(2.0 * rate * (1.0 - rate) / n)


# ----------------------------------------------------------- behaviour modes


class BehaviorMode(str, Enum):
    PRODUCT_NOT_FOUND = "ProductNotFound"
    NO_A2C_DECISION = "NoA2CDecision"
    FAILED_TO_ADD = "FailedToAdd"
    STUCK_IN_LOOP = "StuckInLoop"
    PRICE_REJECTION = "PriceRejection"
    THEME_EXIT = "ThemeExit"
    OTHER = "Other"


def classify_behavior(log: SessionLog) -> BehaviorMode:
    if log.termination is TerminationKind.LOOP_GUARD:
        return BehaviorMode.STUCK_IN_LOOP
    if log.exited:
        return BehaviorMode.THEME_EXIT
    reason = log.termination_reason if log.termination is TerminationKind.AGENT_TERMINATED else None
    if reason is TerminationReason.PRICE_TOO_HIGH:
        return BehaviorMode.PRICE_REJECTION
    if any(e.error in CART_ADD_ERRORS for e in log.entries):
        return BehaviorMode.FAILED_TO_ADD
    if reason is TerminationReason.NO_SUITABLE_PRODUCT:
        return BehaviorMode.PRODUCT_NOT_FOUND
    if reason is TerminationReason.NO_A2C_DECISION:
        return BehaviorMode.NO_A2C_DECISION
    return BehaviorMode.OTHER


@dataclass(slots=True)
class BehavioralDistribution:
    shares: dict[str, float]
    counts: dict[str, int]
    differing_pairs: int
    no_differing_agents: bool = False

    def to_json(self) -> dict:
        return {
            "shares": dict(self.shares),
            "counts": dict(self.counts),
            "differing_pairs": self.differing_pairs,
            "no_differing_agents": self.no_differing_agents,
        }


def _pair(logs: Iterable[SessionLog]) -> dict[tuple[str, int], SessionLog]:
    return {(lg.shop_id, lg.agent_index): lg for lg in logs}


def behavioral_distribution(
    control_logs: Sequence[SessionLog], treatment_logs: Sequence[SessionLog]
) -> BehavioralDistribution:
    """Modes of the non-A2C side of every agent whose outcome flips between themes."""
    control, treatment = _pair(control_logs), _pair(treatment_logs)
    counts: Counter = Counter()
    for key in sorted(set(control) & set(treatment)):
        c, t = control[key], treatment[key]
        if c.a2c == t.a2c:
            continue
        counts[classify_behavior(t if c.a2c else c).value] += 1
    total = sum(counts.values())
    modes = [m.value for m in BehaviorMode]
    if total == 0:
        return BehavioralDistribution({m: 0.0 for m in modes}, {m: 0 for m in modes}, 0, True)
    return BehavioralDistribution(
        {m: counts[m] / total for m in modes}, {m: counts[m] for m in modes}, total
    )


# --------------------------------------------------------------- bootstrap


@dataclass(frozen=True, slots=True)
class Band:
    mean: float
    median: float
    p10: float
    p90: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "Band":
        a = np.asarray(values, dtype=float)
        p10, median, p90 = np.percentile(a, [10, 50, 90])
        return cls(float(a.mean()), float(median), float(p10), float(p90))

    def to_json(self) -> dict:
        return {"mean": self.mean, "median": self.median, "p10": self.p10, "p90": self.p90}


@dataclass(frozen=True, slots=True)
class SizeRow:
    size: int
    sign_alignment: Band
    correlation: Band | None  # None when no iteration had a defined correlation
    undefined_correlations: int = 0

    def to_json(self) -> dict:
        return {
            "size": self.size,
            "sign_alignment": self.sign_alignment.to_json(),
            "correlation": None if self.correlation is None else self.correlation.to_json(),
            "undefined_correlations": self.undefined_correlations,
        }


@dataclass(frozen=True, slots=True)
class BootstrapReport:
    rows: tuple[SizeRow, ...]
    iterations: int
    seed: int

    @property
    def sizes(self) -> list[int]:
        return [r.size for r in self.rows]

    def to_json(self) -> dict:
        return {"iterations": self.iterations, "seed": self.seed, "sizes": self.sizes, "rows": [r.to_json() for r in self.rows]}


def _outcomes(logs: Sequence[SessionLog]) -> dict[tuple[str, str], np.ndarray]:
    grouped: dict[tuple[str, str], list[bool]] = defaultdict(list)
    for lg in sorted(logs, key=lambda lg: (lg.shop_id, lg.theme_id, lg.agent_index)):
        grouped[(lg.shop_id, lg.theme_id)].append(lg.a2c)
    return {k: np.asarray(v, dtype=float) for k, v in grouped.items()}


def _theme_pair(keys, shop: str) -> tuple[str, str]:
    themes = sorted(t for s, t in keys if s == shop)
    if len(themes) != 2:
        raise ShopMismatch(f"shop {shop} needs exactly two themes, found {themes}")
    control = "control" if "control" in themes else themes[0]
    return control, next(t for t in themes if t != control)


def bootstrap_analysis(
    run1_logs: Sequence[SessionLog],
    run2_logs: Sequence[SessionLog],
    sizes: Sequence[int],
    iterations: int = 1000,
    seed: int = 0,
) -> BootstrapReport:
    """Cross-run self-consistency of per-shop A2C deltas as a function of agent count.

    Each (size, iteration) draws its own generator from ``(seed, size,
    iteration)``, so rows can be computed in any order or in parallel.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    runs = [_outcomes(run1_logs), _outcomes(run2_logs)]
    if set(runs[0]) != set(runs[1]):
        raise ShopMismatch("the two runs cover different shop/theme pairs")
    shops = sorted({s for s, _ in runs[0]})
    if not shops:
        raise EmptyInput("no logs to bootstrap")
    pairs = {shop: _theme_pair(runs[0], shop) for shop in shops}
    rows = []
    for size in sizes:
        if size < 1:
            raise ValueError("bootstrap sizes must be >= 1")
        agree, corr = [], []
        undefined = 0
        for it in range(iterations):
            rng = np.random.default_rng(derive_seed(seed, "bootstrap", size, it))
            deltas = np.empty((2, len(shops)))
            for r, run in enumerate(runs):
                for j, shop in enumerate(shops):
                    c_key, t_key = pairs[shop]
                    c, t = run[(shop, c_key)], run[(shop, t_key)]
                    dc = c[rng.integers(0, len(c), size)].mean()
                    dt = t[rng.integers(0, len(t), size)].mean()
                    deltas[r, j] = dt - dc
            s1, s2 = np.sign(deltas[0]), np.sign(deltas[1])
            agree.append(float(np.mean((s1 == s2) & (s1 != 0))))
            rho = pearson(deltas[0], deltas[1]) if len(shops) >= 2 else None
            if rho is None:
                undefined += 1
            else:
                corr.append(rho)
        rows.append(SizeRow(int(size), Band.of(agree), Band.of(corr) if corr else None, undefined))
    return BootstrapReport(tuple(rows), iterations, seed)


# ---------------------------------------------------------------- evaluate


@dataclass(frozen=True, slots=True)
class Metrics:
    alignment_rate: float
    alignment_probability: float
    pearson: float | None
    per_cluster_pearson: dict[str, float | None]
    shops_evaluated: int
    shops_excluded: int

    def to_json(self) -> dict:
        return {
            "alignment_rate": self.alignment_rate,
            "alignment_probability": self.alignment_probability,
            "pearson": self.pearson,
            "per_cluster_pearson": dict(self.per_cluster_pearson),
            "shops_evaluated": self.shops_evaluated,
            "shops_excluded": self.shops_excluded,
        }


def least_squares_slope(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if len(x) < 2 or sxx == 0.0:
        return None
    return float(dx @ (y - y.mean())) / sxx


def _maybe_pearson(xs, ys) -> float | None:
    return pearson(xs, ys) if len(xs) >= 2 else None


def evaluate(
    shops: Sequence[ShopResult],
    logs_by_shop_theme: Mapping[tuple[str, str], Sequence[SessionLog]] | None = None,
    mc_samples: int = 100_000,
    seed: int = 0,
) -> dict:
    """Metrics plus the per-shop rows, scatter points and fitted slope."""
    live = [s for s in shops if s.human_delta != 0]
    rate = alignment_rate(shops)
    probs = {s.shop_id: alignment_probability(s, mc_samples, seed) for s in live}
    xs = [s.agent_delta for s in live]
    ys = [s.human_delta for s in live]

    cluster_pairs: dict[int, list[tuple[float, float]]] = defaultdict(list)
    for s in live:
        for cid, c in s.per_cluster.items():
            cluster_pairs[cid].append((c.agent_delta, c.human_delta))
    pooled = [p for cid in sorted(cluster_pairs) for p in cluster_pairs[cid]]
    per_cluster = {"pooled": _maybe_pearson([a for a, _ in pooled], [h for _, h in pooled])}
    for cid in sorted(cluster_pairs):
        pts = cluster_pairs[cid]
        per_cluster[str(cid)] = _maybe_pearson([a for a, _ in pts], [h for _, h in pts])

    metrics = Metrics(
        alignment_rate=rate,
        alignment_probability=float(np.mean(list(probs.values()))),
        pearson=_maybe_pearson(xs, ys),
        per_cluster_pearson=per_cluster,
        shops_evaluated=len(live),
        shops_excluded=len(shops) - len(live),
    )
    per_shop = []
    for s in shops:
        row = s.to_json()
        row["alignment_prob"] = probs.get(s.shop_id)
        row["aligned"] = None if s.human_delta == 0 else _sign(s.agent_delta) == _sign(s.human_delta)
        if logs_by_shop_theme is not None:
            c = logs_by_shop_theme.get((s.shop_id, "control"), [])
            t = logs_by_shop_theme.get((s.shop_id, "treatment"), [])
            row["behavioral_distribution"] = behavioral_distribution(c, t).to_json()
            pooled_rate = (s.agent_control.successes + s.agent_treatment.successes) / (
                s.agent_control.n + s.agent_treatment.n
            )
            band = binomial_noise_band(pooled_rate, min(s.agent_control.n, s.agent_treatment.n))
            row["noise_band"] = band
            row["within_noise"] = abs(s.agent_delta) <= band
        per_shop.append(row)
    return {
        "metrics": metrics.to_json(),
        "per_shop": per_shop,
        "scatter": [{"shop_id": s.shop_id, "x": s.agent_delta, "y": s.human_delta} for s in live],
        "slope": least_squares_slope(xs, ys),
    }
