"""Exact boundary sequences for Bernoulli summands.

The boundaries are built by an error-spending recursion: ``p[k]`` tracks the
probability that the partial sum equals ``k`` without having touched either
boundary, and each boundary only steps away from the process when keeping it
would spend more than half of the current budget ``alpha_N``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CONSERVATION_TOL = 1e-9


@dataclass(frozen=True)
class SpendingSequence:
    """Nondecreasing error budget ``alpha_N`` tending to ``alpha``.

    The default family is ``alpha * N / (kappa + N)``, which has spent half the
    budget after ``kappa`` steps. A custom ``table`` gives ``alpha_N`` for
    ``N = 0, 1, ...`` and is held at its last value afterwards.
    """

    alpha: float
    kappa: int = 1000
    table: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.kappa < 1:
            raise ValueError("kappa must be a positive integer")
        if self.table is not None:
            t = np.asarray(self.table, dtype=float)
            if t.size == 0 or np.any(np.diff(t) < 0) or t.min() < 0 or t.max() > self.alpha:
                raise ValueError("spending table must be nondecreasing with values in [0, alpha]")

    def __call__(self, n: int) -> float:
        if self.table is not None:
            return float(self.table[min(n, len(self.table) - 1)])
        return spending_default(n, self.alpha, self.kappa)

    def key(self) -> str:
        if self.table is None:
            return f"default(alpha={self.alpha!r},kappa={self.kappa})"
        return f"table(alpha={self.alpha!r},len={len(self.table)},hash={hash(self.table)})"


def spending_default(n: int, alpha: float, kappa: int = 1000) -> float:
    return alpha * n / (kappa + n)


@dataclass
class BernoulliBoundary:
    """Integer boundaries ``L_N < U_N`` for split point ``h``, with spent error.

    Index ``N`` of each list is step ``N``; entry 0 is the initial state
    ``L_0 = -1``, ``U_0 = 1``. The boundary can be extended lazily.
    """

    h: float
    spending: SpendingSequence
    lower: list[int] = field(default_factory=lambda: [-1])
    upper: list[int] = field(default_factory=lambda: [1])
    beta_lower: list[float] = field(default_factory=lambda: [0.0])
    beta_upper: list[float] = field(default_factory=lambda: [0.0])
    frozen: bool = False
    _p: np.ndarray = field(default_factory=lambda: np.ones(1), repr=False)

    @property
    def n_max(self) -> int:
        return len(self.lower) - 1

    def extend(self, n_max: int) -> "BernoulliBoundary":
        """Run the recursion up to step ``n_max`` (no-op if already there)."""
        if n_max <= self.n_max:
            return self
        if self.frozen:
            raise RuntimeError("adjusted boundaries cannot be extended; extend the originals")
        h, q1 = self.h, 1.0 - self.h
        lo, up = self.lower[-1], self.upper[-1]
        b_lo, b_up = self.beta_lower[-1], self.beta_upper[-1]
        p = self._p
        for n in range(self.n_max, n_max):
            half = self.spending(n + 1) / 2.0
            # q covers k = lo+1 .. up at step n+1
            q = np.zeros(p.size + 1)
            q[:-1] += p * q1
            q[1:] += p * h
            if q.size < 2:
                raise RuntimeError(f"continuation region collapsed at N={n + 1}")
            if b_up + q[-1] <= half:
                b_up += float(q[-1])
                q = q[:-1]
            else:
                up += 1
            if b_lo + q[0] <= half:
                b_lo += float(q[0])
                q = q[1:]
                lo += 1
            if q.size == 0:
                raise RuntimeError(f"continuation region collapsed at N={n + 1}")
            p = q
            self.lower.append(lo)
            self.upper.append(up)
            self.beta_lower.append(b_lo)
            self.beta_upper.append(b_up)
            if (n + 1) % 256 == 0 and abs(p.sum() + b_lo + b_up - 1.0) > CONSERVATION_TOL:
                raise RuntimeError(f"probability conservation drifted past {CONSERVATION_TOL} at N={n + 1}")
        self._p = p
        return self

    @property
    def interior_probabilities(self) -> np.ndarray:
        """``P(S_N = k, no boundary hit yet)`` for ``k = L_N + 1 .. U_N - 1`` at ``N = n_max``."""
        return self._p.copy()

    def arrays(self, n_max: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        if n_max is not None:
            self.extend(n_max)
        return np.asarray(self.lower), np.asarray(self.upper)

    def check_guarantee(self) -> bool:
        """``beta_U(N) <= alpha_N / 2`` and ``beta_L(N) <= alpha_N / 2`` for every stored ``N``."""
        half = np.array([self.spending(n) for n in range(self.n_max + 1)]) / 2.0
        return bool(np.all(np.asarray(self.beta_upper) <= half) and np.all(np.asarray(self.beta_lower) <= half))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "L", "U", "beta_L", "beta_U"])
            for n in range(self.n_max + 1):
                w.writerow([n, self.lower[n], self.upper[n], repr(float(self.beta_lower[n])), repr(float(self.beta_upper[n]))])

    @classmethod
    def from_csv(cls, path, h: float, spending: SpendingSequence) -> "BernoulliBoundary":
        """Load a cached table. The result is frozen: the recursion state is not stored."""
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or int(rows[0]["N"]) != 0:
            raise ValueError(f"{path}: not a boundary table")
        return cls(
            h=h,
            spending=spending,
            lower=[int(r["L"]) for r in rows],
            upper=[int(r["U"]) for r in rows],
            beta_lower=[float(r["beta_L"]) for r in rows],
            beta_upper=[float(r["beta_U"]) for r in rows],
            frozen=True,
        )


def build_boundaries(h: float, spending: SpendingSequence, n_max: int) -> BernoulliBoundary:
    if not 0 < h < 1:
        raise ValueError("split point h must lie in (0, 1) for Bernoulli boundaries")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    return BernoulliBoundary(h=float(h), spending=spending).extend(n_max)


@dataclass(frozen=True)
class MonotonicityReport:
    upper_changed: int
    lower_changed: int

    @property
    def total(self) -> int:
        return self.upper_changed + self.lower_changed


def enforce_monotonicity(
    boundaries: list[BernoulliBoundary], n_max: int | None = None
) -> tuple[list[BernoulliBoundary], MonotonicityReport]:
    """Make ``U_N`` and ``L_N`` nondecreasing across split points at every ``N``.

    Upper boundaries are raised by a cumulative max over ascending ``h`` and
    lower boundaries lowered by a cumulative min over descending ``h``. Both
    only widen continuation regions, so the spent-error bounds stay valid.
    """
    hs = [b.h for b in boundaries]
    if any(b <= a for a, b in zip(hs, hs[1:])):
        raise ValueError("boundaries must be sorted by strictly increasing h")
    if not boundaries:
        return [], MonotonicityReport(0, 0)
    if n_max is None:
        n_max = min(b.n_max for b in boundaries)
    for b in boundaries:
        if b.n_max < n_max:
            b.extend(n_max)
    lower = np.array([b.lower[: n_max + 1] for b in boundaries])
    upper = np.array([b.upper[: n_max + 1] for b in boundaries])
    adj_upper = np.maximum.accumulate(upper, axis=0)
    adj_lower = np.minimum.accumulate(lower[::-1], axis=0)[::-1]
    report = MonotonicityReport(int((adj_upper != upper).sum()), int((adj_lower != lower).sum()))
    out = [
        BernoulliBoundary(
            h=b.h,
            spending=b.spending,
            lower=adj_lower[j].tolist(),
            upper=adj_upper[j].tolist(),
            beta_lower=list(b.beta_lower[: n_max + 1]),
            beta_upper=list(b.beta_upper[: n_max + 1]),
            frozen=True,
        )
        for j, b in enumerate(boundaries)
    ]
    return out, report


def is_monotone(boundaries: list[BernoulliBoundary], n_max: int | None = None) -> bool:
    if n_max is None:
        n_max = min(b.n_max for b in boundaries)
    lower = np.array([b.lower[: n_max + 1] for b in boundaries])
    upper = np.array([b.upper[: n_max + 1] for b in boundaries])
    return bool(np.all(np.diff(lower, axis=0) >= 0) and np.all(np.diff(upper, axis=0) >= 0))


_BUILT: dict[tuple, BernoulliBoundary] = {}


def cached_boundary(h: float, spending: SpendingSequence, n_max: int, cache_dir=None) -> BernoulliBoundary:
    """Process-wide shared boundary for ``(h, spending)``, extended to ``n_max``.

    With ``cache_dir`` set, tables are also written to and read from CSV files
    named by ``(h, alpha, kappa, n_max)``.
    """
    key = (float(h), spending.key())
    b = _BUILT.get(key)
    if b is None and cache_dir is not None and spending.table is None:
        path = _cache_path(cache_dir, h, spending, n_max)
        if path.exists():
            return BernoulliBoundary.from_csv(path, h, spending)
    if b is None:
        b = _BUILT[key] = BernoulliBoundary(h=float(h), spending=spending)
    b.extend(n_max)
    if cache_dir is not None and spending.table is None:
        path = _cache_path(cache_dir, h, spending, n_max)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            b.to_csv(path)
    return b


def _cache_path(cache_dir, h, spending, n_max) -> Path:
    return Path(cache_dir) / f"bernoulli_h{h!r}_a{spending.alpha!r}_k{spending.kappa}_n{n_max}.csv"


