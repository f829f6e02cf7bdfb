"""Depth kernels and Monte Carlo summand samplers.

Every depth handled here is an expectation of a computable summand. For the
empirical Type A depths the summand is a kernel ``G`` evaluated at the query
and a uniformly drawn ``r``-combination of the reference sample; the IRW depth
draws a projection direction instead.

Points are 1-d float arrays; curves are 1-d arrays of values on the grid held
by the :class:`Dataset` they are compared against.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

LP_TOL = 1e-9

INDICATOR_KINDS = frozenset({"simplicial", "spherical", "lens", "beta_skeleton", "band2"})
TYPE_A_KINDS = INDICATOR_KINDS | {"modified_band2", "h_depth"}
ALL_KINDS = TYPE_A_KINDS | {"irw"}
PAIR_KINDS = frozenset({"spherical", "lens", "beta_skeleton", "band2", "modified_band2"})


class ResourceLimitError(RuntimeError):
    """Raised when an exact enumeration would exceed the configured cap."""


@dataclass(frozen=True)
class Dataset:
    """Reference sample of points (``grid is None``) or of curves on ``grid``."""

    values: np.ndarray
    grid: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError("dataset needs at least one item")
        if not np.all(np.isfinite(values)):
            raise ValueError("dataset contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.grid is not None:
            grid = np.asarray(self.grid, dtype=float)
            if grid.ndim != 1 or grid.size < 2 or grid.size != values.shape[1]:
                raise ValueError("grid must have one entry per curve value and at least 2 points")
            if np.any(np.diff(grid) <= 0):
                raise ValueError("grid must be strictly increasing")
            grid.setflags(write=False)
            object.__setattr__(self, "grid", grid)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def is_functional(self) -> bool:
        return self.grid is not None

    def check_query(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != self.dim:
            raise ValueError(f"query has {z.size} coordinates, dataset items have {self.dim}")
        if not np.all(np.isfinite(z)):
            raise ValueError("query contains non-finite entries")
        return z

    def band_grid(self) -> np.ndarray:
        # band depths on multivariate data treat coordinates as an index grid
        if self.grid is not None:
            return self.grid
        if self.dim < 2:
            raise ValueError("band kernels need curves or at least 2 coordinates")
        return np.arange(self.dim, dtype=float)


def load_dataset(path, functional: bool = False, header: bool = False) -> Dataset:
    """Read a CSV dataset.

    Multivariate files hold one point per row. Functional files hold the grid
    in the first data row and one curve per following row.
    """
    path = Path(path)
    arr = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2)
    if functional:
        if arr.shape[0] < 2:
            raise ValueError(f"{path}: functional CSV needs a grid row and at least one curve")
        return Dataset(arr[1:], grid=arr[0])
    return Dataset(arr)


def save_dataset(data: Dataset, path) -> None:
    rows = data.values if data.grid is None else np.vstack([data.grid, data.values])
    np.savetxt(path, rows, delimiter=",", fmt="%.17g")


# --------------------------------------------------------------------------
# combinations


def sample_combination(n: int, r: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniform random ``r``-combination of ``range(n)`` as an increasing tuple (0-based)."""
    if r < 1 or r > n:
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    return tuple(int(i) for i in np.sort(rng.choice(n, size=r, replace=False)))


def sample_combinations(n: int, r: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent uniform combinations, shape ``(size, r)``, rows increasing."""
    if r < 1 or r > n:
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    if r == 1:
        return rng.integers(n, size=(size, 1))
    if r == 2:
        i = rng.integers(n, size=size)
        j = rng.integers(n - 1, size=size)
        j = j + (j >= i)
        return np.sort(np.stack([i, j], axis=1), axis=1)
    out = np.empty((size, r), dtype=np.int64)
    step = max(1, 2_000_000 // n)
    for start in range(0, size, step):
        stop = min(size, start + step)
        keys = rng.random((stop - start, n))
        out[start:stop] = np.sort(np.argpartition(keys, r - 1, axis=1)[:, :r], axis=1)
    return out


# --------------------------------------------------------------------------
# kernels, batched over rows


def _check_same(z, *others):
    z = np.asarray(z, dtype=float).reshape(-1)
    outs = []
    for o in others:
        o = np.asarray(o, dtype=float).reshape(-1)
        if o.shape != z.shape:
            raise ValueError(f"dimension mismatch: {z.shape[0]} vs {o.shape[0]}")
        outs.append(o)
    return z, outs


def spherical_batch(z, a, b):
    return (np.einsum("ij,ij->i", a - z, b - z) <= 0).astype(float)


def lens_batch(z, a, b):
    ab = np.linalg.norm(a - b, axis=1)
    return (ab >= np.maximum(np.linalg.norm(z - a, axis=1), np.linalg.norm(z - b, axis=1))).astype(float)


def beta_skeleton_batch(z, a, b, beta):
    if beta < 1:
        raise ValueError("beta must be >= 1")
    c = 2.0 / beta
    ab = np.linalg.norm(a - b, axis=1)
    n1 = np.linalg.norm(a + (c - 1.0) * b - c * z, axis=1)
    n2 = np.linalg.norm(b + (c - 1.0) * a - c * z, axis=1)
    return (ab >= np.maximum(n1, n2)).astype(float)


def _inside_band(z, a, b):
    return (np.minimum(a, b) <= z) & (z <= np.maximum(a, b))


def band2_batch(z, a, b):
    return _inside_band(z, a, b).all(axis=1).astype(float)


def modified_band2_batch(z, a, b, grid):
    inside = _inside_band(z, a, b)
    both = inside[:, :-1] & inside[:, 1:]
    return both.astype(float) @ np.diff(grid) / (grid[-1] - grid[0])


def _l2_distance(z, etas, grid):
    sq = (etas - z) ** 2
    if grid is None:
        return np.sqrt(sq.sum(axis=1))
    return np.sqrt(np.trapezoid(sq, grid, axis=1))


def h_depth_batch(z, etas, bandwidth, grid):
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    u = _l2_distance(z, etas, grid) / bandwidth
    return np.exp(-0.5 * u * u) / (math.sqrt(2.0 * math.pi) * bandwidth)


def _simplex_lp(z, verts) -> bool:
    # feasibility of sum(theta_j * v_j) = z, sum(theta) = 1, theta >= 0
    r = verts.shape[0]
    a_eq = np.vstack([verts.T, np.ones(r)])
    b_eq = np.append(z, 1.0)
    res = linprog(
        np.zeros(r), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * r, method="highs",
        options={"primal_feasibility_tolerance": LP_TOL},
    )
    return res.status == 0


def simplicial_batch(z, verts):
    """Indicator that ``z`` lies in the closed simplex spanned by each ``verts[i]``.

    ``verts`` has shape ``(m, d + 1, d)``. Barycentric coordinates come from a
    batched linear solve; singular or ill-conditioned simplices go through an LP.
    """
    m, r, d = verts.shape
    mats = np.ones((m, r, r))
    mats[:, :d, :] = np.transpose(verts, (0, 2, 1))
    rhs = np.append(z, 1.0)
    out = np.zeros(m)
    conds = np.linalg.cond(mats)
    ok = np.isfinite(conds) & (conds < 1e12)
    if ok.any():
        theta = np.linalg.solve(mats[ok], np.broadcast_to(rhs, (int(ok.sum()), r))[..., None])[..., 0]
        out[ok] = np.all(theta >= -LP_TOL, axis=1)
    for i in np.flatnonzero(~ok):
        out[i] = _simplex_lp(z, verts[i])
    return out


def simplicial_indicator(z, vertices) -> int:
    z = np.asarray(z, dtype=float).reshape(-1)
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim == 1:
        verts = verts[:, None]
    d = z.size
    if verts.shape != (d + 1, d):
        raise ValueError(f"need {d + 1} vertices of dimension {d}, got shape {verts.shape}")
    return int(simplicial_batch(z, verts[None])[0])


def spherical_indicator(z, eta1, eta2) -> int:
    z, (a, b) = _check_same(z, eta1, eta2)
    return int(spherical_batch(z, a[None], b[None])[0])


def lens_indicator(z, eta1, eta2) -> int:
    z, (a, b) = _check_same(z, eta1, eta2)
    return int(lens_batch(z, a[None], b[None])[0])


def beta_skeleton_indicator(z, eta1, eta2, beta: float) -> int:
    if beta < 1:
        raise ValueError("beta must be >= 1")
    z, (a, b) = _check_same(z, eta1, eta2)
    return int(beta_skeleton_batch(z, a[None], b[None], beta)[0])


def band2_indicator(z, eta1, eta2) -> int:
    z, (a, b) = _check_same(z, eta1, eta2)
    return int(band2_batch(z, a[None], b[None])[0])


def modified_band2_fraction(z, eta1, eta2, grid) -> float:
    z, (a, b, g) = _check_same(z, eta1, eta2, grid)
    if g.size < 2 or np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing with at least 2 points")
    return float(modified_band2_batch(z, a[None], b[None], g)[0])


def h_depth_kernel(z, eta, bandwidth: float, grid=None) -> float:
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if grid is None:
        z, (e,) = _check_same(z, eta)
        g = None
    else:
        z, (e, g) = _check_same(z, eta, grid)
    return float(h_depth_batch(z, e[None], bandwidth, g)[0])


def irw_batch(z, directions, data_values):
    proj = directions @ data_values.T  # (m, n)
    pz = directions @ z
    below = (proj <= pz[:, None]).mean(axis=1)
    above = (proj >= pz[:, None]).mean(axis=1)
    return np.minimum(below, above)


def irw_summand(z, direction, data: Dataset) -> float:
    """One IRW summand: the smaller one-sided empirical proportion along ``direction``."""
    z = data.check_query(z)
    direction = np.asarray(direction, dtype=float).reshape(-1)
    if direction.size != z.size:
        raise ValueError("direction dimension mismatch")
    if not np.any(direction):
        raise ValueError("direction must be nonzero")
    return float(irw_batch(z, direction[None], data.values)[0])


# --------------------------------------------------------------------------
# kernel specs and samplers


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    beta: float | None = None
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; choose from {sorted(ALL_KINDS)}")
        if self.kind == "beta_skeleton":
            if self.beta is None or self.beta < 1:
                raise ValueError("beta_skeleton needs beta >= 1")
        if self.kind == "h_depth":
            if self.bandwidth is None or self.bandwidth <= 0:
                raise ValueError("h_depth needs a positive bandwidth")

    @property
    def is_indicator(self) -> bool:
        return self.kind in INDICATOR_KINDS

    @property
    def is_type_a(self) -> bool:
        return self.kind in TYPE_A_KINDS

    def order(self, data: Dataset) -> int:
        """Combination size ``r`` (0 for IRW, which draws a direction)."""
        if self.kind == "simplicial":
            return data.dim + 1
        if self.kind in PAIR_KINDS:
            return 2
        if self.kind == "h_depth":
            return 1
        return 0

    def evaluate(self, z, data: Dataset, combos: np.ndarray) -> np.ndarray:
        """Kernel values at each row of ``combos`` (indices into ``data``)."""
        x = data.values
        kind = self.kind
        if kind == "simplicial":
            return simplicial_batch(z, x[combos])
        if kind == "h_depth":
            return h_depth_batch(z, x[combos[:, 0]], self.bandwidth, data.grid)
        a, b = x[combos[:, 0]], x[combos[:, 1]]
        if kind == "spherical":
            return spherical_batch(z, a, b)
        if kind == "lens":
            return lens_batch(z, a, b)
        if kind == "beta_skeleton":
            return beta_skeleton_batch(z, a, b, self.beta)
        if kind == "band2":
            return band2_batch(z, a, b)
        if kind == "modified_band2":
            return modified_band2_batch(z, a, b, data.band_grid())
        raise ValueError(f"kernel {kind!r} has no combination form")


class Sampler:
    """Anything with ``draw(size) -> ndarray`` of iid summands."""

    def draw(self, size: int) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass
class KernelSampler(Sampler):
    """Draws summands ``H(xi_j)`` of the empirical depth of ``query`` in ``data``."""

    spec: KernelSpec
    query: np.ndarray
    data: Dataset
    rng: np.random.Generator = field(repr=False)

    def __post_init__(self):
        self.query = self.data.check_query(self.query)
        r = self.spec.order(self.data)
        if r > self.data.n:
            raise ValueError(f"{self.spec.kind} needs at least {r} reference items, have {self.data.n}")
        if self.spec.kind in ("band2", "modified_band2"):
            self.data.band_grid()

    @property
    def r(self) -> int:
        return self.spec.order(self.data)

    def draw(self, size: int) -> np.ndarray:
        if self.spec.kind == "irw":
            dirs = self.rng.standard_normal((size, self.data.dim))
            return irw_batch(self.query, dirs, self.data.values)
        combos = sample_combinations(self.data.n, self.r, size, self.rng)
        return self.spec.evaluate(self.query, self.data, combos)


@dataclass
class DifferenceSampler(Sampler):
    """Summands ``H_x - H_y`` for maximum-depth classification.

    By default each step draws independent combinations from the two samples;
    ``coupled=True`` shares the indices and needs equal sample sizes.
    """

    spec: KernelSpec
    query: np.ndarray
    data_x: Dataset
    data_y: Dataset
    rng: np.random.Generator = field(repr=False)
    coupled: bool = False

    def __post_init__(self):
        if not self.spec.is_type_a:
            raise ValueError(f"classification needs a Type A base kernel, got {self.spec.kind!r}")
        if self.data_x.dim != self.data_y.dim:
            raise ValueError("the two training samples differ in dimension")
        if (self.data_x.grid is None) != (self.data_y.grid is None) or (
            self.data_x.grid is not None and not np.allclose(self.data_x.grid, self.data_y.grid)
        ):
            raise ValueError("the two training samples use different grids")
        self.query = self.data_x.check_query(self.query)
        if self.coupled and self.data_x.n != self.data_y.n:
            raise ValueError("coupled draws need equal sample sizes")
        r = self.spec.order(self.data_x)
        if r > min(self.data_x.n, self.data_y.n):
            raise ValueError(f"{self.spec.kind} needs at least {r} items per class")

    def draw(self, size: int) -> np.ndarray:
        r = self.spec.order(self.data_x)
        cx = sample_combinations(self.data_x.n, r, size, self.rng)
        cy = cx if self.coupled else sample_combinations(self.data_y.n, r, size, self.rng)
        return self.spec.evaluate(self.query, self.data_x, cx) - self.spec.evaluate(self.query, self.data_y, cy)


def classification_diff_summand(z, data_x: Dataset, data_y: Dataset, base: KernelSpec, rng, coupled=False) -> float:
    return float(DifferenceSampler(base, z, data_x, data_y, rng, coupled).draw(1)[0])


@dataclass
class BernoulliStream(Sampler):
    """iid Bernoulli(h) summands, the synthetic stand-in for an indicator kernel."""

    h: float
    rng: np.random.Generator = field(repr=False)

    def draw(self, size: int) -> np.ndarray:
        return (self.rng.random(size) < self.h).astype(float)


@dataclass
class ConstantStream(Sampler):
    value: float

    def draw(self, size: int) -> np.ndarray:
        return np.full(size, float(self.value))


@dataclass
class ArrayStream(Sampler):
    """Replays a fixed sequence; raises once exhausted."""

    values: np.ndarray
    pos: int = 0

    def draw(self, size: int) -> np.ndarray:
        out = np.asarray(self.values, dtype=float)[self.pos : self.pos + size]
        if out.size < size:
            raise IndexError("replayed stream exhausted")
        self.pos += size
        return out


# --------------------------------------------------------------------------
# exact oracle


def _combination_blocks(n: int, r: int, block: int):
    if r == 2:
        i, j = np.triu_indices(n, k=1)
        pairs = np.stack([i, j], axis=1)
        for s in range(0, len(pairs), block):
            yield pairs[s : s + block]
        return
    it = itertools.combinations(range(n), r)
    while True:
        chunk = list(itertools.islice(it, block))
        if not chunk:
            return
        yield np.array(chunk, dtype=np.int64)


def exact_depth_bruteforce(z, data: Dataset, spec: KernelSpec, cap: int = 10**7, block: int = 50_000) -> float:
    """Exact empirical Type A depth: the kernel averaged over all ``C(n, r)`` combinations."""
    if spec.kind == "irw":
        raise NotImplementedError("IRW depth has no finite exact form")
    z = data.check_query(z)
    r = spec.order(data)
    if r > data.n:
        raise ValueError(f"{spec.kind} needs at least {r} reference items")
    total = math.comb(data.n, r)
    if total > cap:
        raise ResourceLimitError(f"C({data.n},{r}) = {total} combinations exceeds cap {cap}")
    acc = 0.0
    for combos in _combination_blocks(data.n, r, block):
        acc += float(spec.evaluate(z, data, combos).sum())
    return acc / total


def exact_kernel_values(z, data: Dataset, spec: KernelSpec, cap: int = 10**7) -> np.ndarray:
    """All ``C(n, r)`` kernel values (for variance surrogates and tests)."""
    z = data.check_query(z)
    r = spec.order(data)
    total = math.comb(data.n, r)
    if total > cap:
        raise ResourceLimitError(f"C({data.n},{r}) = {total} combinations exceeds cap {cap}")
    return np.concatenate([spec.evaluate(z, data, c) for c in _combination_blocks(data.n, r, 50_000)])
