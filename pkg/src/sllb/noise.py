"""Finite-activity mark measures, jump-path sampling, and control costs.

The mark measure is a finite list of weighted atoms in [-1, 1] \\ {0}; a
density on that set can be discretized into atoms by composite midpoint
quadrature at the configuration layer. Infinite activity is rejected, never
truncated silently.

All samplers are pure functions of an integer seed. Ensemble workers derive
per-path seeds through :func:`path_seed`, a stable hash of
(master_seed, path_index) built on numpy's SeedSequence.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LevyMeasure:
    """Weighted mark atoms in [-1, 1] excluding zero."""

    marks: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        marks = np.asarray(self.marks, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if marks.ndim != 1 or weights.shape != marks.shape:
            raise ValueError("marks and weights must be 1-d arrays of equal length")
        if marks.size and (np.abs(marks) > 1.0).any():
            raise ValueError("marks must lie in [-1, 1]")
        if (marks == 0.0).any():
            raise ValueError("zero mark is excluded from the support")
        if (weights <= 0.0).any():
            raise ValueError("weights must be strictly positive")
        if np.unique(marks).size != marks.size:
            raise ValueError("marks must be distinct")
        marks = np.ascontiguousarray(marks)
        weights = np.ascontiguousarray(weights)
        marks.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_atoms(cls, atoms) -> "LevyMeasure":
        """Build from an iterable of (mark, weight) pairs."""
        if not atoms:
            return cls(np.empty(0), np.empty(0))
        marks, weights = zip(*atoms)
        return cls(np.array(marks, float), np.array(weights, float))

    @classmethod
    def from_density(cls, density, n_nodes: int) -> "LevyMeasure":
        """Discretize a density on [-1,1]\\{0} by composite midpoint rule.

        n_nodes must be even so no quadrature cell straddles zero.
        """
        if n_nodes < 2 or n_nodes % 2 != 0:
            raise ValueError("n_nodes must be an even integer >= 2")
        width = 2.0 / n_nodes
        nodes = -1.0 + (np.arange(n_nodes) + 0.5) * width
        w = np.array([float(density(l)) * width for l in nodes])
        if (w < 0).any():
            raise ValueError("density must be nonnegative")
        keep = w > 0
        return cls(nodes[keep], w[keep])

    @property
    def n_atoms(self) -> int:
        return self.marks.size

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def first_moment(self) -> float:
        return float((self.weights * self.marks).sum())

    @property
    def second_moment(self) -> float:
        return float((self.weights * self.marks ** 2).sum())


@dataclass(frozen=True)
class JumpPath:
    """One realization of the driving noise: ordered (time, mark) events."""

    horizon: float
    times: np.ndarray
    marks: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        marks = np.asarray(self.marks, dtype=np.float64)
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if times.shape != marks.shape or times.ndim != 1:
            raise ValueError("times and marks must be 1-d arrays of equal length")
        if times.size:
            if not (np.diff(times) > 0).all():
                raise ValueError("jump times must be strictly increasing")
            if times[0] <= 0.0 or times[-1] > self.horizon:
                raise ValueError("jump times must lie in (0, horizon]")
        times = np.ascontiguousarray(times)
        marks = np.ascontiguousarray(marks)
        times.setflags(write=False)
        marks.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "marks", marks)

    @property
    def n_events(self) -> int:
        return self.times.size

    def validate_marks(self, nu: LevyMeasure) -> None:
        if self.marks.size and not np.isin(self.marks, nu.marks).all():
            raise ValueError("path contains marks outside the measure's atom set")


@dataclass(frozen=True)
class Control:
    """Nonnegative intensity ratio theta on a (time cell, atom) grid."""

    t_edges: np.ndarray
    values: np.ndarray   # shape (n_cells, n_atoms)

    def __post_init__(self):
        edges = np.asarray(self.t_edges, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("need at least one time cell")
        if edges[0] != 0.0 or not (np.diff(edges) > 0).all():
            raise ValueError("time edges must start at 0 and increase")
        if vals.ndim != 2 or vals.shape[0] != edges.size - 1:
            raise ValueError("values must have shape (n_cells, n_atoms)")
        if (vals < 0.0).any() or not np.isfinite(vals).all():
            raise ValueError("control values must be finite and >= 0")
        edges = np.ascontiguousarray(edges)
        vals = np.ascontiguousarray(vals)
        edges.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "t_edges", edges)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value: float, horizon: float, n_cells: int,
                 n_atoms: int) -> "Control":
        edges = np.linspace(0.0, horizon, n_cells + 1)
        return cls(edges, np.full((n_cells, n_atoms), float(value)))

    def refine(self, factor: int) -> "Control":
        """Split every time cell into `factor` equal subcells (same values)."""
        if factor < 1:
            raise ValueError("refinement factor must be >= 1")
        edges = []
        for a, b in zip(self.t_edges[:-1], self.t_edges[1:]):
            edges.extend(a + (b - a) * np.arange(factor) / factor)
        edges.append(self.t_edges[-1])
        return Control(np.array(edges), np.repeat(self.values, factor, axis=0))

    @property
    def horizon(self) -> float:
        return float(self.t_edges[-1])

    @property
    def n_cells(self) -> int:
        return self.t_edges.size - 1

    @property
    def n_atoms(self) -> int:
        return self.values.shape[1]

    def cell_index(self, t: float) -> int:
        i = int(np.searchsorted(self.t_edges, t, side="right") - 1)
        return min(max(i, 0), self.n_cells - 1)

    def at(self, t: float, atom: int) -> float:
        return float(self.values[self.cell_index(t), atom])

    def is_unit(self) -> bool:
        return bool((self.values == 1.0).all())


def path_seed(master_seed: int, path_index: int) -> int:
    """Stable per-path seed derived from (master_seed, path_index)."""
    ss = np.random.SeedSequence((int(master_seed), int(path_index)))
    lo, hi = ss.generate_state(2, np.uint64)
    return (int(hi) << 64) | int(lo)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def sample_prm(nu: LevyMeasure, horizon: float, rate_scale: float,
               rng_seed) -> JumpPath:
    """Homogeneous Poisson events at total rate rate_scale * mass,
    marks categorical with probabilities w_j / mass."""
    if rate_scale <= 0.0:
        raise ValueError("rate_scale must be positive")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    rng = _rng(rng_seed)
    if nu.n_atoms == 0:
        return JumpPath(horizon, np.empty(0), np.empty(0))
    total_rate = rate_scale * nu.mass
    n = int(rng.poisson(total_rate * horizon))
    times = np.sort(rng.uniform(0.0, horizon, size=n))
    idx = rng.choice(nu.n_atoms, size=n, p=nu.weights / nu.mass)
    return JumpPath(horizon, times, nu.marks[idx])


def sample_controlled_prm(nu: LevyMeasure, horizon: float, eps: float,
                          theta: Control, rng_seed) -> JumpPath:
    """Thinned sampler for per-atom rates eps^{-1} w_j theta(t, j).

    Each atom stream is sampled at the dominating rate
    eps^{-1} w_j max_cell theta and events are accepted with probability
    theta(t, j) / theta_max.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if theta.n_atoms != nu.n_atoms:
        raise ValueError("control atom count does not match the measure")
    if not math.isclose(theta.horizon, horizon, rel_tol=0.0, abs_tol=1e-12):
        raise ValueError("control grid does not cover the horizon")
    rng = _rng(rng_seed)
    all_times = []
    all_marks = []
    for j in range(nu.n_atoms):
        theta_max = float(theta.values[:, j].max())
        if theta_max == 0.0:
            continue
        rate = nu.weights[j] * theta_max / eps
        n = int(rng.poisson(rate * horizon))
        times = np.sort(rng.uniform(0.0, horizon, size=n))
        accept = rng.uniform(0.0, 1.0, size=n)
        for t, u in zip(times, accept):
            if u * theta_max < theta.at(t, j):
                all_times.append(t)
                all_marks.append(nu.marks[j])
    if not all_times:
        return JumpPath(horizon, np.empty(0), np.empty(0))
    order = np.argsort(all_times)
    return JumpPath(horizon, np.asarray(all_times)[order],
                    np.asarray(all_marks)[order])


def entropy_cost(theta: Control, nu: LevyMeasure, horizon: float) -> float:
    """Integral of theta log theta - theta + 1 against weight x time,
    with 0 log 0 := 0."""
    if not math.isclose(theta.horizon, horizon, rel_tol=0.0, abs_tol=1e-12):
        raise ValueError("control grid does not cover the horizon")
    if theta.n_atoms != nu.n_atoms:
        raise ValueError("control atom count does not match the measure")
    v = theta.values
    integrand = np.where(v > 0.0, v * np.log(np.where(v > 0.0, v, 1.0)), 0.0)
    integrand = integrand - v + 1.0
    dt = np.diff(theta.t_edges)
    return float(np.einsum("m,mj,j->", dt, integrand, nu.weights))


def sk_bound_probe(theta_family, nu: LevyMeasure, horizon: float, f) -> dict:
    """Integral of f(l)|theta - 1| over time x marks for each control;
    reports each value and their maximum and asserts finiteness."""
    fvals = np.array([f(float(l)) for l in nu.marks])
    values = []
    for theta in theta_family:
        dt = np.diff(theta.t_edges)
        v = float(np.einsum("m,mj,j->", dt, np.abs(theta.values - 1.0),
                            fvals * nu.weights))
        values.append(v)
    if not all(math.isfinite(v) for v in values):
        raise ArithmeticError("mark integral diverged over the control family")
    return {"values": values, "max": max(values) if values else 0.0}
