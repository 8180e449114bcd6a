"""Empirical verification of random-walk mixing and its attention consequence.

Two cross-checks run on dense matrices built by repeated multiplication (kept
independent of the sparse path and of the eigensolver that supplies the bound
curves):

* mixing: k-step transition columns approach the degree-proportional
  stationary distribution, with per-column L1 error bounded by
  sqrt(N * d_max / d_min) * (1 - gap)^k. The looser simplification
  N * exp(-k * gap) is reported alongside for comparison.
* ratio band: with nonnegative values, each entry of the k-hop attention
  output over the stationary-weighted global attention output settles into
  [(1-eta)/(1+eta), (1+eta)/(1-eta)], with onset no later than
  ceil(2 * log(N / eta) / gap).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import feature_map, global_attention_stationary
from .errors import ConfigError, ShapeError
from .graph import Graph, TransitionKind, spectral_info, stationary_distribution, transition_dense


@dataclass
class ConvergenceReport:
    num_nodes: int
    spectral_gap: float
    d_max: int
    d_min: int
    k_max: int
    max_abs_deviation: list[float]       # D(k), k = 1..k_max
    column_l1: list[list[float]]         # per k: L1 error of every column
    column_l1_max: list[float]
    rigorous_bound: list[float]          # sqrt(N d_max/d_min) (1-gap)^k
    displayed_bound: list[float]         # N exp(-k gap)
    rigorous_violations: int
    displayed_violations: int
    k0_measured: dict[float, int | None] # eps -> smallest k with D(k) <= eps
    k0_predicted: dict[float, int]       # eps -> ceil(log(N/eps)/gap)

    def to_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "spectral_gap": self.spectral_gap,
            "d_max": self.d_max,
            "d_min": self.d_min,
            "k_max": self.k_max,
            "max_abs_deviation": self.max_abs_deviation,
            "column_l1_max": self.column_l1_max,
            "column_l1": self.column_l1,
            "rigorous_bound": self.rigorous_bound,
            "displayed_bound": self.displayed_bound,
            "rigorous_violations": self.rigorous_violations,
            "displayed_violations": self.displayed_violations,
            "k0_measured": {str(k): v for k, v in self.k0_measured.items()},
            "k0_predicted": {str(k): v for k, v in self.k0_predicted.items()},
        }


@dataclass
class RatioReport:
    num_nodes: int
    spectral_gap: float
    k_max: int
    ratio_min: list[float]               # per k = 1..k_max over included entries
    ratio_max: list[float]
    eta_targets: list[float]
    k1_measured: dict[float, int | None]  # eta -> onset of the stable band
    k1_predicted: dict[float, int]        # eta -> ceil(2 log(N/eta)/gap)
    band_violations: dict[float, int]     # eta -> entries outside band at k >= predicted
    excluded_entries: int
    excluded_fraction: float

    def to_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "spectral_gap": self.spectral_gap,
            "k_max": self.k_max,
            "ratio_min": self.ratio_min,
            "ratio_max": self.ratio_max,
            "eta_targets": self.eta_targets,
            "k1_measured": {str(k): v for k, v in self.k1_measured.items()},
            "k1_predicted": {str(k): v for k, v in self.k1_predicted.items()},
            "band_violations": {str(k): v for k, v in self.band_violations.items()},
            "excluded_entries": self.excluded_entries,
            "excluded_fraction": self.excluded_fraction,
        }


def _require_mixing_graph(g: Graph):
    info = spectral_info(g)
    if not info.is_connected:
        raise ConfigError("mixing verification requires a connected graph")
    if info.is_bipartite:
        raise ConfigError("mixing verification requires a non-bipartite graph")
    return info


def verify_mixing(g: Graph, k_max: int,
                  eps_targets: tuple[float, ...] = (1e-2, 1e-4, 1e-6),
                  noise_floor: float = 1e-10) -> ConvergenceReport:
    """Iterate dense transition powers and compare against the bound curves.

    Powers come from repeated multiplication, independent of the spectral
    code path that produces the bound. When the predicted onset for some
    target lies beyond k_max, iteration continues (without recording curves)
    until the measurement can be made honestly.

    Violation counting floors the bound at noise_floor: once (1-gap)^k drops
    below the float64 resolution of the measured deviations (plateau around
    1e-13), the comparison is no longer informative. The floor sits well
    above that plateau and far below any deviation the bound constrains.
    """
    info = _require_mixing_graph(g)
    n = g.num_nodes
    gap = info.spectral_gap
    pi = stationary_distribution(g)
    d_max = int(g.degrees.max())
    d_min = int(g.degrees.min())

    k0_predicted = {
        eps: math.ceil(math.log(n / eps) / gap) for eps in eps_targets}
    k_search = max(k_max, max(k0_predicted.values()))

    step = transition_dense(g, TransitionKind.RANDOM_WALK)
    power = np.eye(n)
    deviations: list[float] = []
    column_l1: list[list[float]] = []
    column_l1_max: list[float] = []
    k0_measured: dict[float, int | None] = {eps: None for eps in eps_targets}

    factor = math.sqrt(n * d_max / d_min)
    rigorous = [factor * (1.0 - gap) ** k for k in range(1, k_max + 1)]
    displayed = [n * math.exp(-k * gap) for k in range(1, k_max + 1)]

    for k in range(1, k_search + 1):
        power = step @ power
        dev = np.abs(power - pi[:, None])
        d_k = float(dev.max())
        for eps in eps_targets:
            if k0_measured[eps] is None and d_k <= eps:
                k0_measured[eps] = k
        if k <= k_max:
            deviations.append(d_k)
            per_column = dev.sum(axis=0)
            column_l1.append(per_column.tolist())
            column_l1_max.append(float(per_column.max()))
        elif all(v is not None for v in k0_measured.values()):
            break

    rigorous_violations = sum(
        1 for got, bound in zip(column_l1_max, rigorous)
        if got > max(bound, noise_floor))
    displayed_violations = sum(
        1 for got, bound in zip(column_l1_max, displayed)
        if got > max(bound, noise_floor))

    return ConvergenceReport(
        num_nodes=n, spectral_gap=gap, d_max=d_max, d_min=d_min, k_max=k_max,
        max_abs_deviation=deviations, column_l1=column_l1,
        column_l1_max=column_l1_max, rigorous_bound=rigorous,
        displayed_bound=displayed, rigorous_violations=rigorous_violations,
        displayed_violations=displayed_violations,
        k0_measured=k0_measured, k0_predicted=k0_predicted)


def verify_sta_sa_ratio(g: Graph, queries: np.ndarray, keys: np.ndarray,
                        values: np.ndarray, k_max: int,
                        eta_targets: tuple[float, ...] = (0.3, 0.1),
                        denominator_floor: float = 1e-9) -> RatioReport:
    """Entrywise hop-k attention over stationary-weighted global attention.

    Values must be nonnegative. Entries where the global output is within
    denominator_floor of zero are excluded and counted. Both sides are dense
    evaluations: the hop-k side reuses the explicit transition powers.
    """
    values = np.asarray(values, dtype=np.float64)
    if np.any(values < 0):
        raise ShapeError("ratio verification requires nonnegative values")
    info = _require_mixing_graph(g)
    n = g.num_nodes
    gap = info.spectral_gap

    sa = global_attention_stationary(g, queries, keys, values)
    included = np.abs(sa) > denominator_floor
    excluded = int(included.size - included.sum())

    sim = feature_map(np.asarray(queries)) @ feature_map(np.asarray(keys)).T
    step = transition_dense(g, TransitionKind.RANDOM_WALK)
    power = np.eye(n)

    k1_predicted = {
        eta: math.ceil(2.0 * math.log(n / eta) / gap) for eta in eta_targets}

    ratio_min: list[float] = []
    ratio_max: list[float] = []
    for _ in range(k_max):
        power = step @ power
        weighted = power * sim
        sta = (weighted @ values) / weighted.sum(axis=1, keepdims=True)
        ratio = sta[included] / sa[included]
        ratio_min.append(float(ratio.min()))
        ratio_max.append(float(ratio.max()))

    k1_measured: dict[float, int | None] = {}
    band_violations: dict[float, int] = {}
    for eta in eta_targets:
        lo, hi = (1 - eta) / (1 + eta), (1 + eta) / (1 - eta)
        inside = [lo <= a and b <= hi
                  for a, b in zip(ratio_min, ratio_max)]
        onset = None
        for k in range(k_max, 0, -1):
            if not inside[k - 1]:
                onset = k + 1 if k < k_max else None
                break
        else:
            onset = 1
        k1_measured[eta] = onset
        band_violations[eta] = sum(
            1 for k in range(k1_predicted[eta], k_max + 1)
            if k <= k_max and not inside[k - 1])

    return RatioReport(
        num_nodes=n, spectral_gap=gap, k_max=k_max,
        ratio_min=ratio_min, ratio_max=ratio_max,
        eta_targets=list(eta_targets), k1_measured=k1_measured,
        k1_predicted=k1_predicted, band_violations=band_violations,
        excluded_entries=excluded,
        excluded_fraction=excluded / included.size)
