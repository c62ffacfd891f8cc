"""Hierarchy of visual features.

A binary DAG whose leaves are dictionary symbols and whose internal
vertices combine two lower features under a Gaussian model of their
separation distance. Detection locates a composite at the midpoint of
every part pair whose distance is likely enough under that model; new
composites are proposed by clustering the observed distances between
co-occurring features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .percepts import FeatureDictionary, Percept, PerceptIndex


@dataclass(frozen=True)
class CompositeFeature:
    """Two parts plus a Gaussian distance model; parts are normalized
    so that part1 <= part2."""

    part1: int
    part2: int
    distance_mean: float
    distance_std: float

    def __post_init__(self):
        if self.part1 > self.part2:
            object.__setattr__(self, "part1", self.part2)
            object.__setattr__(self, "part2", self.part1)
        if self.distance_std <= 0:
            raise ValueError("distance_std must be positive")


@dataclass(frozen=True)
class CompositeParams:
    likelihood_threshold: float = 0.1   # peak-normalized Gaussian cutoff
    min_cooccurrence: int = 10
    cluster_cut: float = 15.0           # complete-linkage cut distance
    min_cluster_size: int = 5
    std_floor: float = 0.5              # image units
    max_cluster_points: int = 2000      # cap on distances fed to linkage

    def __post_init__(self):
        if not 0.0 < self.likelihood_threshold <= 1.0:
            raise ValueError("likelihood_threshold must lie in (0, 1]")
        if min(self.min_cooccurrence, self.min_cluster_size) <= 0:
            raise ValueError("count thresholds must be positive")
        if self.cluster_cut <= 0 or self.std_floor <= 0:
            raise ValueError("distances must be positive")


class FeatureGraph:
    """Append-only feature DAG; vertex ids are creation order.

    Acyclicity holds by construction because a composite may only
    reference vertices that already exist.
    """

    def __init__(self, dictionary: FeatureDictionary):
        self.dictionary = dictionary
        self._kinds: list[str] = []
        self._symbols: list[int | None] = []
        self._composites: list[CompositeFeature | None] = []
        self._by_symbol: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self._kinds)

    @property
    def vertex_ids(self) -> range:
        return range(len(self._kinds))

    def is_primitive(self, fid: int) -> bool:
        return self._kinds[fid] == "primitive"

    def symbol(self, fid: int) -> int:
        if not self.is_primitive(fid):
            raise KeyError(f"vertex {fid} is not primitive")
        return self._symbols[fid]

    def composite(self, fid: int) -> CompositeFeature:
        if self.is_primitive(fid):
            raise KeyError(f"vertex {fid} is not composite")
        return self._composites[fid]

    def add_primitive(self, symbol: int) -> int:
        """Vertex id for a dictionary symbol (deduplicated)."""
        hit = self._by_symbol.get(symbol)
        if hit is not None:
            return hit
        if not 0 <= symbol < len(self.dictionary):
            raise ValueError(f"symbol {symbol} outside the dictionary")
        fid = len(self._kinds)
        self._kinds.append("primitive")
        self._symbols.append(symbol)
        self._composites.append(None)
        self._by_symbol[symbol] = fid
        return fid

    def duplicate_of(self, comp: CompositeFeature) -> int | None:
        """Existing vertex this composite would duplicate, if any.

        Duplicates share the parts, sit within 1 image unit in mean, and
        have overlapping [mean - std, mean + std] ranges.
        """
        for fid in range(len(self._kinds)):
            if self._kinds[fid] != "composite":
                continue
            old = self._composites[fid]
            if (old.part1, old.part2) != (comp.part1, comp.part2):
                continue
            if abs(old.distance_mean - comp.distance_mean) >= 1.0:
                continue
            lo = max(old.distance_mean - old.distance_std,
                     comp.distance_mean - comp.distance_std)
            hi = min(old.distance_mean + old.distance_std,
                     comp.distance_mean + comp.distance_std)
            if lo <= hi:
                return fid
        return None

    def add_composite(self, comp: CompositeFeature) -> tuple[int, bool]:
        """Insert a composite; returns (vertex id, whether it was new)."""
        for part in (comp.part1, comp.part2):
            if not 0 <= part < len(self._kinds):
                raise ValueError(f"unknown part vertex {part}")
        hit = self.duplicate_of(comp)
        if hit is not None:
            return hit, False
        fid = len(self._kinds)
        self._kinds.append("composite")
        self._symbols.append(None)
        self._composites.append(comp)
        return fid, True

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("features 1\n")
            for fid in self.vertex_ids:
                if self.is_primitive(fid):
                    fh.write(f"primitive {fid} {self._symbols[fid]}\n")
                else:
                    c = self._composites[fid]
                    fh.write(f"composite {fid} {c.part1} {c.part2} "
                             f"{c.distance_mean!r} {c.distance_std!r}\n")

    @classmethod
    def load(cls, path, dictionary: FeatureDictionary) -> "FeatureGraph":
        graph = cls(dictionary)
        with open(path, encoding="utf-8") as fh:
            if fh.readline().split() != ["features", "1"]:
                raise ValueError(f"not a feature graph file: {path}")
            for line in fh:
                tokens = line.split()
                if not tokens:
                    continue
                if tokens[0] == "primitive":
                    fid = graph.add_primitive(int(tokens[2]))
                elif tokens[0] == "composite":
                    comp = CompositeFeature(int(tokens[2]), int(tokens[3]),
                                            float(tokens[4]), float(tokens[5]))
                    fid = len(graph._kinds)
                    graph._kinds.append("composite")
                    graph._symbols.append(None)
                    graph._composites.append(comp)
                else:
                    raise ValueError(f"malformed feature line: {line!r}")
                if fid != int(tokens[1]):
                    raise ValueError("feature ids out of sequence")
        return graph


def occurrences(feature_id: int, percept: Percept, graph: FeatureGraph,
                params: CompositeParams,
                index: PerceptIndex | None = None,
                _memo: dict | None = None) -> set[tuple[float, float]]:
    """All locations at which a feature occurs in a percept.

    Primitive features occur at their matching interest points; a
    composite occurs at the midpoint of every pair of part occurrences
    whose distance d satisfies exp(-(d - mean)^2 / (2 std^2)) >= the
    likelihood threshold.
    """
    memo: dict[int, set] = {} if _memo is None else _memo

    def walk(fid: int) -> set[tuple[float, float]]:
        hit = memo.get(fid)
        if hit is not None:
            return hit
        if graph.is_primitive(fid):
            symbol = graph.symbol(fid)
            if index is not None and percept.id in index:
                locs = index.locations(percept.id, symbol)
                out = {(float(x), float(y)) for x, y in locs}
            else:
                symbols = graph.dictionary.match(percept.descriptor_array())
                out = {(p.x, p.y) for p, s in zip(percept.points, symbols)
                       if s == symbol}
        else:
            comp = graph.composite(fid)
            o1 = walk(comp.part1)
            o2 = walk(comp.part2)
            same = comp.part1 == comp.part2
            reach = comp.distance_std * math.sqrt(
                -2.0 * math.log(params.likelihood_threshold))
            out = set()
            for x1, y1 in o1:
                for x2, y2 in o2:
                    if same and (x1, y1) == (x2, y2):
                        continue
                    d = math.hypot(x2 - x1, y2 - y1)
                    if abs(d - comp.distance_mean) <= reach:
                        out.add(((x1 + x2) / 2.0, (y1 + y2) / 2.0))
        memo[fid] = out
        return out

    if not 0 <= feature_id < len(graph):
        raise KeyError(f"unknown feature id {feature_id}")
    return walk(feature_id)


class GraphDetector:
    """Caching presence tester over a feature graph.

    The (percept id, feature id) -> bool results are memoized, which is
    what makes repeated classification over a static database cheap.
    Percepts without an id are evaluated but not cached.
    """

    def __init__(self, graph: FeatureGraph, params: CompositeParams,
                 index: PerceptIndex | None = None):
        self.graph = graph
        self.params = params
        self.index = index
        self._cache: dict[tuple[Hashable, int], bool] = {}

    def exhibits(self, feature_id: int, percept: Percept) -> bool:
        if percept.id is None:
            return bool(occurrences(feature_id, percept, self.graph,
                                    self.params, self.index))
        key = (percept.id, feature_id)
        hit = self._cache.get(key)
        if hit is None:
            # fast path: primitive presence is a symbol-set lookup
            if (self.graph.is_primitive(feature_id) and self.index is not None
                    and percept.id in self.index):
                hit = (self.graph.symbol(feature_id)
                       in self.index.symbols(percept.id))
            else:
                hit = bool(occurrences(feature_id, percept, self.graph,
                                       self.params, self.index))
            self._cache[key] = hit
        return hit


def _pair_distances(locs1: Sequence, locs2: Sequence,
                    same_feature: bool) -> list[float]:
    out = []
    if same_feature:
        pts = list(locs1)
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if pts[i] == pts[j]:
                    continue
                out.append(math.dist(pts[i], pts[j]))
    else:
        for p1 in locs1:
            for p2 in locs2:
                out.append(math.dist(p1, p2))
    return out


def _cluster_distances(values: np.ndarray, params: CompositeParams
                       ) -> list[tuple[float, float, int]]:
    """Complete-linkage clusters cut at a fixed distance.

    Returns (mean, std, size) per kept cluster, ordered by mean. Large
    distance sets are thinned to an even subsample of the sorted values,
    which preserves the mode structure deterministically.
    """
    values = np.sort(np.asarray(values, dtype=float))
    if len(values) > params.max_cluster_points:
        pick = np.linspace(0, len(values) - 1,
                           params.max_cluster_points).astype(int)
        values = values[pick]
    if len(values) < params.min_cluster_size:
        return []
    if len(values) == 1:
        labels = np.array([1])
    else:
        z = linkage(values[:, None], method="complete")
        labels = fcluster(z, t=params.cluster_cut, criterion="distance")
    out = []
    for label in np.unique(labels):
        members = values[labels == label]
        if len(members) < params.min_cluster_size:
            continue
        out.append((float(members.mean()), float(members.std()), len(members)))
    out.sort(key=lambda t: t[0])
    return out


def generate_composites(percepts: Sequence[Percept], graph: FeatureGraph,
                        params: CompositeParams,
                        index: PerceptIndex | None = None
                        ) -> list[CompositeFeature]:
    """Propose composites from co-occurrence statistics.

    Every unordered pair of known features that co-occurs in at least
    ``min_cooccurrence`` of the given percepts contributes its pairwise
    occurrence distances; each sufficiently large cluster of those
    distances becomes a composite with the cluster mean and (floored)
    standard deviation. Composites duplicating a graph vertex are not
    emitted.
    """
    percepts = list(percepts)
    occ: dict[int, dict[int, list]] = {}
    for fid in graph.vertex_ids:
        per_percept = {}
        for pos, percept in enumerate(percepts):
            locs = occurrences(fid, percept, graph, params, index=index)
            if locs:
                per_percept[pos] = sorted(locs)
        if per_percept:
            occ[fid] = per_percept

    found: list[CompositeFeature] = []
    feats = sorted(occ)
    for i, v1 in enumerate(feats):
        for v2 in feats[i:]:
            same = v1 == v2
            if same:
                shared = [p for p, locs in occ[v1].items() if len(locs) > 1]
            else:
                shared = sorted(occ[v1].keys() & occ[v2].keys())
            if len(shared) < params.min_cooccurrence:
                continue
            distances: list[float] = []
            for pos in shared:
                distances.extend(_pair_distances(
                    occ[v1][pos], occ[v2][pos], same))
            for mean, std, _ in _cluster_distances(np.array(distances),
                                                   params):
                comp = CompositeFeature(v1, v2, mean,
                                        max(std, params.std_floor))
                if graph.duplicate_of(comp) is not None:
                    continue
                if any(c.part1 == comp.part1 and c.part2 == comp.part2
                       and abs(c.distance_mean - comp.distance_mean) < 1.0
                       for c in found):
                    continue
                found.append(comp)
    return found
