"""Synthetic percepts: located descriptors and dictionary-based detection.

A percept stands in for an image: a frame plus a finite set of interest
points, each carrying a fixed-dimension descriptor vector. A feature
dictionary maps descriptors to discrete symbols by nearest-prototype
matching under a metric, which is all any consumer of the detection
contract ever sees.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree


class DimensionMismatchError(ValueError):
    """Descriptor dimension does not match the dictionary."""


@dataclass(frozen=True)
class InterestPoint:
    x: float
    y: float
    descriptor: tuple[float, ...]


@dataclass(frozen=True)
class Percept:
    """A located-descriptor set standing in for one image."""

    id: Hashable
    width: float
    height: float
    points: tuple[InterestPoint, ...]

    def with_id(self, new_id) -> "Percept":
        return replace(self, id=new_id)

    def descriptor_array(self) -> np.ndarray:
        if not self.points:
            return np.empty((0, 0))
        return np.array([p.descriptor for p in self.points], dtype=float)

    def location_array(self) -> np.ndarray:
        if not self.points:
            return np.empty((0, 2))
        return np.array([(p.x, p.y) for p in self.points], dtype=float)


@dataclass(frozen=True)
class PrimitiveFeature:
    """Presence test for one dictionary symbol at any interest point."""

    symbol: int


class FeatureDictionary:
    """Descriptor prototypes with metric matching.

    The metric is Euclidean or diagonal-weighted (a diagonal Mahalanobis
    given per-dimension inverse variances). Prototypes must be pairwise
    farther apart than ``match_threshold`` so that symbol assignment is
    unambiguous; the generators in this package enforce a 4x separation.
    """

    def __init__(self, entries: np.ndarray, match_threshold: float,
                 weights: np.ndarray | None = None):
        self.entries = np.asarray(entries, dtype=float)
        if self.entries.ndim != 2:
            raise ValueError("entries must be a (count, dim) array")
        self.match_threshold = float(match_threshold)
        self.weights = None if weights is None else np.asarray(weights, float)
        if self.weights is not None and self.weights.shape != (self.dim,):
            raise ValueError("weights must have one entry per dimension")
        self._scale = (np.ones(self.dim) if self.weights is None
                       else np.sqrt(self.weights))
        self._tree = cKDTree(self.entries * self._scale)
        self._check_separation()

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    def __len__(self) -> int:
        return len(self.entries)

    def _check_separation(self) -> None:
        if len(self.entries) < 2:
            return
        dist, _ = self._tree.query(self.entries * self._scale, k=2)
        nearest = dist[:, 1].min()
        if nearest <= self.match_threshold:
            raise ValueError(
                "prototypes closer than the match threshold make symbol "
                f"assignment ambiguous (min separation {nearest:.4g})")

    def match(self, descriptors: np.ndarray) -> np.ndarray:
        """Vectorized symbol assignment; -1 where nothing is within range."""
        descriptors = np.asarray(descriptors, dtype=float)
        if descriptors.size == 0:
            return np.empty(0, dtype=np.int64)
        if descriptors.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"descriptor dim {descriptors.shape[-1]} != {self.dim}")
        dist, idx = self._tree.query(descriptors * self._scale)
        idx = np.atleast_1d(idx).astype(np.int64)
        out = np.where(np.atleast_1d(dist) <= self.match_threshold, idx, -1)
        return out


def symbol_of(descriptor: Sequence[float],
              dictionary: FeatureDictionary) -> int | None:
    """Symbol of the unique prototype within the match threshold, if any."""
    arr = np.asarray(descriptor, dtype=float)
    if arr.shape != (dictionary.dim,):
        raise DimensionMismatchError(
            f"descriptor dim {arr.shape} != ({dictionary.dim},)")
    got = int(dictionary.match(arr[None, :])[0])
    return None if got < 0 else got


def detect_primitive(feature: PrimitiveFeature, percept: Percept,
                     dictionary: FeatureDictionary) -> set[tuple[float, float]]:
    """Locations of all interest points matching the feature's symbol."""
    if not percept.points:
        return set()
    symbols = dictionary.match(percept.descriptor_array())
    return {(p.x, p.y) for p, s in zip(percept.points, symbols)
            if s == feature.symbol}


def generate_candidates(percepts: Iterable[Percept],
                        dictionary: FeatureDictionary) -> set[PrimitiveFeature]:
    """Deduplicated symbols of every interest point of the given percepts."""
    out: set[PrimitiveFeature] = set()
    for percept in percepts:
        if not percept.points:
            continue
        for s in dictionary.match(percept.descriptor_array()):
            if s >= 0:
                out.add(PrimitiveFeature(int(s)))
    return out


class PerceptIndex:
    """Precomputed symbol assignment for a set of percepts.

    Matching every point of every percept once up front turns the
    presence test for a primitive feature into a set lookup.
    """

    def __init__(self, percepts: Iterable[Percept],
                 dictionary: FeatureDictionary):
        self.dictionary = dictionary
        self._symbols: dict[Hashable, frozenset[int]] = {}
        self._locations: dict[Hashable, dict[int, np.ndarray]] = {}
        self.add_percepts(percepts)

    def add_percepts(self, percepts: Iterable[Percept]) -> None:
        pending = [p for p in percepts if p.id not in self._symbols]
        if not pending:
            return
        blocks = [p.descriptor_array() for p in pending]
        counts = [b.shape[0] for b in blocks]
        stacked = (np.concatenate([b for b in blocks if b.size], axis=0)
                   if any(counts) else np.empty((0, self.dictionary.dim)))
        matched = self.dictionary.match(stacked)
        offset = 0
        for percept, count in zip(pending, counts):
            symbols = matched[offset:offset + count]
            offset += count
            locs: dict[int, list] = {}
            for point, s in zip(percept.points, symbols):
                if s >= 0:
                    locs.setdefault(int(s), []).append((point.x, point.y))
            self._symbols[percept.id] = frozenset(locs)
            self._locations[percept.id] = {
                s: np.array(v, dtype=float) for s, v in locs.items()}

    def __contains__(self, percept_id) -> bool:
        return percept_id in self._symbols

    def symbols(self, percept_id) -> frozenset[int]:
        return self._symbols[percept_id]

    def locations(self, percept_id, symbol: int) -> np.ndarray:
        return self._locations[percept_id].get(symbol,
                                               np.empty((0, 2), dtype=float))


# ---------------------------------------------------------------------------
# text serialization
#
# Percept databases use a line-oriented format, one record per percept:
#   percepts 1 <dim>
#   percept <id> <width> <height> <npoints>
#   p <x> <y> <c1> ... <cdim>        (npoints lines)
# Dictionaries:
#   dictionary 1 <dim> <match_threshold> <euclidean|diagonal>
#   w <w1> ... <wdim>                (diagonal metric only)
#   entry <c1> ... <cdim>            (one line per prototype)
# All numbers are written with repr-precision decimal text.

def _fmt(x: float) -> str:
    return repr(float(x))


def save_percepts(path, percepts: Iterable[Percept], dim: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"percepts 1 {dim}\n")
        for p in percepts:
            fh.write(f"percept {p.id} {_fmt(p.width)} {_fmt(p.height)} "
                     f"{len(p.points)}\n")
            for pt in p.points:
                coords = " ".join(_fmt(c) for c in pt.descriptor)
                fh.write(f"p {_fmt(pt.x)} {_fmt(pt.y)} {coords}\n")


def _parse_id(token: str):
    try:
        return int(token)
    except ValueError:
        return token


def load_percepts(path) -> list[Percept]:
    out: list[Percept] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != "percepts" or header[1] != "1":
            raise ValueError(f"not a percept database: {path}")
        dim = int(header[2])
        for line in fh:
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0] != "percept":
                raise ValueError(f"malformed percept record: {line!r}")
            pid = _parse_id(tokens[1])
            width, height = float(tokens[2]), float(tokens[3])
            n = int(tokens[4])
            points = []
            for _ in range(n):
                parts = fh.readline().split()
                if parts[0] != "p" or len(parts) != 3 + dim:
                    raise ValueError("malformed point record")
                points.append(InterestPoint(
                    float(parts[1]), float(parts[2]),
                    tuple(float(c) for c in parts[3:])))
            out.append(Percept(pid, width, height, tuple(points)))
    return out


def save_dictionary(path, dictionary: FeatureDictionary) -> None:
    metric = "euclidean" if dictionary.weights is None else "diagonal"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dictionary 1 {dictionary.dim} "
                 f"{_fmt(dictionary.match_threshold)} {metric}\n")
        if dictionary.weights is not None:
            fh.write("w " + " ".join(_fmt(w) for w in dictionary.weights)
                     + "\n")
        for entry in dictionary.entries:
            fh.write("entry " + " ".join(_fmt(c) for c in entry) + "\n")


def load_dictionary(path) -> FeatureDictionary:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[0] != "dictionary" or header[1] != "1":
            raise ValueError(f"not a dictionary file: {path}")
        dim = int(header[2])
        threshold = float(header[3])
        metric = header[4]
        weights = None
        entries = []
        for line in fh:
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0] == "w":
                weights = np.array([float(t) for t in tokens[1:]])
            elif tokens[0] == "entry":
                entries.append([float(t) for t in tokens[1:]])
            else:
                raise ValueError(f"malformed dictionary line: {line!r}")
    arr = np.array(entries, dtype=float).reshape(len(entries), dim)
    if metric == "euclidean":
        weights = None
    return FeatureDictionary(arr, threshold, weights)


def make_dictionary(n_symbols: int, dim: int = 8,
                    match_threshold: float = 0.5,
                    separation_factor: float = 4.0,
                    rng: np.random.Generator | None = None,
                    box: float = 10.0) -> FeatureDictionary:
    """Seeded dictionary with enforced pairwise prototype separation."""
    rng = np.random.default_rng(0) if rng is None else rng
    sep = separation_factor * match_threshold
    kept: list[np.ndarray] = []
    attempts = 0
    while len(kept) < n_symbols:
        attempts += 1
        if attempts > 1000 * n_symbols:
            raise RuntimeError(
                "could not place separated prototypes; enlarge the box or "
                "lower the separation")
        cand = rng.uniform(0.0, box, size=dim)
        if all(np.linalg.norm(cand - k) > sep for k in kept):
            kept.append(cand)
    return FeatureDictionary(np.array(kept), match_threshold)
