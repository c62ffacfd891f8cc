"""Percept-to-visual-class classifiers.

Two interchangeable backends partition percept space by testing feature
presence: a binary decision tree (splits only) and one BDD per class
(splits and merges, with variable reordering). Classifiers are immutable
snapshots; refine/merge return new versions. Detection is delegated to a
detector object exposing ``exhibits(feature_id, percept) -> bool`` so the
same classifier works with primitive and composite features alike.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .bdd import FALSE, TRUE, BddManager
from .mdp import Policy, QFunction, ValueFunction


class PartitionError(RuntimeError):
    """The class functions no longer partition the assignment space."""


class RefineError(ValueError):
    """Refining with a feature that is constant on the class."""


@dataclass(frozen=True)
class EquivalenceSpec:
    """Which closeness relations must all hold for two classes to merge."""

    threshold: float
    use_value: bool = True
    use_policy: bool = True
    use_state_action: bool = False

    def __post_init__(self):
        if not np.isfinite(self.threshold) or self.threshold < 0:
            raise ValueError("threshold must be finite and non-negative")
        if not (self.use_value or self.use_policy or self.use_state_action):
            raise ValueError("at least one relation must be enabled")


# ---------------------------------------------------------------------------
# decision-tree backend

@dataclass(frozen=True)
class _Leaf:
    class_id: int


@dataclass(frozen=True)
class _Split:
    feature: int
    present: "_Leaf | _Split"
    absent: "_Leaf | _Split"


class TreeClassifier:
    """Binary decision tree over feature-presence tests."""

    backend = "tree"

    def __init__(self, detector, root=None, next_class_id: int = 2):
        self.detector = detector
        self.root = _Leaf(1) if root is None else root
        self.next_class_id = next_class_id

    @property
    def class_ids(self) -> tuple[int, ...]:
        out: list[int] = []

        def walk(node):
            if isinstance(node, _Leaf):
                out.append(node.class_id)
            else:
                walk(node.present)
                walk(node.absent)

        walk(self.root)
        return tuple(out)

    @property
    def class_count(self) -> int:
        return len(self.class_ids)

    def classify(self, percept) -> int:
        node = self.root
        while isinstance(node, _Split):
            node = (node.present
                    if self.detector.exhibits(node.feature, percept)
                    else node.absent)
        return node.class_id

    def features_on_path(self, class_id: int) -> tuple[int, ...]:
        """Feature tests from the root down to the class leaf."""

        def walk(node, acc):
            if isinstance(node, _Leaf):
                return acc if node.class_id == class_id else None
            for child in (node.present, node.absent):
                found = walk(child, acc + (node.feature,))
                if found is not None:
                    return found
            return None

        found = walk(self.root, ())
        if found is None:
            raise KeyError(f"unknown class {class_id}")
        return found

    def refine(self, class_id: int, feature: int) -> "TreeClassifier":
        """Replace a leaf by a split on ``feature``.

        The present branch receives the lower of the two fresh class ids.
        """
        if feature in self.features_on_path(class_id):
            raise RefineError(
                f"feature {feature} already tested on the path to class "
                f"{class_id}")
        fresh = (self.next_class_id, self.next_class_id + 1)

        def walk(node):
            if isinstance(node, _Leaf):
                if node.class_id != class_id:
                    return node
                return _Split(feature, _Leaf(fresh[0]), _Leaf(fresh[1]))
            return _Split(node.feature, walk(node.present), walk(node.absent))

        return TreeClassifier(self.detector, walk(self.root),
                              self.next_class_id + 2)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"tree 1 {self.next_class_id}\n")

            def walk(node):
                if isinstance(node, _Leaf):
                    fh.write(f"leaf {node.class_id}\n")
                else:
                    fh.write(f"node {node.feature}\n")
                    walk(node.present)
                    walk(node.absent)

            walk(self.root)

    @classmethod
    def load(cls, path, detector) -> "TreeClassifier":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if header[:2] != ["tree", "1"]:
                raise ValueError(f"not a tree classifier file: {path}")
            next_id = int(header[2])
            lines = [ln.split() for ln in fh if ln.strip()]
        pos = 0

        def parse():
            nonlocal pos
            kind = lines[pos]
            pos += 1
            if kind[0] == "leaf":
                return _Leaf(int(kind[1]))
            if kind[0] != "node":
                raise ValueError(f"malformed tree record: {kind}")
            present = parse()
            absent = parse()
            return _Split(int(kind[1]), present, absent)

        return cls(detector, parse(), next_id)


# ---------------------------------------------------------------------------
# BDD backend

class BddClassifier:
    """One BDD per visual class over feature-id variables.

    The class functions always partition the feature-assignment space:
    their pairwise conjunctions are false and their disjunction is true.
    All classes of one classifier (and of its refine/merge descendants
    until the next reordering) share a hash-consed node store.
    """

    backend = "bdd"

    def __init__(self, detector, manager: BddManager | None = None,
                 classes: Sequence[tuple[int, int]] | None = None,
                 next_class_id: int = 2):
        self.detector = detector
        self.manager = BddManager() if manager is None else manager
        self.classes = (((1, TRUE),) if classes is None
                        else tuple(classes))
        self.next_class_id = next_class_id

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(cid for cid, _ in self.classes)

    @property
    def class_count(self) -> int:
        return len(self.classes)

    def root_of(self, class_id: int) -> int:
        for cid, root in self.classes:
            if cid == class_id:
                return root
        raise KeyError(f"unknown class {class_id}")

    def classify(self, percept) -> int:
        cache: dict = {}

        def lookup(feature):
            hit = cache.get(feature)
            if hit is None:
                hit = cache[feature] = bool(
                    self.detector.exhibits(feature, percept))
            return hit

        matches = [cid for cid, root in self.classes
                   if self.manager.evaluate(root, lookup)]
        if len(matches) != 1:
            raise PartitionError(
                f"{len(matches)} classes matched one percept; the class "
                "functions no longer partition the space")
        return matches[0]

    def refine(self, class_id: int, feature: int) -> "BddClassifier":
        mgr = self.manager
        old = self.root_of(class_id)
        lit = mgr.var_fn(feature)
        with_f = mgr.apply_and(old, lit)
        without_f = mgr.apply_diff(old, lit)
        if with_f == FALSE or without_f == FALSE:
            raise RefineError(
                f"feature {feature} is constant on class {class_id}")
        fresh = (self.next_class_id, self.next_class_id + 1)
        new_classes = []
        for cid, root in self.classes:
            if cid == class_id:
                new_classes.append((fresh[0], with_f))
                new_classes.append((fresh[1], without_f))
            else:
                new_classes.append((cid, root))
        return BddClassifier(self.detector, mgr, new_classes,
                             self.next_class_id + 2)

    def merge(self, class_a: int, class_b: int) -> "BddClassifier":
        if class_a == class_b:
            raise ValueError("cannot merge a class with itself")
        union = self.manager.apply_or(self.root_of(class_a),
                                      self.root_of(class_b))
        fresh = self.next_class_id
        new_classes = [(cid, root) for cid, root in self.classes
                       if cid not in (class_a, class_b)]
        new_classes.append((fresh, union))
        return BddClassifier(self.detector, self.manager, new_classes,
                             fresh + 1)

    def check_partition(self) -> None:
        """Exact partition check via model counting.

        The union of all classes must be the constant-true function and
        the satisfying fractions must add up to 1, which together force
        pairwise disjointness.
        """
        mgr = self.manager
        union = FALSE
        total = 0.0
        for _, root in self.classes:
            union = mgr.apply_or(union, root)
            total += mgr.sat_fraction(root)
        if union != TRUE or total != 1.0:
            raise PartitionError(
                f"classes cover fraction {total} of the assignment space")

    def node_count(self) -> int:
        return self.manager.count_nodes([r for _, r in self.classes])

    def save(self, path) -> None:
        roots = [root for _, root in self.classes]
        mgr = self.manager
        renumber: dict[int, int] = {FALSE: 0, TRUE: 1}
        records: list[tuple[int, int, int, int]] = []

        def walk(node: int) -> int:
            hit = renumber.get(node)
            if hit is not None:
                return hit
            var, low, high = mgr.node_record(node)
            lo = walk(low)
            hi = walk(high)
            new_id = len(renumber)
            renumber[node] = new_id
            records.append((new_id, var, lo, hi))
            return new_id

        new_roots = [walk(r) for r in roots]
        used_vars = set()
        for _, var, _, _ in records:
            used_vars.add(var)
        order = [v for v in mgr.order if v in used_vars]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"bddclassifier 1 {self.next_class_id}\n")
            fh.write("order " + " ".join(str(v) for v in order) + "\n")
            for rec in records:
                fh.write("node %d %d %d %d\n" % rec)
            for (cid, _), root in zip(self.classes, new_roots):
                fh.write(f"class {cid} {root}\n")

    @classmethod
    def load(cls, path, detector) -> "BddClassifier":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if header[:2] != ["bddclassifier", "1"]:
                raise ValueError(f"not a BDD classifier file: {path}")
            next_id = int(header[2])
            order_line = fh.readline().split()
            if order_line[:1] != ["order"]:
                raise ValueError("missing variable order")
            order = [int(v) for v in order_line[1:]]
            mgr = BddManager(order)
            node_map: dict[int, int] = {0: FALSE, 1: TRUE}
            classes: list[tuple[int, int]] = []
            for line in fh:
                tokens = line.split()
                if not tokens:
                    continue
                if tokens[0] == "node":
                    nid, var, lo, hi = (int(t) for t in tokens[1:])
                    node_map[nid] = mgr.ite(mgr.var_fn(var),
                                            node_map[hi], node_map[lo])
                elif tokens[0] == "class":
                    classes.append((int(tokens[1]), node_map[int(tokens[2])]))
                else:
                    raise ValueError(f"malformed classifier line: {line!r}")
        return cls(detector, mgr, classes, next_id)


def reorder_variables(classifier: BddClassifier) -> BddClassifier:
    """Rebuild the class functions in a fresh store and sift it.

    Class functions are unchanged as Boolean functions, the total node
    count cannot increase, and variables outside every support set are
    dropped from the order.
    """
    mgr = classifier.manager
    roots = [root for _, root in classifier.classes]
    used = set()
    for root in roots:
        used |= mgr.support(root)
    new_order = [v for v in mgr.order if v in used]
    fresh = BddManager(new_order)
    moved = mgr.transfer(roots, fresh)
    fresh.sift(moved)
    classes = tuple((cid, new_root) for (cid, _), new_root
                    in zip(classifier.classes, moved))
    return BddClassifier(classifier.detector, fresh, classes,
                         classifier.next_class_id)


# ---------------------------------------------------------------------------
# equivalence relations used for compaction

def find_equivalent_pairs(class_ids: Iterable[int],
                          v_star: ValueFunction | Mapping,
                          q_star: QFunction,
                          policy: Policy | Mapping,
                          spec: EquivalenceSpec,
                          eligible: Iterable[int] | None = None
                          ) -> list[tuple[int, int]]:
    """Unordered class pairs satisfying every enabled closeness relation.

    ``eligible`` restricts matching; classes with unobserved rows in the
    estimated model must be excluded by the caller since their values are
    artifacts of the unobserved-pair convention.
    """
    ids = [c for c in class_ids
           if eligible is None or c in set(eligible)]
    eps = spec.threshold

    def v_of(c):
        return v_star[c]

    def q_of(c, a):
        return q_star[(c, a)]

    def pi_of(c):
        return policy[c]

    out: list[tuple[int, int]] = []
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if spec.use_value and abs(v_of(a) - v_of(b)) > eps:
                continue
            if spec.use_policy:
                if abs(v_of(a) - q_of(b, pi_of(a))) > eps:
                    continue
                if abs(v_of(b) - q_of(a, pi_of(b))) > eps:
                    continue
            if spec.use_state_action:
                if any(abs(q_of(a, act) - q_of(b, act)) > eps
                       for act in q_star.actions):
                    continue
            out.append((a, b) if a <= b else (b, a))
    return out
