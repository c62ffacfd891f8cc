"""Reduced ordered binary decision diagrams.

A hash-consed node store shared by all the functions of one classifier.
Nodes are canonical under the manager's variable order, so function
equality is pointer equality. Reordering uses in-place adjacent-level
swaps (only the two swapped levels are touched), driven by a greedy
sifting pass that moves each variable to its best position.

Managers are append-only while functions are being built and consumed;
``sift`` mutates the store in place and must only be called on a manager
whose nodes are reachable solely from the roots handed to it (the
``transfer`` + sift combination used by classifier reordering guarantees
this).
"""

from __future__ import annotations

from typing import Callable, Hashable, Iterable, Sequence

FALSE = 0
TRUE = 1


class BddManager:
    def __init__(self, order: Sequence[Hashable] = ()):
        # node 0 is the false terminal, node 1 the true terminal
        self._var: list = [None, None]
        self._low: list[int] = [0, 1]
        self._high: list[int] = [0, 1]
        self._ref: list[int] = [0, 0]
        self._unique: dict[Hashable, dict[tuple[int, int], int]] = {}
        self._order: list[Hashable] = []
        self._level: dict[Hashable, int] = {}
        self._live = 0
        for v in order:
            self.ensure_var(v)

    # -- variables ----------------------------------------------------

    @property
    def order(self) -> tuple:
        return tuple(self._order)

    def ensure_var(self, v) -> None:
        """Declare a variable, appending it to the order if new."""
        if v not in self._level:
            self._level[v] = len(self._order)
            self._order.append(v)
            self._unique.setdefault(v, {})

    def var_fn(self, v) -> int:
        """The function that is true exactly when variable v is true."""
        self.ensure_var(v)
        return self._mk(v, FALSE, TRUE)

    # -- node construction --------------------------------------------

    def _mk(self, v, low: int, high: int) -> int:
        if low == high:
            return low
        table = self._unique[v]
        node = table.get((low, high))
        if node is not None:
            return node
        node = len(self._var)
        self._var.append(v)
        self._low.append(low)
        self._high.append(high)
        self._ref.append(0)
        if low > 1:
            self._ref[low] += 1
        if high > 1:
            self._ref[high] += 1
        table[(low, high)] = node
        self._live += 1
        return node

    # -- boolean operations --------------------------------------------

    def ite(self, f: int, g: int, h: int) -> int:
        """If-then-else: f ? g : h."""
        return self._ite(f, g, h, {})

    def _ite(self, f: int, g: int, h: int, memo: dict) -> int:
        if f == TRUE:
            return g
        if f == FALSE:
            return h
        if g == h:
            return g
        if g == TRUE and h == FALSE:
            return f
        key = (f, g, h)
        hit = memo.get(key)
        if hit is not None:
            return hit
        level = min(self._level[self._var[x]]
                    for x in (f, g, h) if x > 1)
        v = self._order[level]
        f0, f1 = self._cofactor(f, v)
        g0, g1 = self._cofactor(g, v)
        h0, h1 = self._cofactor(h, v)
        r0 = self._ite(f0, g0, h0, memo)
        r1 = self._ite(f1, g1, h1, memo)
        result = r0 if r0 == r1 else self._mk(v, r0, r1)
        memo[key] = result
        return result

    def _cofactor(self, f: int, v) -> tuple[int, int]:
        if f > 1 and self._var[f] == v:
            return self._low[f], self._high[f]
        return f, f

    def apply_and(self, f: int, g: int) -> int:
        return self.ite(f, g, FALSE)

    def apply_or(self, f: int, g: int) -> int:
        return self.ite(f, TRUE, g)

    def apply_not(self, f: int) -> int:
        return self.ite(f, FALSE, TRUE)

    def apply_diff(self, f: int, g: int) -> int:
        """f and not g."""
        return self.ite(g, FALSE, f)

    def restrict(self, f: int, v, value: bool) -> int:
        """Cofactor of f with variable v fixed to value."""
        memo: dict[int, int] = {}

        def walk(x: int) -> int:
            if x <= 1:
                return x
            hit = memo.get(x)
            if hit is not None:
                return hit
            if self._var[x] == v:
                r = walk(self._high[x] if value else self._low[x])
            else:
                r = self._mk(self._var[x], walk(self._low[x]),
                             walk(self._high[x]))
            memo[x] = r
            return r

        return walk(f)

    # -- inspection ----------------------------------------------------

    def evaluate(self, f: int, lookup: Callable[[Hashable], bool]) -> bool:
        """Evaluate under a variable assignment given as a callable."""
        while f > 1:
            f = self._high[f] if lookup(self._var[f]) else self._low[f]
        return f == TRUE

    def support(self, f: int) -> set:
        seen: set[int] = set()
        out: set = set()
        stack = [f]
        while stack:
            x = stack.pop()
            if x <= 1 or x in seen:
                continue
            seen.add(x)
            out.add(self._var[x])
            stack.append(self._low[x])
            stack.append(self._high[x])
        return out

    def reachable(self, roots: Iterable[int]) -> set[int]:
        seen: set[int] = set()
        stack = [r for r in roots if r > 1]
        while stack:
            x = stack.pop()
            if x in seen:
                continue
            seen.add(x)
            if self._low[x] > 1:
                stack.append(self._low[x])
            if self._high[x] > 1:
                stack.append(self._high[x])
        return seen

    def count_nodes(self, roots: Iterable[int]) -> int:
        """Internal (non-terminal) nodes reachable from the roots."""
        return len(self.reachable(roots))

    def sat_fraction(self, f: int) -> float:
        """Fraction of the full assignment space on which f is true.

        Independent of how many variables the manager knows, because a
        variable skipped on a path contributes the same factor to both
        branches. Values are dyadic rationals and exact in doubles for
        the depths seen here.
        """
        memo: dict[int, float] = {FALSE: 0.0, TRUE: 1.0}

        def walk(x: int) -> float:
            hit = memo.get(x)
            if hit is not None:
                return hit
            r = 0.5 * (walk(self._low[x]) + walk(self._high[x]))
            memo[x] = r
            return r

        return walk(f)

    def node_record(self, f: int) -> tuple:
        return (self._var[f], self._low[f], self._high[f])

    def iter_nodes(self, roots: Iterable[int]):
        """Deterministic (id-ordered) walk of reachable internal nodes."""
        for node in sorted(self.reachable(roots)):
            yield node, self._var[node], self._low[node], self._high[node]

    # -- transfer -------------------------------------------------------

    def transfer(self, roots: Sequence[int],
                 target: "BddManager") -> list[int]:
        """Rebuild functions inside another manager (any variable order)."""
        memo: dict[int, int] = {FALSE: FALSE, TRUE: TRUE}

        def walk(x: int) -> int:
            hit = memo.get(x)
            if hit is not None:
                return hit
            lo = walk(self._low[x])
            hi = walk(self._high[x])
            r = target.ite(target.var_fn(self._var[x]), hi, lo)
            memo[x] = r
            return r

        return [walk(r) for r in roots]

    # -- reordering ------------------------------------------------------

    def _incref(self, x: int) -> None:
        if x > 1:
            self._ref[x] += 1

    def _decref(self, x: int) -> None:
        if x <= 1:
            return
        self._ref[x] -= 1
        if self._ref[x] == 0:
            del self._unique[self._var[x]][(self._low[x], self._high[x])]
            self._live -= 1
            self._decref(self._low[x])
            self._decref(self._high[x])

    def _swap_levels(self, i: int) -> None:
        """Exchange the variables at levels i and i+1 in place.

        Only nodes labeled with the upper variable that depend on the
        lower one are rewritten; their ids are preserved so references
        from above stay valid.
        """
        u = self._order[i]
        w = self._order[i + 1]
        uu = self._unique[u]
        uw = self._unique[w]
        var, low, high = self._var, self._low, self._high
        movers = [nid for (lo, hi), nid in uu.items()
                  if (lo > 1 and var[lo] == w) or (hi > 1 and var[hi] == w)]
        for nid in movers:
            del uu[(low[nid], high[nid])]
        for nid in movers:
            f0, f1 = low[nid], high[nid]
            if f0 > 1 and var[f0] == w:
                f00, f01 = low[f0], high[f0]
            else:
                f00 = f01 = f0
            if f1 > 1 and var[f1] == w:
                f10, f11 = low[f1], high[f1]
            else:
                f10 = f11 = f1
            a = self._mk(u, f00, f10)
            b = self._mk(u, f01, f11)
            self._incref(a)
            self._incref(b)
            self._decref(f0)
            self._decref(f1)
            var[nid] = w
            low[nid] = a
            high[nid] = b
            uw[(a, b)] = nid
        self._order[i], self._order[i + 1] = w, u
        self._level[u] = i + 1
        self._level[w] = i

    def sift(self, roots: Sequence[int]) -> None:
        """Greedy sifting: move each variable to its best position.

        Requires exclusive ownership: every node of the manager must be
        reachable from ``roots`` or is treated as garbage and purged.
        Variables with no live node are dropped from the order. The total
        live node count never increases.
        """
        live = self.reachable(roots)
        # purge garbage (e.g. operand temporaries) from the unique tables
        for v, table in self._unique.items():
            stale = [k for k, nid in table.items() if nid not in live]
            for k in stale:
                del table[k]
        # reference counts: parents plus one per root occurrence
        for x in live:
            self._ref[x] = 0
        for x in live:
            self._incref_if(self._low[x], live)
            self._incref_if(self._high[x], live)
        for r in roots:
            if r > 1:
                self._ref[r] += 1
        self._live = len(live)

        counts: dict[Hashable, int] = {}
        for x in live:
            counts[self._var[x]] = counts.get(self._var[x], 0) + 1
        self._order = [v for v in self._order if counts.get(v, 0) > 0]
        self._level = {v: i for i, v in enumerate(self._order)}
        for v in list(self._unique):
            if counts.get(v, 0) == 0:
                del self._unique[v]

        if len(self._order) < 2:
            return
        by_weight = sorted(self._order,
                           key=lambda v: (-counts[v], self._level[v]))
        top = len(self._order) - 1
        for v in by_weight:
            pos = self._level[v]
            best_count = self._live
            best_pos = pos
            # walk up to the top
            for p in range(pos, 0, -1):
                self._swap_levels(p - 1)
                if self._live < best_count:
                    best_count = self._live
                    best_pos = p - 1
            # walk down to the bottom
            for p in range(0, top):
                self._swap_levels(p)
                if self._live < best_count:
                    best_count = self._live
                    best_pos = p + 1
            # return to the best position seen
            for p in range(top, best_pos, -1):
                self._swap_levels(p - 1)

    def _incref_if(self, x: int, live: set[int]) -> None:
        if x > 1 and x in live:
            self._ref[x] += 1
