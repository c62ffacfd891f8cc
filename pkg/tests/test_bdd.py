import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlvc.bdd import FALSE, TRUE, BddManager


def truth_table(mgr, f, variables):
    rows = []
    for bits in itertools.product([False, True], repeat=len(variables)):
        env = dict(zip(variables, bits))
        rows.append(mgr.evaluate(f, env.__getitem__))
    return tuple(rows)


def random_function(mgr, variables, rng):
    """Random boolean combination built from variable functions."""
    f = mgr.var_fn(variables[int(rng.integers(len(variables)))])
    for _ in range(int(rng.integers(1, 8))):
        g = mgr.var_fn(variables[int(rng.integers(len(variables)))])
        op = int(rng.integers(4))
        if op == 0:
            f = mgr.apply_and(f, g)
        elif op == 1:
            f = mgr.apply_or(f, g)
        elif op == 2:
            f = mgr.apply_diff(f, g)
        else:
            f = mgr.apply_or(mgr.apply_not(f), g)
    return f


class TestBasics:
    def test_terminals(self):
        mgr = BddManager()
        assert mgr.evaluate(TRUE, lambda v: True)
        assert not mgr.evaluate(FALSE, lambda v: True)

    def test_var_function(self):
        mgr = BddManager(["x"])
        x = mgr.var_fn("x")
        assert mgr.evaluate(x, {"x": True}.__getitem__)
        assert not mgr.evaluate(x, {"x": False}.__getitem__)

    def test_hash_consing_canonicity(self):
        mgr = BddManager(["x", "y"])
        a = mgr.apply_and(mgr.var_fn("x"), mgr.var_fn("y"))
        b = mgr.apply_and(mgr.var_fn("y"), mgr.var_fn("x"))
        assert a == b  # same function, same node

    def test_reduction_no_redundant_node(self):
        mgr = BddManager(["x"])
        x = mgr.var_fn("x")
        assert mgr.apply_or(x, mgr.apply_not(x)) == TRUE
        assert mgr.apply_and(x, mgr.apply_not(x)) == FALSE

    def test_ite_matches_truth_tables(self):
        rng = np.random.default_rng(0)
        variables = ["a", "b", "c", "d"]
        for _ in range(30):
            mgr = BddManager(variables)
            f = random_function(mgr, variables, rng)
            g = random_function(mgr, variables, rng)
            h = random_function(mgr, variables, rng)
            got = truth_table(mgr, mgr.ite(f, g, h), variables)
            ft = truth_table(mgr, f, variables)
            gt = truth_table(mgr, g, variables)
            ht = truth_table(mgr, h, variables)
            expect = tuple(gv if fv else hv for fv, gv, hv in zip(ft, gt, ht))
            assert got == expect

    def test_restrict(self):
        mgr = BddManager(["x", "y"])
        f = mgr.apply_or(mgr.var_fn("x"), mgr.var_fn("y"))
        f_x1 = mgr.restrict(f, "x", True)
        assert f_x1 == TRUE
        f_x0 = mgr.restrict(f, "x", False)
        assert f_x0 == mgr.var_fn("y")

    def test_support(self):
        mgr = BddManager(["x", "y", "z"])
        f = mgr.apply_and(mgr.var_fn("x"), mgr.var_fn("z"))
        assert mgr.support(f) == {"x", "z"}

    def test_sat_fraction(self):
        mgr = BddManager(["x", "y"])
        x, y = mgr.var_fn("x"), mgr.var_fn("y")
        assert mgr.sat_fraction(TRUE) == 1.0
        assert mgr.sat_fraction(FALSE) == 0.0
        assert mgr.sat_fraction(x) == 0.5
        assert mgr.sat_fraction(mgr.apply_and(x, y)) == 0.25
        assert mgr.sat_fraction(mgr.apply_or(x, y)) == 0.75


class TestTransfer:
    def test_preserves_function_across_orders(self):
        rng = np.random.default_rng(1)
        variables = ["a", "b", "c", "d"]
        for _ in range(20):
            mgr = BddManager(variables)
            f = random_function(mgr, variables, rng)
            new_order = list(variables)
            rng.shuffle(new_order)
            target = BddManager(new_order)
            (g,) = mgr.transfer([f], target)
            assert truth_table(mgr, f, variables) == \
                truth_table(target, g, variables)

    def test_shared_structure_dedupes(self):
        mgr = BddManager(["a", "b"])
        f = mgr.apply_and(mgr.var_fn("a"), mgr.var_fn("b"))
        target = BddManager(["a", "b"])
        r1, r2 = mgr.transfer([f, f], target)
        assert r1 == r2


class TestSifting:
    def test_known_better_order_shrinks(self):
        # (a1 & b1) | (a2 & b2): interleaved order is linear, the
        # grouped-by-pair-position order is exponential-ish.
        bad = ["a1", "a2", "b1", "b2"]
        mgr = BddManager(bad)
        f = mgr.apply_or(
            mgr.apply_and(mgr.var_fn("a1"), mgr.var_fn("b1")),
            mgr.apply_and(mgr.var_fn("a2"), mgr.var_fn("b2")))
        before_tt = truth_table(mgr, f, bad)
        before = mgr.count_nodes([f])
        mgr.sift([f])
        assert mgr.count_nodes([f]) <= before
        assert truth_table(mgr, f, bad) == before_tt
        # optimal interleaved order needs 4 internal nodes
        assert mgr.count_nodes([f]) == 4

    def test_single_variable_order_unchanged(self):
        mgr = BddManager(["x"])
        f = mgr.var_fn("x")
        mgr.sift([f])
        assert mgr.order == ("x",)

    def test_vacuous_variable_dropped(self):
        mgr = BddManager(["x", "y"])
        x = mgr.var_fn("x")
        f = mgr.apply_or(mgr.apply_and(x, mgr.var_fn("y")),
                         mgr.apply_and(x, mgr.apply_not(mgr.var_fn("y"))))
        assert f == x  # y already reduced away
        mgr.sift([f])
        assert "y" not in mgr.order

    @given(seed=st.integers(0, 2_000))
    @settings(max_examples=30, deadline=None)
    def test_sift_preserves_functions_and_never_grows(self, seed):
        rng = np.random.default_rng(seed)
        variables = ["a", "b", "c", "d", "e"]
        mgr = BddManager(variables)
        roots = [random_function(mgr, variables, rng) for _ in range(3)]
        tables = [truth_table(mgr, r, variables) for r in roots]
        fresh = BddManager(variables)
        moved = mgr.transfer(roots, fresh)
        before = fresh.count_nodes(moved)
        fresh.sift(moved)
        assert fresh.count_nodes(moved) <= before
        for r, table in zip(moved, tables):
            assert truth_table(fresh, r, variables) == table

    def test_sift_keeps_canonicity(self):
        rng = np.random.default_rng(7)
        variables = ["a", "b", "c", "d"]
        mgr = BddManager(variables)
        roots = [random_function(mgr, variables, rng) for _ in range(4)]
        fresh = BddManager(variables)
        moved = fresh_roots = mgr.transfer(roots, fresh)
        fresh.sift(moved)
        # rebuilding any root's function from scratch must hit the same node
        for r in fresh_roots:
            table = truth_table(fresh, r, variables)
            rebuilt = FALSE
            for bits in itertools.product([False, True],
                                          repeat=len(variables)):
                if not table[
                        sum(b << (len(variables) - 1 - i)
                            for i, b in enumerate(bits))]:
                    continue
                term = TRUE
                for v, bit in zip(variables, bits):
                    lit = fresh.var_fn(v)
                    if not bit:
                        lit = fresh.apply_not(lit)
                    term = fresh.apply_and(term, lit)
                rebuilt = fresh.apply_or(rebuilt, term)
            assert rebuilt == r
