import math
from fractions import Fraction

import pytest
import sympy

from wick_utils.combinatorics import (
    Diagram,
    Multiset,
    NodeSet,
    bell_number,
    connected_components,
    enumerate_diagrams,
    enumerate_set_partitions,
    multiplicity_coefficient,
    stirling2,
    touchard,
)
from wick_utils.errors import SlotCapError


class TestMultiset:
    """Test the canonical multiset type."""

    def test_canonical_equality(self):
        """Order of construction does not matter."""
        assert Multiset.parse("x,x,y") == Multiset(["y", "x", "x"])
        assert hash(Multiset.parse("x,x,y")) == hash(Multiset(["y", "x", "x"]))
        assert Multiset.parse("") == Multiset()

    def test_integer_symbols(self):
        """Integer tokens parse as ints and sort before strings."""
        ms = Multiset.parse("b,1,a,0")
        assert ms.elements() == (0, 1, "a", "b")

    def test_counts_and_factorial(self):
        ms = Multiset.parse("x,x,x,y,y")
        assert ms.count("x") == 3
        assert ms.count("z") == 0
        assert len(ms) == 5
        assert ms.factorial() == math.factorial(3) * math.factorial(2)

    def test_difference_requires_submultiset(self):
        """Subtracting a non-submultiset raises."""
        with pytest.raises(ValueError):
            Multiset.parse("x") - Multiset.parse("x,x")

    def test_submultisets(self):
        """Distinct submultisets carry their multiplicity coefficients."""
        ms = Multiset.parse("x,x,y")
        subs = dict(ms.submultisets())
        assert len(subs) == 6
        assert sum(subs.values()) == 2 ** len(ms)
        assert subs[Multiset.parse("x,y")] == 2


class TestMultiplicityCoefficient:
    """Test C(I, J)."""

    def test_injections(self):
        assert multiplicity_coefficient(Multiset.parse("x,x,y"), Multiset.parse("x,y")) == 2

    def test_empty_subset(self):
        assert multiplicity_coefficient(Multiset.parse("x,y,z"), Multiset()) == 1

    def test_binomial_recovered(self):
        """A single repeated symbol gives ordinary binomial coefficients."""
        for n in range(7):
            for k in range(n + 1):
                I = Multiset(["x"] * n)
                J = Multiset(["x"] * k)
                assert multiplicity_coefficient(I, J) == math.comb(n, k)

    def test_not_contained(self):
        assert multiplicity_coefficient(Multiset.parse("x"), Multiset.parse("y")) == 0


class TestSetPartitions:
    """Test set partition enumeration."""

    def test_small_counts(self):
        assert len(list(enumerate_set_partitions("ab"))) == 2
        assert len(list(enumerate_set_partitions(range(4)))) == 15

    def test_empty_ground(self):
        """The empty set has exactly one (empty) partition."""
        partitions = list(enumerate_set_partitions([]))
        assert len(partitions) == 1
        assert partitions[0].blocks == ()

    def test_partitions_are_distinct_and_valid(self):
        ground = list(range(5))
        partitions = list(enumerate_set_partitions(ground))
        assert len(partitions) == bell_number(5) == 52
        keys = {frozenset(frozenset(b) for b in p) for p in partitions}
        assert len(keys) == len(partitions)
        for p in partitions:
            p.validate(ground)

    def test_duplicate_elements(self):
        with pytest.raises(ValueError):
            list(enumerate_set_partitions(["a", "a"]))

    def test_slot_cap(self):
        """Enumeration above the cap raises before yielding anything."""
        with pytest.raises(SlotCapError) as info:
            next(enumerate_set_partitions(range(5), cap=4))
        assert info.value.cap == 4
        assert "4" in str(info.value)

    def test_slot_cap_from_environment(self, monkeypatch):
        monkeypatch.setenv("WICK_SLOT_CAP", "3")
        with pytest.raises(SlotCapError):
            list(enumerate_set_partitions(range(4)))
        assert len(list(enumerate_set_partitions(range(3)))) == 5


class TestStirlingTouchard:
    """Test Stirling numbers and Touchard polynomials."""

    def test_stirling_boundaries(self):
        assert stirling2(0, 0) == 1
        for m in range(1, 6):
            assert stirling2(m, 0) == 0
            assert stirling2(m, m) == 1
        assert stirling2(2, 3) == 0

    def test_stirling_values(self):
        assert [stirling2(4, h) for h in range(5)] == [0, 1, 7, 6, 1]

    def test_touchard_constant_term(self):
        """touchard(3, -lambda) = -lambda^3 + 3 lambda^2 - lambda."""
        for lam in (Fraction(1), Fraction(3, 2), Fraction(5)):
            assert touchard(3, -lam) == -(lam**3) + 3 * lam**2 - lam

    def test_bell_numbers(self):
        assert [bell_number(n) for n in range(7)] == [1, 1, 2, 5, 15, 52, 203]

    def test_against_sympy(self):
        for m in range(9):
            assert bell_number(m) == int(sympy.bell(m))
            for h in range(m + 1):
                assert stirling2(m, h) == int(sympy.functions.combinatorial.numbers.stirling(m, h))


class TestDiagrams:
    """Test diagram enumeration and its filters."""

    def test_two_rows_gaussian(self):
        """Two rows of two nodes have two total non-flat pairings."""
        diagrams = list(
            enumerate_diagrams(["x,x", "x,x"], total=True, non_flat=True, gaussian=True)
        )
        assert len(diagrams) == 2
        for d in diagrams:
            assert d.is_total()
            assert d.is_gaussian()
            assert d.is_non_flat()

    def test_three_rows_connected(self):
        count = sum(
            1
            for _ in enumerate_diagrams(
                ["x,x"] * 3, total=True, non_flat=True, gaussian=True, connected=True
            )
        )
        assert count == 8

    @pytest.mark.parametrize("m", [2, 3, 4, 5])
    def test_cycle_count(self, m):
        """Connected pairings of m rows of two nodes: 2^(m-1) (m-1)!."""
        count = sum(
            1
            for _ in enumerate_diagrams(
                ["x,x"] * m, total=True, non_flat=True, gaussian=True, connected=True
            )
        )
        assert count == 2 ** (m - 1) * math.factorial(m - 1)

    def test_gaussian_filter_matches_brute_force(self):
        """The pruned Gaussian enumeration agrees with filtering all diagrams."""
        rows = ["x,y", "x", "y,y"]
        fast = {(d.edges, d.residual) for d in enumerate_diagrams(rows, gaussian=True)}
        slow = {(d.edges, d.residual) for d in enumerate_diagrams(rows) if d.is_gaussian()}
        assert fast == slow

    def test_all_diagrams_count(self):
        """Without filters diagrams are set partitions of the slots plus one marker."""
        rows = ["x,x", "y", "x"]
        assert sum(1 for _ in enumerate_diagrams(rows)) == bell_number(5)

    def test_single_row_non_flat(self):
        """Edges inside one row are flat, so only the empty diagram survives."""
        diagrams = list(enumerate_diagrams(["x,x,x"], non_flat=True))
        assert len(diagrams) == 1
        assert diagrams[0].edges == ()
        assert list(enumerate_diagrams(["x,x"], non_flat=True, total=True)) == []

    def test_json_round_trip(self):
        d = next(enumerate_diagrams(["x,y", "x"], total=True, non_flat=True))
        restored = Diagram.from_json(d.to_json())
        assert restored == d

    def test_diagram_cap(self):
        with pytest.raises(SlotCapError):
            next(enumerate_diagrams(["x,x,x"] * 3, cap=8))


class TestConnectedComponents:
    """Test row connectivity of diagrams."""

    def test_residual_joins_rows(self):
        """The residual acts as one block."""
        nodes = NodeSet.from_rows(["x", "x", "x"])
        d = Diagram(nodes, (), ((0, 0), (1, 0), (2, 0)))
        assert len(connected_components(d)) == 1
        assert d.is_connected()

    def test_cross_edge(self):
        nodes = NodeSet.from_rows(["x", "x"])
        d = Diagram(nodes, (((0, 0), (1, 0)),), ())
        assert d.is_connected()

    def test_two_components(self):
        """Residual confined to the last two rows leaves them apart from the rest."""
        nodes = NodeSet.from_rows(["x,x,x", "x,x,x", "x,x,x", "x,x,x,x,x", "x"])
        edges = (
            ((0, 0), (1, 0)),
            ((0, 1), (2, 0)),
            ((0, 2), (1, 1), (2, 1)),
            ((1, 2), (2, 2)),
            ((3, 0), (3, 1)),
        )
        residual = ((3, 2), (3, 3), (3, 4), (4, 0))
        d = Diagram(nodes, edges, residual)
        d.total_partition().validate(nodes.slots)
        components = connected_components(d)
        assert components == [frozenset({0, 1, 2}), frozenset({3, 4})]
        assert not d.is_connected()
