"""Multisets, set partitions of labelled slots and partial diagrams.

All enumeration works on labelled occurrences: a multiset ``{x, x}`` has two
distinct slots, so partition sums count multiplicities the way moment and
cumulant identities need them.
"""
import math
import re
from collections import Counter
from collections.abc import Hashable, Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import Any, Optional, Union

from .config import check_slot_cap

Slot = tuple[int, int]

_INT_TOKEN = re.compile(r"-?\d+")


def symbol_key(symbol: Hashable) -> tuple:
    """Sort key giving a total order over mixed index symbols."""
    if isinstance(symbol, bool):
        return (3, repr(symbol))
    if isinstance(symbol, int):
        return (0, symbol)
    if isinstance(symbol, str):
        return (1, symbol)
    sort_key = getattr(symbol, "sort_key", None)
    if callable(sort_key):
        return (2, sort_key())
    return (3, repr(symbol))


def parse_symbol(token: str) -> Union[int, str]:
    """Parse one symbol token; integers become ``int``."""
    token = token.strip()
    if _INT_TOKEN.fullmatch(token):
        return int(token)
    if not token:
        raise ValueError("Empty index symbol")
    return token


class Multiset:
    """Finite multiset of hashable index symbols.

    Stored canonically as ``(symbol, multiplicity)`` pairs sorted by
    :func:`symbol_key`, so equal multisets compare and hash equal.
    """

    __slots__ = ("_items", "_size")

    def __init__(self, symbols: Iterable[Hashable] = ()):
        self._set_counts(Counter(symbols))

    def _set_counts(self, counts: Mapping[Hashable, int]) -> None:
        items = []
        for symbol, count in counts.items():
            if not isinstance(count, int) or count < 0:
                raise ValueError(f"Multiplicity of {symbol!r} must be a non-negative int")
            if count:
                items.append((symbol, count))
        items.sort(key=lambda item: symbol_key(item[0]))
        self._items: tuple[tuple[Hashable, int], ...] = tuple(items)
        self._size = sum(count for _, count in items)

    @classmethod
    def from_counts(cls, counts: Mapping[Hashable, int]) -> "Multiset":
        """Build from a symbol -> multiplicity mapping (zero entries dropped)."""
        ms = cls.__new__(cls)
        ms._set_counts(counts)
        return ms

    @classmethod
    def parse(cls, text: str) -> "Multiset":
        """Parse the canonical string form, e.g. ``"x,x,y"``; empty string is the empty multiset."""
        text = text.strip()
        if not text:
            return cls()
        return cls(parse_symbol(tok) for tok in text.split(","))

    @classmethod
    def from_multi_index(
        cls, alpha: Sequence[int], symbols: Optional[Sequence[Hashable]] = None
    ) -> "Multiset":
        """Multiset with ``alpha[i]`` copies of ``symbols[i]`` (default symbols ``0..d-1``)."""
        symbols = list(range(len(alpha))) if symbols is None else list(symbols)
        if len(symbols) != len(alpha):
            raise ValueError("Multi-index and symbol list differ in length")
        return cls.from_counts(dict(zip(symbols, alpha)))

    @property
    def items(self) -> tuple[tuple[Hashable, int], ...]:
        return self._items

    @property
    def total_size(self) -> int:
        return self._size

    def __len__(self) -> int:
        return self._size

    def __bool__(self) -> bool:
        return self._size > 0

    def __iter__(self) -> Iterator[Hashable]:
        for symbol, count in self._items:
            for _ in range(count):
                yield symbol

    def elements(self) -> tuple[Hashable, ...]:
        return tuple(self)

    def symbols(self) -> tuple[Hashable, ...]:
        return tuple(symbol for symbol, _ in self._items)

    def counts(self) -> dict[Hashable, int]:
        return dict(self._items)

    def count(self, symbol: Hashable) -> int:
        for s, c in self._items:
            if s == symbol:
                return c
        return 0

    def __contains__(self, symbol: object) -> bool:
        return any(s == symbol for s, _ in self._items)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Multiset):
            return NotImplemented
        return self._items == other._items

    def __hash__(self) -> int:
        return hash(self._items)

    def sort_key(self) -> tuple:
        return (self._size, tuple((symbol_key(s), c) for s, c in self._items))

    def __lt__(self, other: "Multiset") -> bool:
        return self.sort_key() < other.sort_key()

    def __add__(self, other: "Multiset") -> "Multiset":
        counts = Counter(self.counts())
        counts.update(other.counts())
        return Multiset.from_counts(counts)

    def __sub__(self, other: "Multiset") -> "Multiset":
        if not other.issubset(self):
            raise ValueError(f"{other} is not a submultiset of {self}")
        counts = self.counts()
        for symbol, count in other._items:
            counts[symbol] -= count
        return Multiset.from_counts(counts)

    def issubset(self, other: "Multiset") -> bool:
        return all(other.count(s) >= c for s, c in self._items)

    def submultisets(self, nonempty: bool = False) -> Iterator[tuple["Multiset", int]]:
        """Yield each distinct submultiset ``J`` with its multiplicity coefficient ``C(I, J)``."""
        symbols = self.symbols()
        ranges = [range(c + 1) for _, c in self._items]

        def rec(i: int, chosen: list[int]) -> Iterator[tuple[Multiset, int]]:
            if i == len(ranges):
                sub = Multiset.from_counts(dict(zip(symbols, chosen)))
                if nonempty and not sub:
                    return
                coef = 1
                for (_, total), k in zip(self._items, chosen):
                    coef *= math.comb(total, k)
                yield sub, coef
                return
            for k in ranges[i]:
                chosen.append(k)
                yield from rec(i + 1, chosen)
                chosen.pop()

        yield from rec(0, [])

    def factorial(self) -> int:
        """Multi-index factorial: product of the multiplicity factorials."""
        result = 1
        for _, count in self._items:
            result *= math.factorial(count)
        return result

    def to_string(self) -> str:
        return ",".join(str(s) for s in self)

    def __str__(self) -> str:
        return "{" + self.to_string() + "}"

    def __repr__(self) -> str:
        return f"Multiset({self.to_string()!r})"


def as_multiset(obj: Union[Multiset, str, Iterable[Hashable]]) -> Multiset:
    """Coerce a multiset, canonical string or iterable of symbols."""
    if isinstance(obj, Multiset):
        return obj
    if isinstance(obj, str):
        return Multiset.parse(obj)
    return Multiset(obj)


def multiplicity_coefficient(I: Multiset, J: Multiset) -> int:
    """Number of identity-preserving injections of ``J`` into ``I``.

    Equals the product of binomial coefficients ``C(I(k), J(k))``; zero when
    ``J`` is not contained in ``I``.
    """
    result = 1
    for symbol, count in J.items:
        result *= math.comb(I.count(symbol), count)
        if result == 0:
            return 0
    return result


# ---------------------------------------------------------------------------
# Set partitions


@dataclass(frozen=True)
class SetPartition:
    """Set partition stored as blocks in restricted-growth order."""

    blocks: tuple[tuple[Any, ...], ...]

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[tuple[Any, ...]]:
        return iter(self.blocks)

    def ground(self) -> frozenset:
        return frozenset(x for block in self.blocks for x in block)

    def validate(self, ground: Iterable[Any]) -> None:
        """Check blocks are nonempty, disjoint and cover ``ground``."""
        seen: set = set()
        for block in self.blocks:
            if not block:
                raise ValueError("Set partition contains an empty block")
            for x in block:
                if x in seen:
                    raise ValueError(f"Element {x!r} appears in two blocks")
                seen.add(x)
        expected = set(ground)
        if seen != expected:
            raise ValueError(
                f"Blocks cover {sorted(map(repr, seen))}, expected {sorted(map(repr, expected))}"
            )


def enumerate_set_partitions(
    ground: Sequence[Any], cap: Optional[int] = None
) -> Iterator[SetPartition]:
    """
    Yield every set partition of ``ground`` exactly once.

    Order follows restricted-growth strings over the sequence order of
    ``ground``: element ``i`` joins existing blocks in creation order before
    opening a new one.

    Parameters
    ----------
    ground : sequence
        Distinct labelled elements (slots, positions)
    cap : int, optional
        Size limit; defaults to :func:`wick_utils.config.get_slot_cap`

    Yields
    ------
    SetPartition
    """
    elements = tuple(ground)
    check_slot_cap(len(elements), cap, "ground set")
    if len(set(elements)) != len(elements):
        raise ValueError("Ground set elements must be distinct")

    n = len(elements)
    blocks: list[list[Any]] = []

    def rec(i: int) -> Iterator[SetPartition]:
        if i == n:
            yield SetPartition(tuple(tuple(b) for b in blocks))
            return
        x = elements[i]
        for block in blocks:
            block.append(x)
            yield from rec(i + 1)
            block.pop()
        blocks.append([x])
        yield from rec(i + 1)
        blocks.pop()

    yield from rec(0)


def stirling2(m: int, h: int) -> int:
    """Stirling number of the second kind: partitions of ``m`` labelled items into ``h`` blocks."""
    if m < 0 or h < 0:
        raise ValueError("stirling2 needs m, h >= 0")
    if h > m:
        return 0
    row = [1]  # S(0, 0)
    for i in range(1, m + 1):
        new = [0] * (i + 1)
        for k in range(1, i + 1):
            left = row[k] if k < len(row) else 0
            new[k] = k * left + row[k - 1]
        row = new
    return row[h]


def touchard(m: int, x: Any) -> Any:
    """Touchard polynomial ``T_m(x) = sum_h S(m, h) x^h`` evaluated at ``x``."""
    total = 0 * x
    power = 1
    for h in range(m + 1):
        total = total + stirling2(m, h) * power
        power = power * x
    return total


def bell_number(n: int) -> int:
    """Number of set partitions of ``n`` labelled items."""
    return touchard(n, 1)


# ---------------------------------------------------------------------------
# Diagrams


def slot_id(slot: Slot) -> str:
    return f"r{slot[0]}:{slot[1]}"


def parse_slot_id(text: str) -> Slot:
    match = re.fullmatch(r"r(\d+):(\d+)", text.strip())
    if match is None:
        raise ValueError(f"Invalid slot id {text!r}, expected 'r<row>:<pos>'")
    return int(match.group(1)), int(match.group(2))


@dataclass(frozen=True)
class NodeSet:
    """Rows of labelled slots; slot ``(row, pos)`` carries ``rows[row][pos]``."""

    rows: tuple[tuple[Hashable, ...], ...]

    @classmethod
    def from_rows(cls, rows: Sequence[Union[Multiset, str, Iterable[Hashable]]]) -> "NodeSet":
        return cls(tuple(as_multiset(row).elements() for row in rows))

    @property
    def slots(self) -> tuple[Slot, ...]:
        return tuple((r, p) for r, row in enumerate(self.rows) for p in range(len(row)))

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_slots(self) -> int:
        return sum(len(row) for row in self.rows)

    def symbol(self, slot: Slot) -> Hashable:
        return self.rows[slot[0]][slot[1]]

    def row_multiset(self, row: int) -> Multiset:
        return Multiset(self.rows[row])

    def multiset(self, slots: Iterable[Slot]) -> Multiset:
        return Multiset(self.symbol(s) for s in slots)


@dataclass(frozen=True)
class Diagram:
    """Partial diagram ``(pi, K)``: edge blocks over some slots plus the residual set."""

    nodes: NodeSet
    edges: tuple[tuple[Slot, ...], ...]
    residual: tuple[Slot, ...]

    def edge_partition(self) -> SetPartition:
        return SetPartition(self.edges)

    def total_partition(self) -> SetPartition:
        """Edges together with the residual as one extra block (when nonempty)."""
        if self.residual:
            return SetPartition(self.edges + (self.residual,))
        return SetPartition(self.edges)

    def is_total(self) -> bool:
        return not self.residual

    def is_non_flat(self) -> bool:
        return all(len({slot[0] for slot in block}) > 1 for block in self.edges)

    def is_gaussian(self) -> bool:
        return all(len(block) == 2 for block in self.edges)

    def connected_components(self) -> list[frozenset[int]]:
        return connected_components(self)

    def is_connected(self) -> bool:
        return len(connected_components(self)) == 1

    def residual_multiset(self) -> Multiset:
        return self.nodes.multiset(self.residual)

    def edge_multisets(self) -> list[Multiset]:
        return [self.nodes.multiset(block) for block in self.edges]

    def to_json(self) -> dict[str, Any]:
        return {
            "rows": [list(row) for row in self.nodes.rows],
            "edges": [[slot_id(s) for s in block] for block in self.edges],
            "residual": [slot_id(s) for s in self.residual],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Diagram":
        nodes = NodeSet(tuple(tuple(row) for row in data["rows"]))
        edges = tuple(tuple(parse_slot_id(s) for s in block) for block in data["edges"])
        residual = tuple(parse_slot_id(s) for s in data["residual"])
        diagram = cls(nodes, edges, residual)
        diagram.total_partition().validate(nodes.slots)
        return diagram


def connected_components(d: Diagram) -> list[frozenset[int]]:
    """
    Connected components of the rows of ``d``.

    Two rows are linked when a block of the total partition touches both; the
    residual counts as a single block. Rows without slots are isolated.

    Returns
    -------
    list of frozenset
        Row ids per component, ordered by smallest row id
    """
    parent = list(range(d.nodes.n_rows))

    def find(r: int) -> int:
        while parent[r] != r:
            parent[r] = parent[parent[r]]
            r = parent[r]
        return r

    for block in d.total_partition():
        rows = sorted({slot[0] for slot in block})
        root = find(rows[0])
        for r in rows[1:]:
            other = find(r)
            if other != root:
                parent[other] = root

    groups: dict[int, set[int]] = {}
    for r in range(d.nodes.n_rows):
        groups.setdefault(find(r), set()).add(r)
    return sorted((frozenset(g) for g in groups.values()), key=min)


def enumerate_diagrams(
    rows: Sequence[Union[Multiset, str, Iterable[Hashable]]],
    non_flat: bool = False,
    connected: bool = False,
    total: bool = False,
    gaussian: bool = False,
    cap: Optional[int] = None,
) -> Iterator[Diagram]:
    """
    Yield every diagram over ``rows`` satisfying the requested predicates.

    Diagrams correspond to set partitions of the slots plus one marker element
    whose block is the residual. Generation follows restricted-growth order
    over (marker, slots in (row, pos) order), so each slot tries the residual
    first, then the open edge blocks, then a new block.

    Parameters
    ----------
    rows : sequence of Multiset
        Row multisets ``I_1, ..., I_m``
    non_flat, connected, total, gaussian : bool
        Filters; all requested predicates must hold
    cap : int, optional
        Limit on the total slot count

    Yields
    ------
    Diagram
    """
    nodes = NodeSet.from_rows(rows)
    slots = nodes.slots
    check_slot_cap(len(slots), cap, "diagram")
    n = len(slots)

    residual: list[Slot] = []
    edges: list[list[Slot]] = []

    def accept() -> Optional[Diagram]:
        if gaussian and any(len(b) != 2 for b in edges):
            return None
        d = Diagram(nodes, tuple(tuple(b) for b in edges), tuple(residual))
        if non_flat and not d.is_non_flat():
            return None
        if connected and not d.is_connected():
            return None
        return d

    def rec(i: int) -> Iterator[Diagram]:
        if gaussian:
            open_pairs = sum(1 for b in edges if len(b) == 1)
            if open_pairs > n - i:
                return
        if i == n:
            d = accept()
            if d is not None:
                yield d
            return
        slot = slots[i]
        if not total:
            residual.append(slot)
            yield from rec(i + 1)
            residual.pop()
        for block in edges:
            if gaussian:
                if len(block) != 1:
                    continue
                if non_flat and block[0][0] == slot[0]:
                    continue
            block.append(slot)
            yield from rec(i + 1)
            block.pop()
        edges.append([slot])
        yield from rec(i + 1)
        edges.pop()

    yield from rec(0)


def diagrams_to_json(diagrams: Iterable[Diagram]) -> list[dict[str, Any]]:
    return [d.to_json() for d in diagrams]


def diagrams_from_json(data: Iterable[Mapping[str, Any]]) -> list[Diagram]:
    return [Diagram.from_json(item) for item in data]
