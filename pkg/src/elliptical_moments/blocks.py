"""Block collections and the two block construction schemes

A `BlockCollection` stores its blocks as one jagged awkward array of
0-based coordinate indices. The JSON format read and written here is
1-based, as every external surface of the package is.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import typing as tp
from collections.abc import Iterable
from pathlib import Path

import awkward
import numpy as np

from elliptical_moments.awkward_util import doc_of, jagged_index, offsets_and_content, sublists
from elliptical_moments.errors import DomainError
from elliptical_moments.kernels import connected_components


@dataclasses.dataclass(frozen=True)
class Manual:
    def __str__(self):
        return "manual"


@dataclasses.dataclass(frozen=True)
class Threshold:
    t: float

    def __str__(self):
        return f"threshold({self.t:g})"


@dataclasses.dataclass(frozen=True)
class RandomPairs:
    seed: int | None
    count: int

    def __str__(self):
        return f"pairs(count={self.count}, seed={self.seed})"


Provenance = Manual | Threshold | RandomPairs


class BlockCollection:
    """A collection of coordinate blocks ``A = {J_1, ..., J_N}`` over ``0 .. p-1``

    Blocks are nonempty, every index lies in range and no block repeats an
    index. Blocks may overlap each other; `overlapping` records whether they do.
    """

    def __init__(self, index: awkward.Array, p: int, provenance: Provenance | None = None):
        self.p = int(p)
        self.provenance = Manual() if provenance is None else provenance
        self._offsets, self._content = offsets_and_content(index)
        self.index = index
        if self.p < 1:
            msg = f"dimension must be positive, got {p}"
            raise DomainError(msg)
        sizes = np.diff(self._offsets)
        if np.any(sizes == 0):
            msg = f"block {int(np.argmin(sizes))} is empty"
            raise DomainError(msg)
        if len(self._content) and (self._content.min() < 0 or self._content.max() >= self.p):
            msg = f"block indices must lie in [0, {self.p}), got {self._content.min()}..{self._content.max()}"
            raise DomainError(msg)
        for i, block in enumerate(self):
            if len(np.unique(block)) != len(block):
                msg = f"block {i} repeats a coordinate: {block.tolist()}"
                raise DomainError(msg)
        counts = np.bincount(self._content, minlength=self.p)
        self.overlapping = bool(counts.max(initial=0) > 1)

    @classmethod
    def from_lists(
        cls, lists: Iterable[Iterable[int]], p: int, provenance: Provenance | None = None
    ) -> BlockCollection:
        provenance = Manual() if provenance is None else provenance
        return cls(jagged_index(lists, doc=f"blocks ({provenance})"), p, provenance)

    @classmethod
    def singletons(cls, p: int) -> BlockCollection:
        """``p`` blocks of one coordinate each"""
        return cls.from_lists(([j] for j in range(p)), p)

    @classmethod
    def aligned(cls, p: int, k: int) -> BlockCollection:
        """Consecutive blocks of size ``k``; the last one is shorter when ``k`` does not divide ``p``"""
        if k < 1:
            msg = f"block size must be positive, got {k}"
            raise DomainError(msg)
        return cls.from_lists((range(start, min(start + k, p)) for start in range(0, p, k)), p)

    @classmethod
    def full(cls, p: int) -> BlockCollection:
        """A single block holding every coordinate"""
        return cls.from_lists([range(p)], p)

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self._offsets)

    @property
    def doc(self) -> str:
        return doc_of(self.index)

    def __len__(self) -> int:
        return len(self._offsets) - 1

    def __getitem__(self, i: int) -> np.ndarray:
        if i < 0:
            i += len(self)
        return self._content[self._offsets[i] : self._offsets[i + 1]]

    def __iter__(self) -> tp.Iterator[np.ndarray]:
        return iter(sublists(self.index))

    def to_lists(self) -> list[list[int]]:
        return [block.tolist() for block in self]

    def __repr__(self):
        return f"BlockCollection(p={self.p}, blocks={len(self)}, overlapping={self.overlapping}, provenance={self.provenance})"

    def to_json(self) -> str:
        """Array of arrays of 1-based coordinate indices"""
        return json.dumps([[j + 1 for j in block] for block in self.to_lists()])

    @classmethod
    def from_json(cls, text: str, p: int) -> BlockCollection:
        lists = json.loads(text)
        if not isinstance(lists, list) or not all(isinstance(b, list) for b in lists):
            msg = "blocks JSON must be an array of arrays of coordinate indices"
            raise DomainError(msg)
        return cls.from_lists(([int(j) - 1 for j in block] for block in lists), p)

    def write(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path: str | os.PathLike, p: int) -> BlockCollection:
        return cls.from_json(Path(path).read_text(encoding="utf-8"), p)


def as_block_collection(blocks, p: int) -> BlockCollection:
    if isinstance(blocks, BlockCollection):
        return blocks
    return BlockCollection.from_lists(blocks, p)


@dataclasses.dataclass(frozen=True)
class BlockDiagnostics:
    """Structural report on a set of blocks

    ``overlaps`` maps each coordinate shared by several blocks to the
    (0-based) positions of the blocks holding it.
    """

    n_blocks: int
    max_size: int
    out_of_range: tuple[int, ...]
    duplicates: tuple[int, ...]
    empty: tuple[int, ...]
    overlaps: dict[int, tuple[int, ...]]

    @property
    def disjoint(self) -> bool:
        return not self.overlaps

    @property
    def valid(self) -> bool:
        return not (self.out_of_range or self.duplicates or self.empty)


def validate_blocks(blocks, p: int, require_disjoint: bool = False) -> BlockDiagnostics:
    """Report out-of-range indices, repeated indices, empty blocks and overlaps

    ``blocks`` may be a `BlockCollection` or raw index lists. Only when
    ``require_disjoint`` is set does an overlap (or an invalid block) raise
    `DomainError`.
    """
    lists = [np.asarray(block, dtype=np.int64) for block in blocks]
    out_of_range = sorted(
        {int(j) for block in lists for j in block if j < 0 or j >= p}
    )
    duplicates = tuple(i for i, block in enumerate(lists) if len(np.unique(block)) != len(block))
    empty = tuple(i for i, block in enumerate(lists) if len(block) == 0)
    holders: dict[int, list[int]] = {}
    for i, block in enumerate(lists):
        for j in np.unique(block):
            holders.setdefault(int(j), []).append(i)
    overlaps = {j: tuple(owners) for j, owners in sorted(holders.items()) if len(owners) > 1}
    out = BlockDiagnostics(
        n_blocks=len(lists),
        max_size=max((len(block) for block in lists), default=0),
        out_of_range=tuple(out_of_range),
        duplicates=duplicates,
        empty=empty,
        overlaps=overlaps,
    )
    if require_disjoint:
        if not out.valid:
            msg = f"invalid blocks: out of range {out.out_of_range}, repeated in {out.duplicates}, empty {out.empty}"
            raise DomainError(msg)
        if not out.disjoint:
            shared = next(iter(overlaps))
            msg = f"blocks overlap at {len(overlaps)} coordinate(s), first at {shared} (blocks {overlaps[shared]})"
            raise DomainError(msg)
    return out


def threshold_blocks(sigma_raw, t: float) -> BlockCollection:
    """Connected components of the graph linking ``i`` and ``j`` whenever
    ``|sigma_ij| / sqrt(sigma_ii sigma_jj) > t``

    The components partition ``0 .. p-1``; each is sorted and they are
    ordered by their smallest member. Isolated coordinates become singletons.
    """
    if not 0 < t < 1:
        msg = f"threshold must lie in (0, 1), got {t}"
        raise DomainError(msg)
    sigma = np.asarray(sigma_raw, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        msg = f"expected a square matrix, got shape {sigma.shape}"
        raise DomainError(msg)
    diag = np.diag(sigma)
    if np.any(diag <= 0):
        msg = f"diagonal entry {int(np.argmin(diag))} is not positive ({diag.min():.3g})"
        raise DomainError(msg)
    scale = np.sqrt(diag)
    adjacency = np.abs(sigma) / np.outer(scale, scale) > t
    np.fill_diagonal(adjacency, False)
    labels = connected_components(adjacency)
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels)
    splits = np.cumsum(counts)[:-1]
    return BlockCollection.from_lists(np.split(order, splits), len(diag), Threshold(t))


def _pair_offset(i: int, p: int) -> int:
    # number of pairs (a, b) with a < i
    return i * p - i * (i + 1) // 2


def unrank_pair(r: int, p: int) -> tuple[int, int]:
    """The ``r``-th pair ``(i, j)``, ``i < j``, in lexicographic order"""
    i = int(p - 0.5 - math.sqrt((p - 0.5) ** 2 - 2 * r))
    i = min(max(i, 0), p - 2)
    # floating point guess, corrected exactly
    while i > 0 and _pair_offset(i, p) > r:
        i -= 1
    while _pair_offset(i + 1, p) <= r:
        i += 1
    return i, r - _pair_offset(i, p) + i + 1


def random_pair_blocks(
    p: int,
    count: int | None = None,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
) -> BlockCollection:
    """``count`` distinct pairs drawn uniformly without replacement from all
    ``p (p - 1) / 2`` unordered coordinate pairs

    The default ``count`` is ``p`` (capped at the number of pairs). The draw is
    a partial Fisher-Yates shuffle over the lazily ranked pair list, so the
    memory is proportional to ``count``. Pass either a generator or a seed;
    with neither the seed is 0.
    """
    total = p * (p - 1) // 2
    if p < 2:
        msg = f"pairs need p >= 2, got {p}"
        raise DomainError(msg)
    if count is None:
        count = min(p, total)
    if not 1 <= count <= total:
        msg = f"cannot draw {count} distinct pairs out of {total}"
        raise DomainError(msg)
    if rng is None:
        seed = 0 if seed is None else seed
        rng = np.random.default_rng(seed)
    swapped: dict[int, int] = {}
    ranks = []
    for i in range(count):
        j = int(rng.integers(i, total))
        ranks.append(swapped.get(j, j))
        swapped[j] = swapped.get(i, i)
    pairs = [unrank_pair(r, p) for r in ranks]
    return BlockCollection.from_lists(pairs, p, RandomPairs(seed, count))


__all__ = [
    "BlockCollection",
    "BlockDiagnostics",
    "Manual",
    "RandomPairs",
    "Threshold",
    "random_pair_blocks",
    "threshold_blocks",
    "validate_blocks",
]
