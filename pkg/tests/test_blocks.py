import awkward
import numpy as np
import pytest

from elliptical_moments import BlockCollection, DomainError
from elliptical_moments.awkward_util import jagged_index, offsets_and_content, sublists
from elliptical_moments.blocks import (
    RandomPairs,
    Threshold,
    random_pair_blocks,
    threshold_blocks,
    unrank_pair,
    validate_blocks,
)


def test_jagged_index():
    index = jagged_index([[0, 1], [2], [3, 4, 5]], doc="three blocks")
    assert awkward.to_list(index) == [[0, 1], [2], [3, 4, 5]]
    assert awkward.parameters(index)["__doc__"] == "three blocks"
    offsets, content = offsets_and_content(index)
    assert offsets.tolist() == [0, 2, 3, 6]
    assert content.tolist() == [0, 1, 2, 3, 4, 5]
    # a slice that starts in the middle of the content buffer
    assert [block.tolist() for block in sublists(index[1:])] == [[2], [3, 4, 5]]


def test_block_collection_constructors():
    aligned = BlockCollection.aligned(5, 2)
    assert aligned.to_lists() == [[0, 1], [2, 3], [4]]
    assert aligned.sizes.tolist() == [2, 2, 1]
    assert not aligned.overlapping
    assert BlockCollection.singletons(3).to_lists() == [[0], [1], [2]]
    assert BlockCollection.full(3).to_lists() == [[0, 1, 2]]
    assert len(BlockCollection.full(3)) == 1
    assert aligned[-1].tolist() == [4]
    assert "manual" in aligned.doc


def test_block_collection_rejects_bad_blocks():
    with pytest.raises(DomainError):
        BlockCollection.from_lists([[0, 1], []], 3)
    with pytest.raises(DomainError):
        BlockCollection.from_lists([[0, 3]], 3)
    with pytest.raises(DomainError):
        BlockCollection.from_lists([[1, 1]], 3)
    overlapping = BlockCollection.from_lists([[0, 1], [1, 2]], 3)
    assert overlapping.overlapping


def test_block_json_is_one_based(tmp_path):
    blocks = BlockCollection.from_lists([[0, 2], [1]], 3)
    assert blocks.to_json() == "[[1, 3], [2]]"
    path = tmp_path / "blocks.json"
    blocks.write(path)
    assert BlockCollection.read(path, 3).to_lists() == [[0, 2], [1]]
    with pytest.raises(DomainError):
        BlockCollection.from_json('{"a": 1}', 3)


def test_validate_blocks():
    report = validate_blocks([[0, 1], [1, 2], [5], []], 4)
    assert report.out_of_range == (5,)
    assert report.empty == (3,)
    assert report.overlaps == {1: (0, 1)}
    assert not report.valid
    assert not report.disjoint
    assert validate_blocks(BlockCollection.aligned(4, 2), 4).disjoint
    with pytest.raises(DomainError):
        validate_blocks([[0, 1], [1, 2]], 3, require_disjoint=True)


def test_threshold_blocks():
    sigma = np.eye(6)
    sigma[0, 2] = sigma[2, 0] = 0.5
    sigma[2, 4] = sigma[4, 2] = 0.5
    sigma[1, 3] = sigma[3, 1] = 0.1
    blocks = threshold_blocks(sigma, 0.3)
    # components are sorted and ordered by their smallest member
    assert blocks.to_lists() == [[0, 2, 4], [1], [3], [5]]
    assert blocks.provenance == Threshold(0.3)
    # every coordinate exactly once
    assert sorted(np.concatenate(list(blocks)).tolist()) == list(range(6))
    assert threshold_blocks(sigma, 0.05).to_lists() == [[0, 2, 4], [1, 3], [5]]
    with pytest.raises(DomainError):
        threshold_blocks(sigma, 1.0)


def test_threshold_blocks_scale_invariant():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((200, 8))
    x[:, 1] += x[:, 0]
    sigma = np.cov(x, rowvar=False)
    scale = np.diag(np.arange(1.0, 9.0))
    assert threshold_blocks(sigma, 0.4).to_lists() == threshold_blocks(scale @ sigma @ scale, 0.4).to_lists()


def test_threshold_blocks_refine_as_t_grows():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((40, 10)) @ rng.standard_normal((10, 10))
    sigma = np.cov(x, rowvar=False)
    coarse = None
    for t in np.linspace(0.05, 0.95, 10):
        fine = [set(block) for block in threshold_blocks(sigma, t).to_lists()]
        if coarse is not None:
            assert all(any(block <= parent for parent in coarse) for block in fine)
            assert len(fine) >= len(coarse)
        coarse = fine


def test_unrank_pair():
    p = 7
    pairs = [unrank_pair(r, p) for r in range(p * (p - 1) // 2)]
    assert pairs == [(i, j) for i in range(p) for j in range(i + 1, p)]


def test_random_pair_blocks():
    blocks = random_pair_blocks(50, 30, seed=5)
    pairs = [tuple(block.tolist()) for block in blocks]
    assert len(set(pairs)) == 30
    assert all(i < j for i, j in pairs)
    assert blocks.provenance == RandomPairs(5, 30)
    assert random_pair_blocks(50, 30, seed=5).to_lists() == blocks.to_lists()
    # neither generator nor seed draws from seed 0
    assert random_pair_blocks(12, 5).to_lists() == random_pair_blocks(12, 5, seed=0).to_lists()
    assert random_pair_blocks(12, 5).provenance == RandomPairs(0, 5)
    # default count is p
    assert len(random_pair_blocks(10, seed=1)) == 10
    # every pair when count is the total
    assert len({tuple(b.tolist()) for b in random_pair_blocks(5, 10, seed=2)}) == 10
    with pytest.raises(DomainError):
        random_pair_blocks(4, 7, seed=0)
    with pytest.raises(DomainError):
        random_pair_blocks(1)
