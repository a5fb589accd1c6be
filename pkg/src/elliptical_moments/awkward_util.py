from __future__ import annotations

from collections.abc import Iterable

import awkward
import numpy as np

from elliptical_moments.kernels import counts2offsets, ensure_array


def jagged_index(lists: Iterable[Iterable[int]], doc: str = "") -> awkward.Array:
    """Pack a list of integer index lists into one jagged awkward array

    The result is a single ``ListOffsetArray`` of int64 over a flat content
    buffer, with ``doc`` stored as its ``__doc__`` parameter.
    """
    lists = [np.asarray(list(entry), dtype=np.int64) for entry in lists]
    counts = np.array([len(entry) for entry in lists], dtype=np.int64)
    offsets = counts2offsets(counts)
    content = np.concatenate(lists) if lists else np.empty(0, dtype=np.int64)
    parameters = {"__doc__": doc} if doc else None
    return awkward.Array(
        awkward.contents.ListOffsetArray(
            awkward.index.Index64(offsets),
            awkward.contents.NumpyArray(content),
            parameters=parameters,
        )
    )


def offsets_and_content(array: awkward.Array) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and flat content of a jagged index array, as Numpy arrays"""
    layout = awkward.to_layout(array)
    if not isinstance(layout, awkward.contents.ListOffsetArray):
        layout = layout.to_ListOffsetArray64(True)
    offsets = ensure_array(layout.offsets)
    content = ensure_array(layout.content)
    # a sliced array may start in the middle of its content buffer
    return offsets - offsets[0], content[offsets[0] : offsets[-1]]


def sublists(array: awkward.Array) -> list[np.ndarray]:
    """Split a jagged index array back into one Numpy array per list"""
    offsets, content = offsets_and_content(array)
    return [content[start:stop] for start, stop in zip(offsets[:-1], offsets[1:])]


def doc_of(array: awkward.Array) -> str:
    return awkward.parameters(array).get("__doc__", "")
