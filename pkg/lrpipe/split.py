from typing import Sequence

import numpy as np
from sklearn.model_selection import train_test_split

__all__ = 'stratified_split',


def stratified_split(labels: Sequence[int], sizes: Sequence[int], *, random_state: int = 42) -> list:
    """
    Splits ``range(len(labels))`` into disjoint parts of the given ``sizes``,
    keeping the class proportions of ``labels`` in every part.

    Parameters
    ----------
    labels
        class label of each object.
    sizes
        the number of objects in each part. Must sum up to ``len(labels)``.
    random_state
        seed passed to ``sklearn.model_selection.train_test_split``.

    Returns
    -------
    parts: list of sorted index arrays, one per entry of ``sizes``.
    """
    labels = np.asarray(labels)
    sizes = [int(size) for size in sizes]
    if sum(sizes) != len(labels):
        raise ValueError(f'The sizes {sizes} do not add up to the number of objects ({len(labels)}).')
    if any(size < 0 for size in sizes):
        raise ValueError(f'The sizes must be non-negative: {sizes}')

    parts = []
    rest = np.arange(len(labels))
    for size in sizes[:-1]:
        if size == 0:
            parts.append(np.array([], int))
            continue
        if size == len(rest):
            parts.append(np.sort(rest))
            rest = np.array([], int)
            continue

        part, rest = train_test_split(rest, train_size=size, stratify=labels[rest], random_state=random_state)
        parts.append(np.sort(part))

    parts.append(np.sort(rest))
    return parts
