from typing import Iterator, Sequence, Tuple, Union

import numpy as np

from .model import Batch

__all__ = 'ShuffledBatches',

Seed = Union[int, Sequence[int]]


class ShuffledBatches:
    """
    Iterates over ``data`` in batches of ``batch_size`` columns.

    The order of each epoch is a seeded permutation determined by ``(seed, epoch)`` alone,
    so runs sharing a seed see identical batches, and a run resumed at some epoch
    continues with the same batches as an uninterrupted one.

    Parameters
    ----------
    data
    batch_size
    seed
        an integer or a sequence of integers.
    drop_last
        whether to skip the last batch in case it has a smaller size.
    """

    def __init__(self, data: Batch, batch_size: int, seed: Seed, drop_last: bool = False):
        if batch_size < 1:
            raise ValueError(f'The batch size must be positive, got {batch_size}.')
        self.data = data
        self.batch_size = batch_size
        self.seed = list(np.atleast_1d(seed).tolist())
        self.drop_last = drop_last

    def __len__(self):
        """The number of batches per epoch."""
        if self.drop_last:
            return len(self.data) // self.batch_size
        return -(-len(self.data) // self.batch_size)

    def __call__(self, epoch: int) -> Iterator[Tuple[Batch]]:
        order = np.random.default_rng([*self.seed, epoch]).permutation(len(self.data))
        for start in range(0, len(self) * self.batch_size, self.batch_size):
            yield self.data.take(order[start:start + self.batch_size]),
