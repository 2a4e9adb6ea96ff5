import numpy as np


def join(values):
    return ", ".join(map(str, values))


def check_matrix(*arrays):
    for array in arrays:
        if np.ndim(array) != 2:
            raise ValueError(f'A 2-dimensional matrix is required, got shape {np.shape(array)}')


def check_finite(*arrays):
    for array in arrays:
        if not np.isfinite(array).all():
            raise ValueError(f'All entries must be finite, got {np.size(array) - np.isfinite(array).sum()} '
                             f'non-finite out of {np.size(array)}')


def check_square(*arrays):
    check_matrix(*arrays)
    for array in arrays:
        if array.shape[0] != array.shape[1]:
            raise ValueError(f'A square matrix is required, got shape {array.shape}')


def check_product(left, right):
    """Check that ``left @ right`` is defined."""
    check_matrix(left, right)
    if left.shape[1] != right.shape[0]:
        raise ValueError(f'Inner dimensions do not agree: {join([left.shape, right.shape])}')

