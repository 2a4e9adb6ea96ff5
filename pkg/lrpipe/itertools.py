from functools import wraps
from itertools import zip_longest
from typing import Callable, Iterable, Iterator, Tuple

from .checks import join

__all__ = 'zip_equal', 'collect'

_MISSING = object()


def zip_equal(*args: Iterable) -> Iterator[Tuple]:
    """
    Same as ``zip``, but raises ValueError if the iterables have different lengths.

    Sized arguments are compared before anything is yielded, the others as soon as one of them is exhausted.

    Examples
    --------
    >>> list(zip_equal([1, 2], 'ab'))
    [(1, 'a'), (2, 'b')]
    >>> list(zip_equal([1, 2], iter('abc')))  # raises ValueError
    """
    sizes = [len(arg) if hasattr(arg, '__len__') else '?' for arg in args]
    known = {size for size in sizes if size != '?'}
    if len(known) > 1:
        raise ValueError(f'The arguments have different lengths: {join(sizes)}.')

    for values in zip_longest(*args, fillvalue=_MISSING):
        if any(value is _MISSING for value in values):
            raise ValueError('The iterables did not exhaust simultaneously.')
        yield values


def collect(func: Callable[..., Iterable]) -> Callable[..., list]:
    """Turn a generator function into a function returning a list."""

    @wraps(func)
    def wrapper(*args, **kwargs):
        return list(func(*args, **kwargs))

    return wrapper
