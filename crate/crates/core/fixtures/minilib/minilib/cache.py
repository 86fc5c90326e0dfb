"""A tiny LRU cache."""

from collections import OrderedDict

from .mathx import clamp

MAX_CAPACITY = 1000


class LRUCache:
    """Least-recently-used mapping with a bounded size."""

    def __init__(self, capacity):
        self.capacity = clamp(capacity, 1, MAX_CAPACITY)
        self._data = OrderedDict()

    def get(self, key, default=None):
        if key not in self._data:
            return default
        self._data.move_to_end(key)
        return self._data[key]

    def put(self, key, value):
        self._data[key] = value
        self._data.move_to_end(key)
        while len(self._data) > self.capacity:
            self._data.popitem(last=False)


def memoize(fn):
    """Cache results of a one-argument function."""
    store = {}

    def wrapper(arg):
        if arg not in store:
            store[arg] = fn(arg)
        return store[arg]

    return wrapper
