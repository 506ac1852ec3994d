"""Shared key-value store with lost-update-free read-modify-write.

Concurrent writers may interleave, so plain get/put loses updates.  The store
offers an optimistic compare-and-replace loop instead: callers pass a pure
update function which is retried until the swap lands.  Ordering between
concurrent updates of one key is unspecified; no update is ever dropped.
"""

from __future__ import annotations

import threading
from typing import Callable, Generic, Iterator, Optional, TypeVar

K = TypeVar("K")
V = TypeVar("V")


class StateStore(Generic[K, V]):
    def __init__(self) -> None:
        self._data: dict[K, V] = {}
        self._lock = threading.Lock()

    def __getstate__(self) -> dict:
        return {"_data": self._data}

    def __setstate__(self, state: dict) -> None:
        self._data = state["_data"]
        self._lock = threading.Lock()

    def get(self, key: K) -> Optional[V]:
        with self._lock:
            return self._data.get(key)

    def put(self, key: K, value: V) -> Optional[V]:
        with self._lock:
            old = self._data.get(key)
            self._data[key] = value
            return old

    def put_if_absent(self, key: K, value: V) -> V:
        with self._lock:
            return self._data.setdefault(key, value)

    def remove(self, key: K) -> Optional[V]:
        with self._lock:
            return self._data.pop(key, None)

    def compare_and_replace(self, key: K, expected: V, new: V) -> bool:
        """Swap only if the stored value still is (or equals) the one read."""
        with self._lock:
            current = self._data.get(key)
            if current is expected or current == expected:
                if key in self._data:
                    self._data[key] = new
                    return True
            return False

    def replace_with(self, key: K, update: Callable[[V], V]) -> Optional[V]:
        """Atomically apply a pure update function; returns the prior value.

        Missing keys are a normal absent return, not an error.  The update
        function may run more than once under contention, so it must be pure.
        """
        while True:
            with self._lock:
                if key not in self._data:
                    return None
                value = self._data[key]
            new = update(value)
            if self.compare_and_replace(key, value, new):
                return value

    def keys(self) -> list[K]:
        with self._lock:
            return list(self._data)

    def values(self) -> list[V]:
        with self._lock:
            return list(self._data.values())

    def items(self) -> list[tuple[K, V]]:
        with self._lock:
            return list(self._data.items())

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)

    def __contains__(self, key: K) -> bool:
        with self._lock:
            return key in self._data

    def __iter__(self) -> Iterator[K]:
        return iter(self.keys())
