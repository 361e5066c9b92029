"""
In-process memo caches for canonical forms and ball enumerations.
"""
import logging
import threading
from typing import Any, Callable, Dict, Hashable, Optional, TypeVar

from app.core.config import settings

T = TypeVar('T')

logger = logging.getLogger(__name__)


class MemoCache:
    """Bounded memo table with hit/miss counters.

    Writes are idempotent: every caller computing the value for a key computes
    the same value, so concurrent writers never disagree. Eviction drops the
    oldest entry once the table is full.
    """

    def __init__(self, name: str, max_entries: Optional[int] = None):
        """Initialize the cache.

        Args:
            name: Label used in statistics and log lines
            max_entries: Entry bound (defaults to settings.CACHE_MAX_ENTRIES)
        """
        self.name = name
        self.max_entries = max_entries if max_entries is not None else settings.CACHE_MAX_ENTRIES
        self._store: Dict[Hashable, Any] = {}
        self._lock = threading.Lock()
        self._hits = 0
        self._misses = 0

    def get(self, key: Hashable) -> Optional[Any]:
        """Return the cached value or None."""
        value = self._store.get(key)
        if value is None:
            self._misses += 1
        else:
            self._hits += 1
        return value

    def set(self, key: Hashable, value: Any) -> None:
        """Store a value, evicting the oldest entry when full."""
        with self._lock:
            if key in self._store:
                return
            if len(self._store) >= self.max_entries:
                self._store.pop(next(iter(self._store)))
            self._store[key] = value

    def get_or_compute(self, key: Hashable, compute: Callable[[], T]) -> T:
        """Return the cached value for key, computing and storing it on a miss."""
        value = self.get(key)
        if value is None:
            value = compute()
            self.set(key, value)
        return value

    def clear(self) -> None:
        with self._lock:
            self._store.clear()
            self._hits = 0
            self._misses = 0

    def stats(self) -> Dict[str, Any]:
        """Cache statistics for manifests and debug logs."""
        total = self._hits + self._misses
        return {
            'hits': self._hits,
            'misses': self._misses,
            'hit_ratio': self._hits / total if total > 0 else 0,
            'size': len(self._store),
        }


_registry: Dict[str, MemoCache] = {}


def get_cache(name: str) -> MemoCache:
    """Return the process-wide cache registered under name, creating it if needed."""
    cache = _registry.get(name)
    if cache is None:
        cache = _registry.setdefault(name, MemoCache(name))
    return cache


def cache_stats() -> Dict[str, Dict[str, Any]]:
    """Statistics for every registered cache."""
    stats = {name: cache.stats() for name, cache in sorted(_registry.items())}
    logger.debug("Memo cache stats: %s", stats)
    return stats
