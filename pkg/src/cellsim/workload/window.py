"""Windowed collection of events from multiple parsers.

Each parser keeps a bounded read-ahead buffer (thirty simulated minutes or
one million events, whichever is hit first).  ``collect_window`` merges all
buffered events falling inside a window into one sorted batch; the call is
synchronous, so a parser that has not buffered far enough simply reads on
until it has (or hits end of stream).
"""

from __future__ import annotations

from typing import Iterable, Iterator, Optional

from . import events as ev

BUFFER_AHEAD_US = 30 * 60 * 1_000_000
BUFFER_MAX_EVENTS = 1_000_000


class BufferedEventSource:
    """Read-ahead wrapper around one event iterator."""

    def __init__(self, source: Iterable[ev.WorkloadEvent],
                 ahead_us: int = BUFFER_AHEAD_US, max_events: int = BUFFER_MAX_EVENTS):
        self._iter: Iterator[ev.WorkloadEvent] = iter(source)
        self._buffer: list[ev.WorkloadEvent] = []
        self._exhausted = False
        self.ahead_us = ahead_us
        self.max_events = max_events

    @property
    def exhausted(self) -> bool:
        return self._exhausted and not self._buffer

    def fill(self, horizon_us: int) -> None:
        """Read until buffered past the horizon or buffer/stream limits hit."""
        while not self._exhausted:
            if self._buffer and self._buffer[-1].timestamp >= horizon_us:
                break
            if len(self._buffer) >= self.max_events:
                break
            try:
                self._buffer.append(next(self._iter))
            except StopIteration:
                self._exhausted = True

    def idle_fill(self, now_us: int) -> None:
        """Opportunistic read-ahead up to the configured horizon."""
        self.fill(now_us + self.ahead_us)

    def take_until(self, end_us: int) -> list[ev.WorkloadEvent]:
        taken: list[ev.WorkloadEvent] = []
        while True:
            self.fill(end_us)
            keep: list[ev.WorkloadEvent] = []
            for event in self._buffer:
                (taken if event.timestamp < end_us else keep).append(event)
            self._buffer = keep
            # The buffer cap may have stopped the fill mid-window; loop until
            # the stream is exhausted or buffered past the window end.
            if self._exhausted or (self._buffer and self._buffer[-1].timestamp >= end_us):
                return taken


class WindowCollector:
    """Merges per-parser streams into timestamp-sorted window batches."""

    def __init__(self, sources: Iterable[Iterable[ev.WorkloadEvent]],
                 ahead_us: int = BUFFER_AHEAD_US, max_events: int = BUFFER_MAX_EVENTS):
        self.sources = [
            src if isinstance(src, BufferedEventSource)
            else BufferedEventSource(src, ahead_us, max_events)
            for src in sources
        ]

    @property
    def exhausted(self) -> bool:
        return all(src.exhausted for src in self.sources)

    def collect_window(self, window_start: int, window_end: int) -> ev.EventBatch:
        if window_end < window_start:
            raise ValueError("window_end must be >= window_start")
        merged: list[ev.WorkloadEvent] = []
        for source in self.sources:
            merged.extend(e for e in source.take_until(window_end)
                          if e.timestamp >= window_start)
        return ev.EventBatch(window_start, window_end, tuple(ev.sort_events(merged)))

    def windows(self, window_us: int, start_us: int = 0,
                stop_us: Optional[int] = None) -> Iterator[ev.EventBatch]:
        """Consecutive windows until the stop time or stream exhaustion."""
        current = start_us
        while True:
            if stop_us is not None and current >= stop_us:
                return
            batch = self.collect_window(current, current + window_us)
            yield batch
            current += window_us
            if stop_us is None and self.exhausted:
                return
