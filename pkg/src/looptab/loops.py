"""Repeat detection via a correlative matrix and bar-aligned loop extraction.

The score is flattened into a sequence of onset fingerprints (all tracks
merged). A diagonal run of length L ending at matrix cell (i, j) means the
L events ending at i repeat verbatim at j. Loop spans are repeats whose
both occurrence starts fall on a bar boundary; the loop body is the bar
range between the two starts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .score import Score
from .tokens import TICKS_PER_QUARTER

log = logging.getLogger(__name__)

MAX_MATRIX_EVENTS = 4096


@dataclass(frozen=True)
class LoopParams:
    min_rep_notes: int = 4
    min_rep_beats: int = 2
    min_loop_bars: int = 4
    max_loop_bars: int = 4
    allow_overlap: bool = True

    def __post_init__(self):
        if min(self.min_rep_notes, self.min_rep_beats, self.min_loop_bars, self.max_loop_bars) <= 0:
            raise ValueError("loop parameters must be positive")
        if self.min_loop_bars > self.max_loop_bars:
            raise ValueError("min_loop_bars must be <= max_loop_bars")


DEFAULT_PARAMS = LoopParams()


@dataclass(frozen=True)
class EventFingerprint:
    """All notes sharing one onset plus the gap to the next onset.

    Equality covers the note set and the gap only; bar/beat bookkeeping is
    excluded so transposed copies at different positions still compare.
    """

    notes: tuple[tuple[str, int, int], ...]  # (track, midi, duration), sorted
    gap: int
    onset: int = field(compare=False)
    bar: int = field(compare=False)
    beat: float = field(compare=False)


@dataclass(frozen=True, order=True)
class LoopSpan:
    start_bar: int
    end_bar: int  # exclusive
    repetition_length_events: int


def bar_offsets(score: Score) -> list[int]:
    """Absolute start tick of each measure, plus the end tick of the score."""
    offsets = [0]
    for m in score.measures:
        offsets.append(offsets[-1] + m.capacity)
    return offsets


def fingerprint_sequence(score: Score) -> list[EventFingerprint]:
    offsets = bar_offsets(score)
    onsets: dict[int, list[tuple[str, int, int]]] = {}
    onset_bar: dict[int, int] = {}
    for m in score.measures:
        base = offsets[m.index]
        for ev in m.events:
            at = base + ev.onset
            onsets.setdefault(at, []).append((ev.track, ev.midi_pitch, ev.duration))
            onset_bar[at] = m.index
    ordered = sorted(onsets)
    end = offsets[-1]
    seq = []
    for i, at in enumerate(ordered):
        nxt = ordered[i + 1] if i + 1 < len(ordered) else end
        bar = onset_bar[at]
        seq.append(EventFingerprint(
            notes=tuple(sorted(onsets[at])),
            gap=max(nxt - at, 0),
            onset=at,
            bar=bar,
            beat=(at - offsets[bar]) / TICKS_PER_QUARTER,
        ))
    return seq


def build_correlative_matrix(seq: list[EventFingerprint]) -> np.ndarray:
    """Upper-triangular match-length matrix.

    M[i][j] (i < j) counts the length of the fingerprint match ending at
    (i, j); sequences beyond MAX_MATRIX_EVENTS events are truncated with a
    warning to bound the O(n^2) memory.
    """
    if len(seq) > MAX_MATRIX_EVENTS:
        log.warning("fingerprint sequence truncated from %d to %d events",
                    len(seq), MAX_MATRIX_EVENTS)
        seq = seq[:MAX_MATRIX_EVENTS]
    n = len(seq)
    m = np.zeros((n, n), dtype=np.int32)
    for j in range(1, n):
        for i in range(j):
            if seq[i] == seq[j]:
                m[i, j] = m[i - 1, j - 1] + 1 if i > 0 else 1
    return m


def _segment_ticks(seq: list[EventFingerprint], start: int, length: int) -> int:
    return sum(seq[t].gap for t in range(start, start + length))


def _maximal_runs(matrix: np.ndarray):
    """Yield (first_start, second_start, length) for every maximal diagonal run."""
    n = matrix.shape[0]
    for j in range(1, n):
        for i in range(j):
            v = int(matrix[i, j])
            if v == 0:
                continue
            if i + 1 < n and j + 1 < n and matrix[i + 1, j + 1] > 0:
                continue  # run continues; not maximal here
            yield (i - v + 1, j - v + 1, v)


def find_repetitions(matrix: np.ndarray, seq: list[EventFingerprint],
                     params: LoopParams = DEFAULT_PARAMS) -> list[tuple[int, int, int]]:
    """Maximal repeats meeting the event-count and beat-duration thresholds."""
    min_ticks = params.min_rep_beats * TICKS_PER_QUARTER
    out = []
    for first, second, length in _maximal_runs(matrix):
        if length >= params.min_rep_notes and _segment_ticks(seq, first, length) >= min_ticks:
            out.append((first, second, length))
    return sorted(out)


def extract_loops(score: Score, params: LoopParams = DEFAULT_PARAMS) -> list[LoopSpan]:
    """Bar-aligned loop spans of a regularized score.

    For every repeat position pair (a, b) inside a maximal run where both
    onsets sit exactly on a bar boundary, the remaining match from (a, b)
    must still satisfy the repetition thresholds; the loop body is then
    bars [bar(a), bar(b)) and is kept when its bar count lies within
    [min_loop_bars, max_loop_bars]. Repeats starting off the bar grid are
    discarded, not shifted.
    """
    seq = fingerprint_sequence(score)
    offsets = bar_offsets(score)
    boundary = set(offsets[:-1])
    matrix = build_correlative_matrix(seq)
    min_ticks = params.min_rep_beats * TICKS_PER_QUARTER

    found: dict[tuple[int, int], int] = {}
    for first, second, length in _maximal_runs(matrix):
        d = second - first
        for off in range(length):
            a = first + off
            remaining = length - off
            if remaining < params.min_rep_notes:
                break
            fa, fb = seq[a], seq[a + d]
            if fa.onset not in boundary or fb.onset not in boundary:
                continue
            if _segment_ticks(seq, a, remaining) < min_ticks:
                continue
            bars = fb.bar - fa.bar
            if not params.min_loop_bars <= bars <= params.max_loop_bars:
                continue
            span = (fa.bar, fa.bar + bars)
            found[span] = max(found.get(span, 0), remaining)

    spans = sorted(LoopSpan(s, e, n) for (s, e), n in found.items())
    if not params.allow_overlap:
        kept: list[LoopSpan] = []
        for span in spans:
            if not kept or span.start_bar >= kept[-1].end_bar:
                kept.append(span)
        spans = kept
    return spans


def splice_loop(score: Score, span: LoopSpan) -> Score:
    """New score containing exactly the span's bars, rebased to measure 0."""
    if not 0 <= span.start_bar < span.end_bar <= len(score.measures):
        raise ValueError(f"span [{span.start_bar}, {span.end_bar}) out of range "
                         f"for {len(score.measures)}-bar score")
    measures = tuple(
        replace(m, index=i)
        for i, m in enumerate(score.measures[span.start_bar:span.end_bar])
    )
    return replace(score, measures=measures)
