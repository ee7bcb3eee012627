"""Song-level valence/energy/mode annotation and control-token injection.

Annotations come from a CSV file or a generic audio-features provider
(CSV-backed or HTTP). Continuous valence and energy (the arousal
surrogate) are split at the corpus medians into high/low song controls;
bar-level tension levels are injected right after every ``new_measure``.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import requests

from . import loops as loops_mod
from . import tension as tension_mod
from .score import Score, regularize_meter, score_to_tokens, tokens_to_score
from .tokens import Token, TokenCategory, control_token, parse_tokens, render_tokens

log = logging.getLogger(__name__)

SONG_CONTROL_ORDER = ("valence", "arousal", "mode")


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotationRecord:
    artist: str
    title: str
    valence: float
    energy: float  # arousal surrogate
    mode: str

    def __post_init__(self):
        if not 0.0 <= self.valence <= 1.0:
            raise AnnotationError(f"valence {self.valence} outside [0, 1]")
        if not 0.0 <= self.energy <= 1.0:
            raise AnnotationError(f"energy {self.energy} outside [0, 1]")
        if self.mode not in ("major", "minor"):
            raise AnnotationError(f"mode must be major or minor, got {self.mode!r}")


@dataclass(frozen=True)
class FeatureThresholds:
    valence_median: float
    arousal_median: float


def _normalize_key(artist: str, title: str) -> tuple[str, str]:
    return (" ".join(artist.casefold().split()), " ".join(title.casefold().split()))


def _parse_mode(value: str) -> str:
    v = value.strip().lower()
    if v in ("major", "1"):
        return "major"
    if v in ("minor", "0"):
        return "minor"
    raise AnnotationError(f"unknown mode {value!r}")


def load_annotations(path: str | Path) -> list[AnnotationRecord]:
    """Read ``artist,title,valence,energy,mode`` rows; duplicates last-win."""
    records: dict[tuple[str, str], AnnotationRecord] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = {"artist", "title", "valence", "energy", "mode"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise AnnotationError(f"annotations CSV must have header {sorted(expected)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = AnnotationRecord(
                    artist=row["artist"],
                    title=row["title"],
                    valence=float(row["valence"]),
                    energy=float(row["energy"]),
                    mode=_parse_mode(row["mode"]),
                )
            except (AnnotationError, ValueError) as exc:
                raise AnnotationError(f"line {lineno}: {exc}") from None
            key = _normalize_key(rec.artist, rec.title)
            if key in records:
                log.warning("duplicate annotation for %s - %s at line %d; keeping last",
                            rec.artist, rec.title, lineno)
            records[key] = rec
    return list(records.values())


class AudioFeaturesProvider(Protocol):
    def lookup(self, artist: str, title: str) -> AnnotationRecord | None: ...


class CsvFeaturesProvider:
    def __init__(self, path: str | Path):
        self._records = {_normalize_key(r.artist, r.title): r for r in load_annotations(path)}

    def lookup(self, artist: str, title: str) -> AnnotationRecord | None:
        return self._records.get(_normalize_key(artist, title))


class HttpFeaturesProvider:
    """Generic HTTP provider.

    ``endpoint_template`` is formatted with ``artist`` and ``title``; the
    endpoint must answer JSON with valence/energy/mode fields. The bearer
    token is read from the environment variable named by ``token_env``.
    """

    def __init__(self, endpoint_template: str, token_env: str = "LOOPTAB_FEATURES_TOKEN",
                 session: requests.Session | None = None, timeout: float = 10.0):
        self.endpoint_template = endpoint_template
        self.token_env = token_env
        self.session = session or requests.Session()
        self.timeout = timeout

    def lookup(self, artist: str, title: str) -> AnnotationRecord | None:
        url = self.endpoint_template.format(artist=artist, title=title)
        headers = {}
        tok = os.environ.get(self.token_env)
        if tok:
            headers["Authorization"] = f"Bearer {tok}"
        resp = self.session.get(url, headers=headers, timeout=self.timeout)
        if resp.status_code == 404:
            return None
        resp.raise_for_status()
        doc = resp.json()
        return AnnotationRecord(
            artist=artist,
            title=title,
            valence=float(doc["valence"]),
            energy=float(doc["energy"]),
            mode=_parse_mode(str(doc["mode"])),
        )


def fetch_annotations(provider: AudioFeaturesProvider,
                      songs: Sequence[tuple[str, str]],
                      retries: int = 3,
                      backoff: float = 0.5) -> tuple[list[AnnotationRecord], list[tuple[str, str]]]:
    """Look up every (artist, title); transport failures retry with
    exponential backoff before counting as a miss."""
    records, misses = [], []
    for artist, title in songs:
        rec = None
        for attempt in range(retries):
            try:
                rec = provider.lookup(artist, title)
                break
            except Exception as exc:  # transport failure
                if attempt + 1 == retries:
                    log.warning("lookup failed for %s - %s: %s", artist, title, exc)
                else:
                    time.sleep(backoff * (2 ** attempt))
        if rec is None:
            misses.append((artist, title))
        else:
            records.append(rec)
    return records, misses


def save_annotations(records: Iterable[AnnotationRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["artist", "title", "valence", "energy", "mode"])
        for r in records:
            writer.writerow([r.artist, r.title, r.valence, r.energy, r.mode])


def compute_thresholds(records: Sequence[AnnotationRecord]) -> FeatureThresholds:
    """Median valence and energy; even counts interpolate linearly."""
    if not records:
        raise AnnotationError("no records")

    def median(values: list[float]) -> float:
        s = sorted(values)
        n = len(s)
        mid = n // 2
        return s[mid] if n % 2 else (s[mid - 1] + s[mid]) / 2.0

    return FeatureThresholds(
        valence_median=median([r.valence for r in records]),
        arousal_median=median([r.energy for r in records]),
    )


def song_control_tokens(record: AnnotationRecord, thresholds: FeatureThresholds) -> list[Token]:
    """[valence, arousal, mode] controls; value >= threshold maps to high."""
    return [
        control_token("valence", "high" if record.valence >= thresholds.valence_median else "low"),
        control_token("arousal", "high" if record.energy >= thresholds.arousal_median else "low"),
        control_token("mode", record.mode),
    ]


def inject_controls(stream: list[Token], song_tokens: Sequence[Token],
                    profile: tension_mod.TensionProfile) -> list[Token]:
    """Prepend song controls and insert the three bar levels after every
    ``new_measure``. The profile must be discretized and match the bar count."""
    if profile.cd_levels is None:
        raise ValueError("profile has no levels; discretize it first")
    n_bars = sum(1 for t in stream if t.category is TokenCategory.STRUCTURE)
    if n_bars != len(profile):
        raise ValueError(f"stream has {n_bars} bars but profile covers {len(profile)}")
    out = list(song_tokens)
    bar = -1
    for t in stream:
        out.append(t)
        if t.category is TokenCategory.STRUCTURE:
            bar += 1
            out.append(control_token("cloud_diameter", profile.cd_levels[bar]))
            out.append(control_token("cloud_momentum", profile.cm_levels[bar]))
            out.append(control_token("tensile_strain", profile.ts_levels[bar]))
    return out


def strip_controls(stream: list[Token]) -> list[Token]:
    return [t for t in stream
            if t.category not in (TokenCategory.SONG_CONTROL, TokenCategory.BAR_CONTROL)]


@dataclass
class CorpusResult:
    lines: int = 0
    songs_used: int = 0
    skipped_no_annotation: int = 0
    skipped_no_loops: int = 0
    failed_files: int = 0


def feature_thresholds_to_json(thresholds: FeatureThresholds) -> str:
    return json.dumps({
        "format": "looptab-feature-thresholds",
        "version": 1,
        "valence_median": thresholds.valence_median,
        "arousal_median": thresholds.arousal_median,
        "high_rule": "value >= threshold",
    }, indent=2)


def feature_thresholds_from_json(text: str) -> FeatureThresholds:
    doc = json.loads(text)
    if doc.get("format") != "looptab-feature-thresholds":
        raise ValueError("not a feature thresholds document")
    return FeatureThresholds(doc["valence_median"], doc["arousal_median"])


def _song_key_for_file(path: Path, score: Score) -> tuple[str, str]:
    return (score.artist or "", score.title or path.stem)


def build_corpus(score_dir: str | Path,
                 annotations: Sequence[AnnotationRecord],
                 loop_params: loops_mod.LoopParams = loops_mod.DEFAULT_PARAMS,
                 spiral_params: tension_mod.SpiralParams = tension_mod.DEFAULT_PARAMS,
                 corpus_path: str | Path | None = None,
                 tension_thresholds_path: str | Path | None = None,
                 feature_thresholds_path: str | Path | None = None,
                 ) -> tuple[list[str], CorpusResult]:
    """End-to-end corpus construction.

    For every annotated ``*.tokens`` file: regularize to 4/4, extract loops,
    splice them, compute tension per loop, fit global quartiles over all
    spliced bars, discretize, inject song and bar controls, and emit one
    token line per loop. Deterministic given identical inputs.
    """
    by_key = {_normalize_key(r.artist, r.title): r for r in annotations}
    thresholds = compute_thresholds(annotations)
    result = CorpusResult()

    spliced: list[tuple[AnnotationRecord, Score]] = []
    for path in sorted(Path(score_dir).glob("*.tokens")):
        try:
            score = tokens_to_score(parse_tokens(path.read_text(encoding="utf-8")))
        except ValueError as exc:
            log.error("skipping %s: %s", path.name, exc)
            result.failed_files += 1
            continue
        artist, title = _song_key_for_file(path, score)
        rec = by_key.get(_normalize_key(artist, title))
        if rec is None:
            result.skipped_no_annotation += 1
            continue
        regular = regularize_meter(score)
        spans = loops_mod.extract_loops(regular, loop_params)
        if not spans:
            result.skipped_no_loops += 1
            continue
        result.songs_used += 1
        for span in spans:
            spliced.append((rec, loops_mod.splice_loop(regular, span)))

    profiles = [tension_mod.compute_tension_profile(s, spiral_params) for _, s in spliced]
    lines: list[str] = []
    if profiles:
        tension_thresholds = tension_mod.fit_tension_thresholds(profiles)
        for (rec, loop_score), profile in zip(spliced, profiles):
            leveled = tension_mod.discretize_profile(profile, tension_thresholds)
            stream = strip_controls(score_to_tokens(loop_score, include_artist=False))
            line = inject_controls(stream, song_control_tokens(rec, thresholds), leveled)
            lines.append(render_tokens(line))
    else:
        tension_thresholds = None
    result.lines = len(lines)

    if corpus_path is not None:
        Path(corpus_path).write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    if tension_thresholds_path is not None and tension_thresholds is not None:
        Path(tension_thresholds_path).write_text(
            tension_mod.thresholds_to_json(tension_thresholds), encoding="utf-8")
    if feature_thresholds_path is not None:
        Path(feature_thresholds_path).write_text(
            feature_thresholds_to_json(thresholds), encoding="utf-8")
    return lines, result
