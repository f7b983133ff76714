"""Line counting, savings ratio and duplicate-line analysis.

Counting works on normalized lines: surrounding whitespace is trimmed, blank
lines and ``//``-only comment lines are dropped. Duplicates are counted per
extra occurrence of a distinct normalized line across the whole file set, so
three identical lines contribute two duplicates from one duplicated line.
Comment-only lines are excluded so the numbers stay stable under the
emitter's canonical formatting.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .diagnostics import Diagnostic, has_errors
from .emitter import pretty_print
from .model import BuildConfig
from .preprocessor import run_build


@dataclass(frozen=True)
class LineStats:
    files: int
    total_lines: int
    duplicate_lines: int
    unique_duplicated: int


@dataclass(frozen=True)
class SavingsReport:
    meta: LineStats
    generated: LineStats
    savings_ratio: float
    cumulative: tuple[int, ...]  # generated line total after each configuration
    breakeven: int | None  # 1-based configuration index, None if never reached


class BuildFailure(Exception):
    """A configuration failed to build while computing metrics."""

    def __init__(self, config_name: str, diagnostics: list[Diagnostic]):
        rendered = "; ".join(d.render() for d in diagnostics[:3])
        super().__init__(f"configuration '{config_name}' failed to build: {rendered}")
        self.config_name = config_name
        self.diagnostics = diagnostics


def normalize_lines(text: str) -> list[str]:
    kept = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("//"):
            continue
        kept.append(stripped)
    return kept


def _stats_from_counter(files: int, counts: Counter) -> LineStats:
    total = sum(counts.values())
    duplicated = {line: n for line, n in counts.items() if n >= 2}
    return LineStats(
        files=files,
        total_lines=total,
        duplicate_lines=sum(n - 1 for n in duplicated.values()),
        unique_duplicated=len(duplicated),
    )


def count_text_lines(texts: Sequence[str]) -> LineStats:
    """Line statistics over in-memory documents (one counter for the set)."""
    counts: Counter = Counter()
    for text in texts:
        counts.update(normalize_lines(text))
    return _stats_from_counter(len(texts), counts)


def count_lines(
    paths: Iterable[str | Path],
    on_error: Callable[[Path, OSError], None] | None = None,
) -> LineStats:
    """Line statistics over files; unreadable files are reported via
    ``on_error`` and the remaining files are still counted."""
    counts: Counter = Counter()
    files = 0
    for path in paths:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            if on_error is not None:
                on_error(path, exc)
            continue
        files += 1
        counts.update(normalize_lines(text))
    return _stats_from_counter(files, counts)


def savings_ratio(meta_total: int, generated_total: int) -> float:
    if generated_total == 0:
        return float("-inf")
    return 1.0 - meta_total / generated_total


def savings(
    meta_paths: Iterable[str | Path],
    configs: Sequence[BuildConfig],
    on_error: Callable[[Path, OSError], None] | None = None,
) -> SavingsReport:
    """Build every configuration and compare generated text against sources.

    ``meta_paths`` are the hand-written files (specs, refinements and
    configurations). Generated rules are rendered in canonical form and
    counted in memory; nothing is written. The cumulative series accumulates
    generated line totals in the given configuration order, and the
    breakeven index is the first configuration after which the cumulative
    total exceeds the hand-written total. Any failing build aborts with its
    diagnostics.
    """
    meta = count_lines(meta_paths, on_error)

    generated_texts: list[str] = []
    cumulative: list[int] = []
    running = 0
    for config in configs:
        result = run_build(config)
        if has_errors(result.diagnostics):
            raise BuildFailure(config.name, result.diagnostics)
        texts = [pretty_print(spec) for _, spec in result.generated]
        generated_texts.extend(texts)
        running += sum(len(normalize_lines(t)) for t in texts)
        cumulative.append(running)

    generated = count_text_lines(generated_texts)
    breakeven = None
    for index, total in enumerate(cumulative, start=1):
        if total > meta.total_lines:
            breakeven = index
            break

    return SavingsReport(
        meta=meta,
        generated=generated,
        savings_ratio=savings_ratio(meta.total_lines, generated.total_lines),
        cumulative=tuple(cumulative),
        breakeven=breakeven,
    )


def report_as_dict(report: SavingsReport) -> dict:
    """JSON-ready view of a savings report (schema in ``docs/formats.md``).

    The ratio is rounded to two decimals here; the in-memory report keeps
    full precision.
    """
    def stats(s: LineStats) -> dict:
        return {
            "files": s.files,
            "total_lines": s.total_lines,
            "duplicate_lines": s.duplicate_lines,
            "unique_duplicated": s.unique_duplicated,
        }

    return {
        "meta": stats(report.meta),
        "generated": stats(report.generated),
        "savings_ratio": round(report.savings_ratio, 2),
        "cumulative": list(report.cumulative),
        "breakeven": report.breakeven,
    }


def curve_as_csv(report: SavingsReport, config_names: Sequence[str]) -> str:
    """Per-configuration cumulative curve as CSV."""
    lines = ["configuration,cumulative_generated_lines"]
    for name, total in zip(config_names, report.cumulative):
        lines.append(f"{name},{total}")
    return "\n".join(lines) + "\n"
