"""
Semantic phase of translate: parse both versions of every patched file,
diff them structurally and classify the differences.
"""
import logging
import sys
from dataclasses import dataclass
from typing import List, Tuple

from csubset import TranslationUnit, RawChange, parse_translation_unit, semantic_diff, changed_line_coverage

from .change_set import SemanticChangeSet
from .classification import classify

logger = logging.getLogger("hotmend.classifier")


@dataclass(frozen=True)
class FileAnalysis:
    path: str
    old_unit: TranslationUnit
    new_unit: TranslationUnit
    raw_changes: Tuple[RawChange, ...]
    change_set: SemanticChangeSet
    uncovered_lines: Tuple[Tuple[str, int], ...]


def analyze_revision(revision) -> FileAnalysis:
    old_unit = parse_translation_unit(revision.old_text, revision.path)
    new_unit = parse_translation_unit(revision.new_text, revision.path)
    raw_changes = semantic_diff(old_unit, new_unit)
    change_set = classify(raw_changes, old_unit, new_unit)
    uncovered = changed_line_coverage(revision.delta, old_unit, new_unit, raw_changes)
    for side, line_number in uncovered:
        logger.warning("%s: changed %s line %d is not covered by any reported change",
                       revision.path, side, line_number)
    return FileAnalysis(revision.path, old_unit, new_unit, tuple(raw_changes), change_set, tuple(uncovered))


def combined_change_set(analyses: List[FileAnalysis]) -> SemanticChangeSet:
    return SemanticChangeSet(tuple(item for analysis in analyses for item in analysis.change_set))


def run_classifier_driver(revisions, stats_accumulator=None):
    print("Classifying changes", "=" * 40, file=sys.stderr)
    analyses = []
    for revision in revisions:
        analysis = analyze_revision(revision)
        print(f"    {revision.path}: {len(analysis.raw_changes)} change(s), "
              f"{len(analysis.change_set)} classified item(s)", file=sys.stderr)
        for item in analysis.change_set:
            print(f"      {item.kind:<26} {item.old_name:<40} {item.verdict}", file=sys.stderr)
            for warning in item.stale_reads:
                print(f"        WARNING {warning}", file=sys.stderr)
        analyses.append(analysis)

    change_set = combined_change_set(analyses)
    if stats_accumulator is not None:
        stats_accumulator.add('classify.raw_changes', sum(len(a.raw_changes) for a in analyses))
        stats_accumulator.add('classify.items', len(change_set))
        stats_accumulator.add('classify.static_only', len(change_set.static_only))
        stats_accumulator.add('classify.stale_reads', sum(len(i.stale_reads) for i in change_set))
        stats_accumulator.add('classify.uncovered_lines', sum(len(a.uncovered_lines) for a in analyses))

    return {
        'analyses': analyses,
        'change_set': change_set,
    }
