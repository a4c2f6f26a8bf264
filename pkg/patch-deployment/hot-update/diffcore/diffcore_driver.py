"""
High-level orchestration for the textual phase of translate:
read the diff, find each old file, and rebuild the post-patch source.
"""
import os
import sys
from dataclasses import dataclass

import utilities
from . import parse_unified_diff, apply_patch, strip_path_prefix
from .unified_diff import FileDelta

DEV_NULL = '/dev/null'


@dataclass(frozen=True)
class FileRevision:
    path: str          # path relative to the old tree
    old_text: str
    new_text: str
    delta: FileDelta


def locate_old_file(old_dir, delta_path):
    """
    Try the path as written, then with leading components stripped (-p1, -p2, ...).
    """
    candidate = delta_path
    while candidate:
        full_path = os.path.join(old_dir, candidate)
        if os.path.isfile(full_path):
            return candidate
        candidate = strip_path_prefix(candidate)
    return None


def run_diffcore_driver(old_dir, diff_path, stats_accumulator=None):
    print("Reading source patch", "=" * 40, file=sys.stderr)
    source_patch = parse_unified_diff(utilities.read_text(diff_path))
    print(f"Parsed {len(source_patch.deltas)} file section(s) from {diff_path}", file=sys.stderr)

    revisions = []
    for delta in source_patch.deltas:
        if delta.old_path == DEV_NULL:
            relative = strip_path_prefix(delta.new_path) or delta.new_path
            old_text = ''
        else:
            relative = locate_old_file(old_dir, delta.old_path)
            if relative is None:
                raise FileNotFoundError(f"File not found in {old_dir}: {delta.old_path}")
            old_text = utilities.read_text(os.path.join(old_dir, relative))

        new_text = apply_patch(old_text, delta)
        print(f"    {relative}: {len(delta.hunks)} hunk(s) applied", file=sys.stderr)
        revisions.append(FileRevision(relative, old_text, new_text, delta))

    if stats_accumulator is not None:
        stats_accumulator.add('diff.file_deltas', len(source_patch.deltas))
        stats_accumulator.add('diff.hunks', sum(len(d.hunks) for d in source_patch.deltas))

    return {
        'source_patch': source_patch,
        'revisions': revisions,
    }
