"""
Unified diff parsing.

A SourcePatch is the textual layer of the pipeline: a list of FileDelta, each
holding the hunks of one file in `diff -u` form. Only the unified format is
accepted; context-format diffs (`*** ` headers) are rejected.

Line endings are normalized to LF before anything else happens.
"""
import re
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from utilities import HotmendError

CONTEXT = ' '
REMOVED = '-'
ADDED = '+'

_HUNK_HEADER = re.compile(r'^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@(.*)$')
NO_NEWLINE_MARKER = '\\'


class DiffParseError(HotmendError):
    def __init__(self, message, line_number):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class HunkLine:
    tag: str
    text: str
    no_newline: bool = False


@dataclass(frozen=True)
class Hunk:
    old_start: int
    old_len: int
    new_start: int
    new_len: int
    lines: Tuple[HunkLine, ...]
    section: str = ''

    @property
    def old_first(self):
        # 1-based index of the first old line touched; an empty hunk sits after old_start.
        return self.old_start if self.old_len else self.old_start + 1

    @property
    def old_end(self):
        return self.old_first + self.old_len

    def changed_new_lines(self):
        """1-based line numbers of added lines in the new file."""
        numbers = []
        line_no = self.new_start if self.new_len else self.new_start + 1
        for line in self.lines:
            if line.tag == ADDED:
                numbers.append(line_no)
            if line.tag != REMOVED:
                line_no += 1
        return numbers

    def changed_old_lines(self):
        """1-based line numbers of removed lines in the old file."""
        numbers = []
        line_no = self.old_first
        for line in self.lines:
            if line.tag == REMOVED:
                numbers.append(line_no)
            if line.tag != ADDED:
                line_no += 1
        return numbers


@dataclass(frozen=True)
class FileDelta:
    old_path: str
    new_path: str
    hunks: Tuple[Hunk, ...] = ()


@dataclass(frozen=True)
class SourcePatch:
    deltas: Tuple[FileDelta, ...] = field(default_factory=tuple)


def normalize_newlines(text):
    return text.replace('\r\n', '\n').replace('\r', '\n')


def _header_path(line):
    # "--- a/sshd/auth2-chall.c\t2002-06-26 10:00:00" -> "a/sshd/auth2-chall.c"
    path = line[4:]
    if '\t' in path:
        path = path.split('\t', 1)[0]
    path = path.rstrip()
    if path.startswith('"') and path.endswith('"') and len(path) > 1:
        path = path[1:-1]
    return path


def _parse_hunk(lines, index, header_match):
    """Read one hunk starting after its header. Returns (Hunk, next_index)."""
    header_line_number = index
    old_start = int(header_match.group(1))
    old_len = int(header_match.group(2)) if header_match.group(2) is not None else 1
    new_start = int(header_match.group(3))
    new_len = int(header_match.group(4)) if header_match.group(4) is not None else 1
    section = header_match.group(5).strip()

    body: List[HunkLine] = []
    old_seen = 0
    new_seen = 0
    i = index + 1
    while old_seen < old_len or new_seen < new_len:
        if i >= len(lines):
            raise DiffParseError(
                f"truncated hunk (expected -{old_len}/+{new_len} lines, got -{old_seen}/+{new_seen})",
                i + 1)
        line = lines[i]
        # Some tools strip the single space of an empty context line.
        tag = line[0] if line else CONTEXT
        text = line[1:]
        if tag == CONTEXT:
            old_seen += 1
            new_seen += 1
        elif tag == REMOVED:
            old_seen += 1
        elif tag == ADDED:
            new_seen += 1
        elif tag == NO_NEWLINE_MARKER and body:
            body[-1] = HunkLine(body[-1].tag, body[-1].text, True)
            i += 1
            continue
        else:
            raise DiffParseError(
                f"inconsistent hunk line counts for hunk at line {header_line_number + 1}: "
                f"unexpected line {line[:40]!r}", i + 1)
        if old_seen > old_len or new_seen > new_len:
            raise DiffParseError(
                f"inconsistent hunk line counts for hunk at line {header_line_number + 1}", i + 1)
        body.append(HunkLine(tag, text))
        i += 1

    # The marker may follow the very last line of the hunk.
    if i < len(lines) and lines[i].startswith(NO_NEWLINE_MARKER) and body:
        body[-1] = HunkLine(body[-1].tag, body[-1].text, True)
        i += 1

    return Hunk(old_start, old_len, new_start, new_len, tuple(body), section), i


def _check_hunk_order(hunks, line_number):
    for previous, current in zip(hunks, hunks[1:]):
        if current.old_first < previous.old_end:
            raise DiffParseError(
                f"hunks out of order or overlapping (@@ -{previous.old_start} and @@ -{current.old_start})",
                line_number)


def parse_unified_diff(text) -> SourcePatch:
    """
    Parse unified diff text into a SourcePatch.

    Preamble lines (`diff -u ...`, `diff --git ...`, `Index: ...`, mail headers)
    between file sections are skipped. Errors carry the 1-based line number.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode('utf-8')
        except UnicodeDecodeError as e:
            raise DiffParseError(f"input is not UTF-8: {e}", 1) from e

    lines = normalize_newlines(text).split('\n')
    if lines and lines[-1] == '':
        lines.pop()

    deltas: List[FileDelta] = []
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith('*** ') or line.startswith('***************'):
            raise DiffParseError("context-format diffs are not supported (use diff -u)", i + 1)
        if line.startswith('@@'):
            raise DiffParseError("hunk without a file header", i + 1)
        if not line.startswith('--- '):
            i += 1
            continue

        header_line = i + 1
        old_path = _header_path(line)
        if i + 1 >= len(lines):
            raise DiffParseError("truncated file header (missing '+++' line)", i + 2)
        if not lines[i + 1].startswith('+++ '):
            raise DiffParseError("malformed header: '---' not followed by '+++'", i + 2)
        new_path = _header_path(lines[i + 1])
        i += 2

        hunks: List[Hunk] = []
        while i < len(lines) and lines[i].startswith('@@'):
            match = _HUNK_HEADER.match(lines[i])
            if not match:
                raise DiffParseError(f"malformed hunk header {lines[i]!r}", i + 1)
            hunk, i = _parse_hunk(lines, i, match)
            hunks.append(hunk)

        if not hunks:
            raise DiffParseError(f"file section for {new_path!r} has no hunks", header_line)
        _check_hunk_order(hunks, header_line)
        deltas.append(FileDelta(old_path, new_path, tuple(hunks)))

    return SourcePatch(tuple(deltas))


def strip_path_prefix(path, components=1) -> Optional[str]:
    """`-pN` semantics: drop the first N path components, None if nothing is left."""
    parts = path.split('/')
    if len(parts) <= components:
        return None
    return '/'.join(parts[components:])
