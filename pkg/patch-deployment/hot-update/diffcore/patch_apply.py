"""
Exact application of a FileDelta to a source text.

No fuzz and no offset drift: every context and removed line must sit at the
coordinates the hunk states, otherwise the patch does not belong to this
version of the source.
"""
from utilities import HotmendError

from .unified_diff import ADDED, CONTEXT, REMOVED, FileDelta, Hunk, HunkLine, normalize_newlines


class ContextMismatchError(HotmendError):
    def __init__(self, hunk_number, line_number, expected, found):
        super().__init__(
            f"context mismatch at hunk {hunk_number}, line {line_number}: "
            f"expected {expected!r}, found {found!r}")
        self.hunk_number = hunk_number
        self.line_number = line_number


def _rendered(line: HunkLine):
    return line.text if line.no_newline else line.text + '\n'


def apply_patch(old_source, delta: FileDelta) -> str:
    """
    Apply `delta` to `old_source` and return the patched text.
    """
    old_lines = normalize_newlines(old_source).splitlines(keepends=True)
    output = []
    cursor = 0

    for hunk_number, hunk in enumerate(delta.hunks, start=1):
        start = hunk.old_first - 1
        if start < cursor or start > len(old_lines):
            raise ContextMismatchError(hunk_number, hunk.old_first, "<hunk start>",
                                       f"<{len(old_lines)} lines>")
        output.extend(old_lines[cursor:start])
        position = start

        for line in hunk.lines:
            if line.tag in (CONTEXT, REMOVED):
                expected = _rendered(line)
                found = old_lines[position] if position < len(old_lines) else None
                if found != expected:
                    raise ContextMismatchError(hunk_number, position + 1, expected, found)
                position += 1
            if line.tag in (CONTEXT, ADDED):
                output.append(_rendered(line))
        cursor = position

    output.extend(old_lines[cursor:])
    return ''.join(output)


def invert_delta(delta: FileDelta) -> FileDelta:
    """The delta that takes the patched file back to the original."""
    swap = {ADDED: REMOVED, REMOVED: ADDED, CONTEXT: CONTEXT}
    hunks = tuple(
        Hunk(
            old_start=hunk.new_start,
            old_len=hunk.new_len,
            new_start=hunk.old_start,
            new_len=hunk.old_len,
            lines=tuple(HunkLine(swap[line.tag], line.text, line.no_newline) for line in hunk.lines),
            section=hunk.section,
        )
        for hunk in delta.hunks
    )
    return FileDelta(delta.new_path, delta.old_path, hunks)
