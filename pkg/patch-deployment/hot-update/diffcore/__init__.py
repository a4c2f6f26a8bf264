import sys
import os

# Add patch-deployment/ to the path so submodules can import utilities
# __file__ is at: patch-deployment/hot-update/diffcore/__init__.py
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from .unified_diff import (
    SourcePatch,
    FileDelta,
    Hunk,
    HunkLine,
    DiffParseError,
    parse_unified_diff,
    strip_path_prefix,
    CONTEXT,
    REMOVED,
    ADDED,
)

from .patch_apply import (
    ContextMismatchError,
    apply_patch,
    invert_delta,
)

from .diffcore_driver import (
    FileRevision,
    locate_old_file,
    run_diffcore_driver,
)

__all__ = [
    'SourcePatch',
    'FileDelta',
    'Hunk',
    'HunkLine',
    'DiffParseError',
    'parse_unified_diff',
    'strip_path_prefix',
    'CONTEXT',
    'REMOVED',
    'ADDED',
    'ContextMismatchError',
    'apply_patch',
    'invert_delta',
    'FileRevision',
    'locate_old_file',
    'run_diffcore_driver',
]

__version__ = '1.0.0'
__author__ = 'hotmend maintainers'
