"""
Canonical AST dump for debugging (`hotmend translate --dump-ast`).
"""
import dataclasses

import utilities

from .c_ast import ScalarType, StructRef, StringType, Signature, FunctionPointerType, SourceSpan, TranslationUnit

_SKIPPED_FIELDS = {'header', 'body_tokens', 'source', 'tokens'}


def _to_plain(value):
    if isinstance(value, (ScalarType, StructRef, StringType, Signature, FunctionPointerType)):
        return str(value)
    if isinstance(value, SourceSpan):
        return [value.start_line, value.end_line]
    if dataclasses.is_dataclass(value):
        plain = {'node': type(value).__name__}
        for field in dataclasses.fields(value):
            if field.name not in _SKIPPED_FIELDS:
                plain[field.name] = _to_plain(getattr(value, field.name))
        return plain
    if isinstance(value, (list, tuple)):
        return [_to_plain(item) for item in value]
    return value


def canonical_dump(unit: TranslationUnit) -> str:
    return utilities.canonical_text(_to_plain(unit))
