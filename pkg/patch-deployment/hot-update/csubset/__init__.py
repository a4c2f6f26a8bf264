import sys
import os

# Add patch-deployment/ to the path so submodules can import utilities
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from .lexer import CParseError, UnsupportedConstructError, tokenize
from .c_ast import (
    SIGNED,
    UNSIGNED,
    FLOAT,
    ScalarType,
    StructRef,
    StringType,
    Signature,
    FunctionPointerType,
    SourceSpan,
    FunctionDef,
    GlobalVar,
    StructDef,
    Prototype,
    TranslationUnit,
    ALL_SCALAR_TYPES,
    scalar_type,
    c_type_text,
    qualified_name,
    unqualified,
)
from .c_parser import parse_syntax, TYPE_NAMES
from .name_resolution import resolve_names, qualify, PARAM, LOCAL, GLOBAL, FUNCTION, EXTERN
from .semantic_diff import (
    RawChange,
    semantic_diff,
    changed_line_coverage,
    RAW_CHANGE_KINDS,
    FUNCTION_ADDED,
    FUNCTION_REMOVED,
    FUNCTION_BODY_CHANGED,
    FUNCTION_SIGNATURE_CHANGED,
    GLOBAL_TYPE_CHANGED,
    GLOBAL_ADDED,
    GLOBAL_REMOVED,
    STRUCT_FIELD_ADDED,
    STRUCT_FIELD_REMOVED,
    STRUCT_FIELD_REORDERED,
    STRUCT_FIELD_RETYPED,
)
from .usage import FunctionUsage, function_usage, statement_usage, statement_units, transitive_usage, unit_usage
from .ast_dump import canonical_dump


def parse_translation_unit(source, filename='') -> TranslationUnit:
    """
    Parse and resolve one pre-expanded C source file.

    Raises CParseError (or UnsupportedConstructError) with file, line and column.
    """
    return resolve_names(parse_syntax(source, filename))


__all__ = [
    'CParseError',
    'UnsupportedConstructError',
    'tokenize',
    'SIGNED',
    'UNSIGNED',
    'FLOAT',
    'ScalarType',
    'StructRef',
    'StringType',
    'Signature',
    'FunctionPointerType',
    'SourceSpan',
    'FunctionDef',
    'GlobalVar',
    'StructDef',
    'Prototype',
    'TranslationUnit',
    'ALL_SCALAR_TYPES',
    'scalar_type',
    'c_type_text',
    'qualified_name',
    'unqualified',
    'TYPE_NAMES',
    'parse_syntax',
    'parse_translation_unit',
    'resolve_names',
    'qualify',
    'PARAM',
    'LOCAL',
    'GLOBAL',
    'FUNCTION',
    'EXTERN',
    'RawChange',
    'semantic_diff',
    'changed_line_coverage',
    'RAW_CHANGE_KINDS',
    'FUNCTION_ADDED',
    'FUNCTION_REMOVED',
    'FUNCTION_BODY_CHANGED',
    'FUNCTION_SIGNATURE_CHANGED',
    'GLOBAL_TYPE_CHANGED',
    'GLOBAL_ADDED',
    'GLOBAL_REMOVED',
    'STRUCT_FIELD_ADDED',
    'STRUCT_FIELD_REMOVED',
    'STRUCT_FIELD_REORDERED',
    'STRUCT_FIELD_RETYPED',
    'FunctionUsage',
    'function_usage',
    'statement_usage',
    'statement_units',
    'transitive_usage',
    'unit_usage',
    'canonical_dump',
]

__version__ = '1.0.0'
__author__ = 'hotmend maintainers'
