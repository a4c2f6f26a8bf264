import sys
import os

# Add patch-deployment/ to the path so submodules can import utilities
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from .aspects import (
    Aspect,
    DynamicPatch,
    ReplacementFunction,
    GlobalDefinition,
    Declarations,
    CallSite,
    PointerRead,
    GlobalRead,
    GlobalWrite,
    FieldAccess,
    RedirectCall,
    SubstituteAddress,
    SubstituteValue,
    InvokeAlarm,
    ShadowStorage,
    PatchReferenceError,
    BEFORE,
    INSTEAD,
    MANUAL_ORIGIN,
    retype_expression,
    parse_retype,
    validate_patch,
)
from .generation import GenerationRefused, generate, merge_patches, replacement_source, render_declarations
from .dsl_grammar import PatchSyntaxError, parse_patch, render_patch
from .editing import insert_alarm
from .bundle_compiler import (
    PatchBundle,
    CompileError,
    compile_patch,
    render_bundle,
    bundle_bytes,
    load_bundle,
    read_bundle,
    write_bundle,
    REDIRECT_CALLS,
    SUBSTITUTE_ADDRESS,
    RETYPE_GLOBAL as RETYPE_DIRECTIVE,
    SHADOW_FIELD as SHADOW_DIRECTIVE,
    ALARM,
)
from .audit_report import render_audit
from .aspectdsl_driver import run_aspectdsl_driver, run_compile_driver

__all__ = [
    'Aspect',
    'DynamicPatch',
    'ReplacementFunction',
    'GlobalDefinition',
    'Declarations',
    'CallSite',
    'PointerRead',
    'GlobalRead',
    'GlobalWrite',
    'FieldAccess',
    'RedirectCall',
    'SubstituteAddress',
    'SubstituteValue',
    'InvokeAlarm',
    'ShadowStorage',
    'PatchReferenceError',
    'BEFORE',
    'INSTEAD',
    'MANUAL_ORIGIN',
    'retype_expression',
    'parse_retype',
    'validate_patch',
    'GenerationRefused',
    'generate',
    'merge_patches',
    'replacement_source',
    'render_declarations',
    'PatchSyntaxError',
    'parse_patch',
    'render_patch',
    'insert_alarm',
    'PatchBundle',
    'CompileError',
    'compile_patch',
    'render_bundle',
    'bundle_bytes',
    'load_bundle',
    'read_bundle',
    'write_bundle',
    'REDIRECT_CALLS',
    'SUBSTITUTE_ADDRESS',
    'RETYPE_DIRECTIVE',
    'SHADOW_DIRECTIVE',
    'ALARM',
    'render_audit',
    'run_aspectdsl_driver',
    'run_compile_driver',
]

__version__ = '1.0.0'
__author__ = 'hotmend maintainers'
