import sys
import os

# Add patch-deployment/ to the path so submodules can import utilities
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from .type_plans import (
    TypeChangePlan,
    ShadowFieldPlan,
    plan_type_change,
    plan_shadow_field,
    default_initializer,
    WIDENING,
    NARROWING,
    NUMERIC_CLASS_CHANGE,
)

from .change_set import (
    ClassificationError,
    RuntimeCheck,
    Verdict,
    StaleReadWarning,
    ClassifiedChange,
    SemanticChangeSet,
    quiescence,
    value_fits,
    DYNAMICALLY_APPLICABLE,
    CONDITIONALLY_APPLICABLE,
    STATIC_ONLY,
    REPLACE_FUNCTION,
    TREAT_AS_NEW_FUNCTION,
    RETYPE_GLOBAL,
    SHADOW_FIELD,
    QUIESCENCE,
    VALUE_FITS,
)

from .classification import classify, replacement_name, LAYOUT_CHANGE_REASON, UNREACHABLE_ADDITION, UNREFERENCED_REMOVAL
from .stale_reads import check_stale_reads, added_statement_units
from .classifier_driver import FileAnalysis, analyze_revision, combined_change_set, run_classifier_driver

__all__ = [
    'TypeChangePlan',
    'ShadowFieldPlan',
    'plan_type_change',
    'plan_shadow_field',
    'default_initializer',
    'WIDENING',
    'NARROWING',
    'NUMERIC_CLASS_CHANGE',
    'ClassificationError',
    'RuntimeCheck',
    'Verdict',
    'StaleReadWarning',
    'ClassifiedChange',
    'SemanticChangeSet',
    'quiescence',
    'value_fits',
    'DYNAMICALLY_APPLICABLE',
    'CONDITIONALLY_APPLICABLE',
    'STATIC_ONLY',
    'REPLACE_FUNCTION',
    'TREAT_AS_NEW_FUNCTION',
    'RETYPE_GLOBAL',
    'SHADOW_FIELD',
    'QUIESCENCE',
    'VALUE_FITS',
    'classify',
    'replacement_name',
    'LAYOUT_CHANGE_REASON',
    'UNREACHABLE_ADDITION',
    'UNREFERENCED_REMOVAL',
    'check_stale_reads',
    'added_statement_units',
    'FileAnalysis',
    'analyze_revision',
    'combined_change_set',
    'run_classifier_driver',
]

__version__ = '1.0.0'
__author__ = 'hotmend maintainers'
