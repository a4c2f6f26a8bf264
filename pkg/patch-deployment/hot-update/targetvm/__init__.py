import sys
import os

# Add patch-deployment/ to the path so submodules can import utilities
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from .instructions import Instruction, SITE_OPCODES, SHADOW_OPCODES, OPCODES
from .program_image import (
    LoweredFunction,
    GlobalSpec,
    StructLayout,
    ProgramImage,
    ImageFormatError,
    render_image,
    load_image,
)
from .lowering import (
    LoweringError,
    BUILTINS,
    lower_function,
    lower_unit,
    global_spec,
    struct_layout,
    type_tag,
    convert_value,
    zero_value,
)
from .process import (
    TargetProcess,
    ThreadState,
    TraceEvent,
    CodeBlock,
    VMError,
    SiteError,
    load_program,
    format_message,
    READY,
    PARKED,
    DONE,
    FATAL_EXIT,
    ERROR,
    HALTED,
    FUNCTION_SYMBOL,
    TRAMPOLINE_SYMBOL,
    GLOBAL_SYMBOL,
)
from .scheduler import Scheduler
from .request_load import RequestLoad

__version__ = '1.0.0'
__author__ = 'hotmend maintainers'

__all__ = [
    'Instruction',
    'SITE_OPCODES',
    'SHADOW_OPCODES',
    'OPCODES',
    'LoweredFunction',
    'GlobalSpec',
    'StructLayout',
    'ProgramImage',
    'ImageFormatError',
    'render_image',
    'load_image',
    'LoweringError',
    'BUILTINS',
    'lower_function',
    'lower_unit',
    'global_spec',
    'struct_layout',
    'type_tag',
    'convert_value',
    'zero_value',
    'TargetProcess',
    'ThreadState',
    'TraceEvent',
    'CodeBlock',
    'VMError',
    'SiteError',
    'load_program',
    'format_message',
    'READY',
    'PARKED',
    'DONE',
    'FATAL_EXIT',
    'ERROR',
    'HALTED',
    'FUNCTION_SYMBOL',
    'TRAMPOLINE_SYMBOL',
    'GLOBAL_SYMBOL',
    'Scheduler',
    'RequestLoad',
]
