"""
Patch phase of translate (generation, rendering, audit) and the compile step.
"""
import logging
import sys

import utilities

from .generation import generate, merge_patches
from .dsl_grammar import render_patch, parse_patch
from .audit_report import render_audit
from .bundle_compiler import compile_patch, render_bundle

logger = logging.getLogger("hotmend.aspectdsl")


def run_aspectdsl_driver(analyses, advisory='', description='', stats_accumulator=None):
    """
    Generate, render and audit the dynamic patch of a classified revision.

    When a change is static only no patch is produced: 'patch' is None and
    'refused' lists the offending changes, but the audit is still rendered.
    """
    print("Generating dynamic patch", "=" * 40, file=sys.stderr)
    refused = [item for analysis in analyses for item in analysis.change_set.static_only]

    patches = []
    if not refused:
        for analysis in analyses:
            patch = generate(analysis.change_set, analysis.new_unit)
            print(f"    {analysis.path}: {len(patch.aspects)} aspect(s), {len(patch.functions)} function(s), "
                  f"{len(patch.globals)} global(s)", file=sys.stderr)
            patches.append(patch)
    else:
        for item in refused:
            print(f"    REFUSED {item.kind} {item.old_name}: {item.verdict.reason}", file=sys.stderr)

    patch = merge_patches(patches, advisory, description) if not refused else None
    audits = [
        render_audit(analysis.change_set, analysis.old_unit, analysis.new_unit,
                     patches[index] if patch is not None else None, title=analysis.path)
        for index, analysis in enumerate(analyses)
    ]

    if stats_accumulator is not None:
        stats_accumulator.add('patch.refused', len(refused))
        if patch is not None:
            stats_accumulator.add('patch.aspects', len(patch.aspects))
            stats_accumulator.add('patch.functions', len(patch.functions))
            stats_accumulator.add('patch.checks', len(patch.checks))

    return {
        'patch': patch,
        'patch_text': render_patch(patch) if patch is not None else None,
        'audit_text': "".join(audits),
        'refused': refused,
    }


def run_compile_driver(patch_path, stats_accumulator=None):
    print("Compiling dynamic patch", "=" * 40, file=sys.stderr)
    patch = parse_patch(utilities.read_text(patch_path))
    bundle = compile_patch(patch)
    print(f"    {bundle.bundle_id}: {len(bundle.functions)} function(s), {len(bundle.directives)} directive(s)",
          file=sys.stderr)
    print(f"    requires: {', '.join(bundle.required_symbols) or '(nothing)'}", file=sys.stderr)

    if stats_accumulator is not None:
        stats_accumulator.add('compile.functions', len(bundle.functions))
        stats_accumulator.add('compile.directives', len(bundle.directives))
        stats_accumulator.add('compile.required_symbols', len(bundle.required_symbols))

    return {
        'patch': patch,
        'bundle': bundle,
        'bundle_text': render_bundle(bundle),
    }
