"""
Shared helpers: fixture paths and the translate/compile/launch steps the
tests build on.
"""
import os

import utilities
from csubset import parse_translation_unit
from diffcore import run_diffcore_driver
from classifier import run_classifier_driver
from aspectdsl import run_aspectdsl_driver, compile_patch
from targetvm import load_program, DONE

HOT_UPDATE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES_DIR = os.path.join(HOT_UPDATE_DIR, 'fixtures')

SOURCE_FILES = {
    'sshd': 'sshd.c',
    'limits': 'limits.c',
    'session': 'session.c',
    'stale': 'packet.c',
    'inventory': 'inventory.c',
}

EXPLOIT_NRESP = 0x40000001


def fixture_path(*parts):
    return os.path.join(FIXTURES_DIR, *parts)


def fixture_text(*parts):
    return utilities.read_text(fixture_path(*parts))


def source_path(family, version):
    return fixture_path(family, version, SOURCE_FILES[family])


def parse_fixture(family, version):
    return parse_translation_unit(utilities.read_text(source_path(family, version)), SOURCE_FILES[family])


def translate_fixture(family, patch_name, advisory='', description=''):
    """diffcore -> classifier -> aspectdsl on a committed fixture; returns the merged driver outputs."""
    diff_data = run_diffcore_driver(fixture_path(family, 'old'), fixture_path(patch_name))
    classified = run_classifier_driver(diff_data['revisions'])
    patch_data = run_aspectdsl_driver(classified['analyses'], advisory, description)
    return {**diff_data, **classified, **patch_data}


def compile_fixture(family, patch_name):
    translated = translate_fixture(family, patch_name)
    assert translated['patch'] is not None, translated['refused']
    return compile_patch(translated['patch'])


def launch(unit, name=None, init='main', trace_limit=None):
    process = load_program(unit, name=name, trace_limit=trace_limit)
    if init:
        thread = process.call(init)
        process.reap(thread.tid)
        assert thread.status == DONE, thread.message
    return process


def launch_fixture(family, version='old', init='main', trace_limit=None):
    return launch(parse_fixture(family, version), name=family, init=init, trace_limit=trace_limit)


def serve(process, entry, *args):
    """Run one request to completion and return (thread, events of that thread)."""
    thread = process.call(entry, list(args))
    process.reap(thread.tid)
    return thread, [e for e in process.events() if e.thread == thread.tid]


def event_kinds(events):
    return [e.kind for e in events]
