"""
The keyboard-interactive overflow advisory, from source diff to a patched
process under load.
"""
import logging

import pytest

import utilities
from aspectdsl import compile_patch, parse_patch, insert_alarm, write_bundle, read_bundle
from targetvm import RequestLoad, DONE, FATAL_EXIT
from weaver import weave, unweave, check_bundle_atomicity, WOVEN, UNWOVEN
from .util import launch_fixture, serve, translate_fixture, EXPLOIT_NRESP

ADVISORY = 'CA-2002-18'
HANDLER = 'input_userauth_info_response'
ALARM_MESSAGE = 'sshd: oversized response count'


@pytest.fixture(scope="module")
def translation():
    translated = translate_fixture('sshd', 'sshd-ca-2002-18.patch', advisory=ADVISORY,
                                   description='response count overflow in keyboard-interactive auth')
    assert translated['patch'] is not None, translated['refused']
    return translated


def exploit(process, kind):
    thread, events = serve(process, 'serve_request', kind, EXPLOIT_NRESP)
    return thread, [e.detail for e in events if e.kind == 'mark']


@pytest.mark.acceptance
def test_advisory_is_patched_in_a_running_server(translation, tmp_path):
    patch_path = tmp_path / 'patch.dpatch'
    utilities.write_text(translation['patch_text'], str(patch_path))
    bundle = compile_patch(parse_patch(utilities.read_text(str(patch_path))))
    write_bundle(bundle, str(tmp_path / 'sshd.bundle'))
    bundle = read_bundle(str(tmp_path / 'sshd.bundle'))
    assert bundle.manifest['advisory'] == ADVISORY

    process = launch_fixture('sshd')
    for kind in (1, 2):
        thread, marks = exploit(process, kind)
        assert thread.status == DONE
        assert marks == ['heap_overflow']

    load = RequestLoad(process, [('serve_request', [1, 3]), ('serve_request', [2, 5])], executors=4)
    with load:
        report = weave(process, bundle, driver=load)
    assert report.outcome == WOVEN
    assert load.outcomes.get(FATAL_EXIT, 0) == 0

    for kind in (1, 2):
        thread, marks = exploit(process, kind)
        assert thread.status == FATAL_EXIT
        assert marks == []
    assert serve(process, 'serve_request', 1, 3)[0].status == DONE
    assert check_bundle_atomicity(process.events(), bundle) == []

    assert unweave(process, bundle.bundle_id).outcome == UNWOVEN
    thread, marks = exploit(process, 1)
    assert thread.status == DONE
    assert marks == ['heap_overflow']


@pytest.mark.acceptance
def test_alarm_fires_on_every_exploit_attempt(translation, caplog, monkeypatch):
    monkeypatch.setattr(logging.getLogger('hotmend'), 'propagate', True)
    caplog.set_level(logging.WARNING, logger='hotmend.targetvm')
    bundle = compile_patch(insert_alarm(translation['patch'], HANDLER, ALARM_MESSAGE))

    process = launch_fixture('sshd')
    assert weave(process, bundle).outcome == WOVEN

    for _ in range(10):
        thread, marks = exploit(process, 1)
        assert thread.status == FATAL_EXIT
        assert marks == []
    assert serve(process, 'serve_request', 1, 3)[0].status == DONE

    alarms = process.events('alarm')
    assert len(alarms) == 10
    assert {(e.symbol, e.detail) for e in alarms} == {(f"{HANDLER}_new", ALARM_MESSAGE)}
    assert len([r for r in caplog.records if ALARM_MESSAGE in r.getMessage()]) == 10

    # the PAM handler has no alarm attached
    thread, _ = exploit(process, 2)
    assert thread.status == FATAL_EXIT
    assert len(process.events('alarm')) == 10
