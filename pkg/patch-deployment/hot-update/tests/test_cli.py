import json
import logging
import os

import pandas as pd
import pytest

import utilities
import main
from aspectdsl import compile_patch, parse_patch
from .util import fixture_path

SSHD_PATCH = fixture_path('sshd-ca-2002-18.patch')
FLEET = fixture_path('fleet.yaml')


@pytest.fixture(autouse=True)
def restore_logging():
    yield
    logger = logging.getLogger('hotmend')
    logger.handlers.clear()
    logger.propagate = True
    logger.setLevel(logging.NOTSET)


def run(capsys, *argv):
    code = main.main([str(a) for a in argv])
    captured = capsys.readouterr()
    report = json.loads(captured.out) if captured.out.strip() else None
    return code, report, captured.err


def translate_sshd(capsys, out, *extra):
    return run(capsys, 'translate', '--old', fixture_path('sshd', 'old'), '--diff', SSHD_PATCH,
               '--out', out, '--advisory', 'CA-2002-18', *extra)


def test_translate_writes_patch_and_audit(capsys, tmp_path):
    code, report, err = translate_sshd(capsys, tmp_path)

    assert code == main.EXIT_OK
    assert report['aspects'] == 4
    assert os.path.exists(report['patch'])
    assert os.path.exists(report['audit'])
    assert json.loads(utilities.read_text(report['verdicts'])) == report['changes']
    assert [c['old_name'] for c in report['changes']['items']] == [
        'input_userauth_info_response',
        'input_userauth_info_response_pam',
    ]
    assert len(parse_patch(utilities.read_text(report['patch'])).aspects) == 4
    assert os.path.exists(tmp_path / 'hotmend_summary.json')
    assert 'Translating' in err


def test_translate_is_byte_identical_across_runs(capsys, tmp_path):
    translate_sshd(capsys, tmp_path / 'first')
    translate_sshd(capsys, tmp_path / 'second')

    for name in (main.PATCH_FILENAME, main.AUDIT_FILENAME, main.VERDICTS_FILENAME):
        assert (tmp_path / 'first' / name).read_bytes() == (tmp_path / 'second' / name).read_bytes()


def test_translate_dumps_syntax_trees(capsys, tmp_path):
    code, _, _ = translate_sshd(capsys, tmp_path, '--dump-ast')

    assert code == main.EXIT_OK
    for version in ('old', 'new'):
        dump = json.loads((tmp_path / main.AST_DIRNAME / f"sshd.c.{version}.json").read_text())
        assert dump['node'] == 'TranslationUnit'


def test_static_only_change_exits_2(capsys, tmp_path):
    code, report, _ = run(capsys, 'translate', '--old', fixture_path('session', 'old'),
                          '--diff', fixture_path('session-field-removed.patch'), '--out', tmp_path)

    assert code == main.EXIT_STATIC_ONLY
    assert 'patch' not in report
    assert len(report['refused']) == 1
    assert 'StructFieldRemoved' in report['refused'][0]
    assert not (tmp_path / main.PATCH_FILENAME).exists()
    assert (tmp_path / main.AUDIT_FILENAME).exists()
    verdicts = json.loads((tmp_path / main.VERDICTS_FILENAME).read_text())
    refused = [item for item in verdicts['items'] if item['verdict'] == 'StaticOnly']
    assert [item['kind'] for item in refused] == ['StructFieldRemoved']
    assert refused[0]['reason'] in report['refused'][0]


def test_empty_diff_gives_an_empty_patch(capsys, tmp_path):
    empty = tmp_path / 'empty.patch'
    empty.write_text('')
    code, report, _ = run(capsys, 'translate', '--old', fixture_path('sshd', 'old'), '--diff', empty,
                          '--out', tmp_path / 'out')

    assert code == main.EXIT_OK
    assert report['aspects'] == 0
    assert parse_patch(utilities.read_text(report['patch'])).aspects == ()


@pytest.mark.parametrize("diff_text", [
    "--- a/sshd.c\n+++ b/sshd.c\n@@ -1 +1 @@\n?bad\n",
    "--- a/sshd.c\n+++ b/sshd.c\n@@ -1 +1 @@\n-no such line\n+x\n",
])
def test_unusable_diff_exits_1(capsys, tmp_path, diff_text):
    diff_path = tmp_path / 'bad.patch'
    diff_path.write_text(diff_text)
    code, report, err = run(capsys, 'translate', '--old', fixture_path('sshd', 'old'), '--diff', diff_path,
                            '--out', tmp_path / 'out')

    assert code == main.EXIT_FAILURE
    assert report is None
    assert 'error:' in err


def test_missing_input_exits_1(capsys, tmp_path):
    code, _, err = run(capsys, 'translate', '--old', tmp_path / 'nowhere', '--diff', SSHD_PATCH, '--out', tmp_path)
    assert code == main.EXIT_FAILURE
    assert 'missing input' in err


def test_alarm_then_compile(capsys, tmp_path):
    _, translated, _ = translate_sshd(capsys, tmp_path)
    alarmed_path = tmp_path / 'alarmed.dpatch'

    code, report, _ = run(capsys, 'alarm', translated['patch'], '--target', 'input_userauth_info_response',
                          '--message', 'overflow attempt', '--out', alarmed_path)
    assert code == main.EXIT_OK
    assert report == {'patch': str(alarmed_path), 'aspect': 'alarm_input_userauth_info_response', 'aspects': 5}

    code, report, _ = run(capsys, 'compile', alarmed_path, '--out', tmp_path / 'sshd.bundle')
    assert code == main.EXIT_OK
    expected = compile_patch(parse_patch(utilities.read_text(str(alarmed_path))))
    assert report['bundle_id'] == expected.bundle_id


def test_alarm_on_an_unreplaced_function_exits_1(capsys, tmp_path):
    _, translated, _ = translate_sshd(capsys, tmp_path)
    code, _, err = run(capsys, 'alarm', translated['patch'], '--target', 'serve_request', '--message', 'x',
                       '--out', tmp_path / 'alarmed.dpatch')

    assert code == main.EXIT_FAILURE
    assert 'serve_request is not replaced' in err


@pytest.fixture
def bundle_path(capsys, tmp_path):
    _, translated, _ = translate_sshd(capsys, tmp_path / 'build')
    path = tmp_path / 'sshd.bundle'
    code, _, _ = run(capsys, 'compile', translated['patch'], '--out', path)
    assert code == main.EXIT_OK
    return path


def test_weave_under_load(capsys, bundle_path):
    code, report, _ = run(capsys, 'weave', bundle_path, '--process', 'sshd', '--config', FLEET,
                          '--settle', 20, '--wait-quiescent')

    assert code == main.EXIT_OK
    assert report['outcome'] == 'Woven'
    assert report['sites_rewritten'] == 2
    assert report['elapsed_us'] >= 0
    assert 'fatal' not in report['request_outcomes']


def test_weave_into_a_build_without_the_symbol_exits_1(capsys, bundle_path):
    code, report, _ = run(capsys, 'weave', bundle_path, '--process', 'sshd-nopam', '--config', FLEET)

    assert code == main.EXIT_FAILURE
    assert report['outcome'] == 'FailedSymbols'
    assert report['missing_symbols'] == ['input_userauth_info_response_pam']


def test_deploy_to_no_matching_node(capsys, bundle_path):
    code, report, _ = run(capsys, 'deploy', bundle_path, '--fleet', FLEET, '--nodes', 'staging-*')

    assert code == main.EXIT_OK
    assert report['nodes'] == []
    assert report['counts'] == {'Woven': 0, 'Failed': 0, 'Unreachable': 0}


def test_stats_csv_gains_a_row_per_run(capsys, tmp_path):
    csv_path = tmp_path / 'runs.csv'
    for name in ('a', 'b'):
        run(capsys, '--stats-csv', csv_path, 'translate', '--old', fixture_path('sshd', 'old'),
            '--diff', SSHD_PATCH, '--out', tmp_path / name)

    runs = pd.read_csv(csv_path)
    assert len(runs) == 2
    assert list(runs['command']) == ['translate', 'translate']
    assert list(runs['exit_code']) == [0, 0]
    assert list(runs['classify_items']) == [2, 2]
    assert list(runs['patch_aspects']) == [4, 4]


def test_unknown_command_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main.main(['frobnicate'])
    assert exc.value.code == 2
