import pytest

from aspectdsl import compile_patch
from targetvm import Scheduler, DONE, FATAL_EXIT, READY
from weaver import (
    WeaveOptions,
    WeaveReport,
    WeaveError,
    weave,
    unweave,
    collect_retired,
    missing_symbols,
    woven_bundles,
    transaction_of,
    resolve_sites,
    await_quiescence,
    check_bundle_atomicity,
    run_weaver_driver,
    trampoline_name,
    WOVEN,
    UNWOVEN,
    FAILED_SYMBOLS,
    FAILED_VALUE_CHECK,
    TIMED_OUT_QUIESCENT,
    ACTIVATED,
)
from reporting import ReportAccumulator
from .util import launch_fixture, serve, translate_fixture, compile_fixture, EXPLOIT_NRESP

HANDLER = 'input_userauth_info_response'
PAM_HANDLER = 'input_userauth_info_response_pam'


@pytest.fixture(scope="module")
def narrow_bundle():
    return compile_fixture('limits', 'limits-narrow.patch')


@pytest.fixture(scope="module")
def widen_bundle():
    return compile_fixture('limits', 'limits-widen.patch')


@pytest.fixture(scope="module")
def shadow_bundle():
    return compile_fixture('session', 'session-field-added.patch')


def park_inside(process, symbol, entry_args=(1, 3)):
    """Start a request and park it once `symbol` is executing."""
    tid = process.spawn_thread('serve_request', list(entry_args))
    while process.threads[tid].frames[-1].symbol != symbol:
        assert process.step(tid) == READY
    process.park(tid)
    return tid


def test_weave_blocks_the_exploit_on_both_paths(sshd_bundle):
    process = launch_fixture('sshd')
    report = weave(process, sshd_bundle)

    assert report.outcome == WOVEN
    assert report.ok
    assert report.sites_rewritten == 2
    assert woven_bundles(process) == [sshd_bundle.bundle_id]
    assert transaction_of(process, sshd_bundle.bundle_id).phase == ACTIVATED

    for kind, name in ((1, HANDLER), (2, PAM_HANDLER)):
        thread, events = serve(process, 'serve_request', kind, EXPLOIT_NRESP)
        assert thread.status == FATAL_EXIT
        assert thread.message == f"{name}: nresp too big {EXPLOIT_NRESP}"
        assert 'mark' not in [e.kind for e in events]

    thread, _ = serve(process, 'serve_request', 1, 3)
    assert thread.status == DONE


def test_unweave_restores_the_original_image(sshd_bundle):
    process = launch_fixture('sshd')
    original = process.image_bytes()

    weave(process, sshd_bundle)
    serve(process, 'serve_request', 2, 3)
    report = unweave(process, sshd_bundle.bundle_id)

    assert report.outcome == UNWOVEN
    assert report.sites_rewritten == 2
    assert woven_bundles(process) == []
    # the dispatch table still points at the replacement until the next request resets it
    assert sshd_bundle.bundle_id in process.retired

    _, events = serve(process, 'serve_request', 2, EXPLOIT_NRESP)
    assert 'mark' in [e.kind for e in events]
    assert collect_retired(process) == 1
    assert process.retired == {}
    assert process.image_bytes() == original


def test_reweave_adopts_retired_code(sshd_bundle):
    process = launch_fixture('sshd')
    weave(process, sshd_bundle)
    serve(process, 'serve_request', 2, 3)
    unweave(process, sshd_bundle.bundle_id)

    assert weave(process, sshd_bundle).outcome == WOVEN
    thread, _ = serve(process, 'serve_request', 2, EXPLOIT_NRESP)
    assert thread.status == FATAL_EXIT
    assert sshd_bundle.bundle_id not in process.retired


def test_missing_symbol_leaves_the_process_untouched(sshd_bundle):
    process = launch_fixture('sshd', 'nopam')
    original = process.image_bytes()

    report = weave(process, sshd_bundle)

    assert report.outcome == FAILED_SYMBOLS
    assert report.missing_symbols == (PAM_HANDLER,)
    assert report.sites_rewritten == 0
    assert not report.ok
    assert process.image_bytes() == original
    assert woven_bundles(process) == []
    assert 'missing' in str(report)


def test_missing_symbols_lists_every_problem(sshd_bundle):
    process = launch_fixture('limits')
    missing = missing_symbols(process, sshd_bundle)

    assert HANDLER in missing
    assert PAM_HANDLER in missing
    assert 'struct authctxt.responses' in missing


def test_second_bundle_cannot_take_a_held_symbol(sshd_bundle):
    other = compile_patch(translate_fixture('sshd', 'sshd-ca-2002-18.patch', advisory='other')['patch'])
    assert other.bundle_id != sshd_bundle.bundle_id

    process = launch_fixture('sshd')
    weave(process, sshd_bundle)
    report = weave(process, other)

    assert report.outcome == FAILED_SYMBOLS
    assert f"{HANDLER} (held by {sshd_bundle.bundle_id})" in report.missing_symbols


def test_weaving_twice_or_unweaving_nothing_is_an_error(sshd_bundle):
    process = launch_fixture('sshd')
    weave(process, sshd_bundle)

    with pytest.raises(WeaveError, match='already woven'):
        weave(process, sshd_bundle)
    with pytest.raises(WeaveError, match='not woven'):
        unweave(process, 'hm-000000000000')
    with pytest.raises(WeaveError):
        transaction_of(process, 'hm-000000000000')


def test_immediate_activation_without_active_frames(sshd_bundle):
    process = launch_fixture('sshd')
    scheduler = Scheduler(process, seed=4)
    report = weave(process, sshd_bundle, WeaveOptions(wait_for_quiescence=True, quiescence_timeout=1.0),
                   driver=scheduler)

    assert report.outcome == WOVEN
    assert report.waited_steps == 0
    assert not report.deferred


def test_activation_is_deferred_until_the_handler_returns(sshd_bundle):
    process = launch_fixture('sshd')
    tid = park_inside(process, HANDLER)
    scheduler = Scheduler(process, seed=2)
    release_at = process.clock + 200
    scheduler.at_step(release_at, lambda p: p.unpark(tid))

    report = weave(process, sshd_bundle, WeaveOptions(wait_for_quiescence=True, quiescence_timeout=1.0),
                   driver=scheduler)

    assert report.outcome == WOVEN
    assert report.deferred
    assert report.activated_at >= release_at
    assert scheduler.run_until_idle()
    assert process.threads[tid].status == DONE
    assert 'activation deferred' in str(report)
    assert check_bundle_atomicity(process.events(), sshd_bundle) == []


def test_quiescence_timeout_rolls_back(sshd_bundle):
    process = launch_fixture('sshd')
    tid = park_inside(process, HANDLER, (1, EXPLOIT_NRESP))
    original = process.image_bytes()

    report = weave(process, sshd_bundle, WeaveOptions(wait_for_quiescence=True, quiescence_timeout=0.001),
                   driver=Scheduler(process, seed=9))

    assert report.outcome == TIMED_OUT_QUIESCENT
    assert report.symbol == HANDLER
    assert report.waited_steps >= 1000
    assert report.to_plain()['symbol'] == HANDLER
    assert process.image_bytes() == original
    assert woven_bundles(process) == []

    process.unpark(tid)
    assert process.run_thread(tid).status == DONE
    assert 'heap_overflow' in [e.detail for e in process.events('mark')]


def test_await_quiescence():
    process = launch_fixture('sshd')
    tid = park_inside(process, HANDLER)
    scheduler = Scheduler(process)

    assert not await_quiescence(process, HANDLER, timeout=0.0001, driver=scheduler)
    assert await_quiescence(process, [PAM_HANDLER], timeout=0.0001, driver=scheduler)
    process.unpark(tid)
    assert await_quiescence(process, HANDLER, timeout=0.01, driver=scheduler)


def test_checked_narrowing_weaves_when_the_value_fits(narrow_bundle):
    process = launch_fixture('limits')
    report = weave(process, narrow_bundle)

    assert report.outcome == WOVEN
    assert process.cells['quota'].type_tag == 'int32'
    assert process.read_global('quota') == 5000

    assert unweave(process, narrow_bundle.bundle_id).outcome == UNWOVEN
    assert process.cells['quota'].type_tag == 'int64'


def test_checked_narrowing_refuses_a_value_that_does_not_fit(narrow_bundle):
    process = launch_fixture('limits')
    process.write_global('quota', 2 ** 40)
    original = process.image_bytes()

    report = weave(process, narrow_bundle)

    assert report.outcome == FAILED_VALUE_CHECK
    assert (report.symbol, report.value, report.target_type) == ('quota', 2 ** 40, 'int32')
    assert report.to_plain()['value'] == 2 ** 40
    assert process.cells['quota'].type_tag == 'int64'
    assert process.read_global('quota') == 2 ** 40
    assert process.image_bytes() == original
    assert woven_bundles(process) == []


def test_widening_unweave_checks_the_old_type(widen_bundle):
    process = launch_fixture('limits')
    assert weave(process, widen_bundle).outcome == WOVEN
    assert process.cells['open_connections'].type_tag == 'int64'

    process.write_global('open_connections', 2 ** 40)
    assert process.read_global('open_connections') == 2 ** 40
    refused = unweave(process, widen_bundle.bundle_id)
    assert refused.outcome == FAILED_VALUE_CHECK
    assert refused.target_type == 'int32'
    assert woven_bundles(process) == [widen_bundle.bundle_id]

    process.write_global('open_connections', 7)
    assert unweave(process, widen_bundle.bundle_id).outcome == UNWOVEN
    assert process.cells['open_connections'].type_tag == 'int32'
    assert process.read_global('open_connections') == 7


def test_shadow_field_lives_beside_the_struct(shadow_bundle):
    process = launch_fixture('session')
    layout = process.structs['session']
    assert weave(process, shadow_bundle).outcome == WOVEN

    trampoline = transaction_of(process, shadow_bundle.bundle_id).trampolines['account']
    assert trampoline == trampoline_name(shadow_bundle.bundle_id, 'account')
    assert [serve(process, trampoline, 5)[0].result for _ in range(3)] == [1, 2, 3]
    assert process.structs['session'] == layout
    assert ('session', 'packets') in process.shadow

    assert unweave(process, shadow_bundle.bundle_id).outcome == UNWOVEN
    assert ('session', 'packets') not in process.shadow
    assert serve(process, 'account', 5)[0].result == 20


def test_collapse_points_sites_at_the_replacements(sshd_bundle):
    process = launch_fixture('sshd')
    report = weave(process, sshd_bundle, WeaveOptions(collapse_trampolines=True))
    replacements = sshd_bundle.replacements()

    assert report.outcome == WOVEN
    assert transaction_of(process, sshd_bundle.bundle_id).collapsed
    [site] = resolve_sites(process, replacements[HANDLER])
    assert process.block_at(site).name == 'serve_request'
    assert serve(process, 'serve_request', 1, EXPLOIT_NRESP)[0].status == FATAL_EXIT

    assert unweave(process, sshd_bundle.bundle_id).outcome == UNWOVEN
    assert resolve_sites(process, HANDLER) == [site]


def test_site_index_follows_rewrites():
    process = launch_fixture('sshd')
    [site] = resolve_sites(process, HANDLER)
    process.rewrite_site(site, PAM_HANDLER)

    assert resolve_sites(process, HANDLER) == []
    assert site in resolve_sites(process, PAM_HANDLER)


def test_report_round_trip_and_options():
    report = WeaveReport('hm-0123456789ab', FAILED_VALUE_CHECK, symbol='quota', value=7, target_type='int8')
    assert WeaveReport.from_plain(report.to_plain()) == report

    options = WeaveOptions(wait_for_quiescence=True, quiescence_timeout=2.5, collapse_trampolines=True)
    assert WeaveOptions.from_plain(options.to_plain()) == options
    assert WeaveOptions.from_plain(None) == WeaveOptions()
    with pytest.raises(ValueError):
        WeaveOptions(quiescence_timeout=-1)


def test_weave_under_request_load(sshd_bundle, tmp_path):
    process = launch_fixture('sshd')
    stats = ReportAccumulator(str(tmp_path), command='weave')

    woven = run_weaver_driver(sshd_bundle, process, requests=[('serve_request', [1, 3]), ('serve_request', [2, 5])],
                              executors=4, settle_requests=50, stats_accumulator=stats)

    assert woven['report'].outcome == WOVEN
    assert woven['outcomes'].get(DONE, 0) >= 4
    assert FATAL_EXIT not in woven['outcomes']
    assert stats.get('weave.outcome') == WOVEN
    assert stats.get('weave.sites_rewritten') == 2
    assert check_bundle_atomicity(process.events(), sshd_bundle) == []


CYCLES_PER_SEED = 1000


class BusyScheduler(Scheduler):
    """Keeps a few requests in flight, mixing benign and hostile ones."""

    def __init__(self, process, seed, in_flight=4):
        super().__init__(process, seed)
        self.in_flight = in_flight
        self.spawning = True

    def tick(self):
        for tid in list(self.process.threads):
            self.process.reap(tid)
        if self.spawning and len(self.process.live_threads()) < self.in_flight:
            kind = self.random.choice((1, 2))
            nresp = self.random.choice((3, 5, EXPLOIT_NRESP))
            self.process.spawn_thread('serve_request', [kind, nresp])
        return super().tick()


@pytest.mark.stress
@pytest.mark.parametrize("seed", range(50))
def test_weave_unweave_cycles_stay_atomic(sshd_bundle, seed):
    process = launch_fixture('sshd')
    original = process.image_bytes()
    scheduler = BusyScheduler(process, seed)
    options = WeaveOptions(wait_for_quiescence=True, quiescence_timeout=0.005)

    for _ in range(CYCLES_PER_SEED):
        scheduler.run(scheduler.random.randint(0, 20))
        report = weave(process, sshd_bundle, options, driver=scheduler)
        assert report.outcome in (WOVEN, TIMED_OUT_QUIESCENT)
        scheduler.run(scheduler.random.randint(0, 20))
        if report.outcome == WOVEN:
            assert unweave(process, sshd_bundle.bundle_id, driver=scheduler).outcome == UNWOVEN

    assert check_bundle_atomicity(process.events(), sshd_bundle) == []

    scheduler.spawning = False
    assert scheduler.run_until_idle()
    for tid in list(process.threads):
        process.reap(tid)
    serve(process, 'serve_request', 2, 3)
    collect_retired(process)
    assert process.retired == {}
    assert process.image_bytes() == original
