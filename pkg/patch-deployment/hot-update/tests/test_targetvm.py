import dataclasses

import pytest

from csubset import parse_translation_unit
from targetvm import (
    Instruction,
    LoweredFunction,
    ProgramImage,
    ImageFormatError,
    VMError,
    SiteError,
    Scheduler,
    RequestLoad,
    render_image,
    load_image,
    lower_unit,
    lower_function,
    load_program,
    format_message,
    DONE,
    ERROR,
    FATAL_EXIT,
    HALTED,
    READY,
)
from targetvm.instructions import CALL, CONST, RET, ALARM, FATAL, LOADSH, STORESH, LOADF
from .util import launch, launch_fixture, parse_fixture, serve, EXPLOIT_NRESP

PROGRAM = """\
int32_t
sum_to(int32_t n)
{
	int32_t total = 0;
	int32_t i = 0;

	while (1) {
		i += 1;
		if (i > n) {
			break;
		}
		if (i % 2 == 0) {
			continue;
		}
		total += i;
	}
	return total;
}

uint32_t
wrap(uint32_t x)
{
	x += 1;
	return x;
}

int32_t
divide(int32_t a, int32_t b)
{
	return a / b;
}

int32_t
remainder(int32_t a, int32_t b)
{
	return a % b;
}

int32_t
safe(int32_t a)
{
	if (a != 0 && 10 / a > 1) {
		return 1;
	}
	return 0;
}

void
check(uint32_t n)
{
	if (n > 10) {
		fatal("too many: %u", n);
	}
}

void
warn(void)
{
	ids_alarm("overflow attempt");
}

void
stop(void)
{
	halt();
}

int32_t
down(int32_t n)
{
	return down(n + 1);
}

int32_t
main(void)
{
	return 0;
}
"""

TRAMPOLINE_PROGRAM = """\
int32_t
f(void)
{
	return 1;
}

int32_t
g(void)
{
	return 2;
}
"""


def program():
    return launch(parse_translation_unit(PROGRAM, 'program.c'), name='program')


def run(process, entry, *args):
    thread = process.call(entry, list(args))
    process.reap(thread.tid)
    return thread


@pytest.mark.parametrize("entry, args, expected", [
    ('sum_to', [10], 25),
    ('sum_to', [0], 0),
    ('wrap', [0xFFFFFFFF], 0),
    ('wrap', [-1], 0),
    ('divide', [-7, 2], -3),
    ('divide', [7, -2], -3),
    ('remainder', [-7, 2], -1),
    ('safe', [0], 0),
    ('safe', [2], 1),
])
def test_c_semantics(entry, args, expected):
    thread = run(program(), entry, *args)
    assert thread.status == DONE, thread.message
    assert thread.result == expected


def test_fault_kills_only_the_thread():
    process = program()

    failed = run(process, 'divide', 1, 0)
    assert failed.status == ERROR
    assert failed.message == 'division by zero'

    assert run(process, 'divide', 6, 3).result == 2
    assert process.outcomes[ERROR] == 1
    assert process.outcomes[DONE] == 2


def test_fatal_formats_its_message():
    process = program()
    thread = run(process, 'check', 11)

    assert thread.status == FATAL_EXIT
    assert thread.message == 'too many: 11'
    assert [e.detail for e in process.events('fatal')] == ['too many: 11']
    assert run(process, 'check', 3).status == DONE


def test_host_alarm_is_traced():
    process = program()
    assert run(process, 'warn').status == DONE
    [alarm] = process.events('alarm')
    assert (alarm.symbol, alarm.detail) == ('warn', 'overflow attempt')


def test_halt_stops_every_thread():
    process = program()
    waiting = process.spawn_thread('sum_to', [5])

    assert run(process, 'stop').status == HALTED
    assert process.halted
    assert process.runnable() == []
    assert process.step(waiting) == HALTED


def test_unbounded_recursion_overflows_the_stack():
    thread = run(program(), 'down', 0)
    assert thread.status == ERROR
    assert thread.message == 'call stack overflow'


def test_wrong_arity_cannot_start():
    process = program()
    with pytest.raises(VMError, match='cannot start divide'):
        process.spawn_thread('divide', [1])
    with pytest.raises(VMError, match='cannot start nothing'):
        process.spawn_thread('nothing')
    assert process.live_threads() == []


@pytest.mark.parametrize("fmt, args, expected", [
    ("%u of %d", [3, -1], "3 of -1"),
    ("%x", [255], "ff"),
    ("%X", [255], "FF"),
    ("%lu%%", [5], "5%"),
    ("%s!", ['hi'], "hi!"),
    ("%zu", [7], "7"),
    ("no directives", [], "no directives"),
])
def test_format_message(fmt, args, expected):
    assert format_message(fmt, args) == expected


def test_sshd_overflow_is_reachable_on_both_paths():
    process = launch_fixture('sshd')

    for kind in (1, 2):
        thread, events = serve(process, 'serve_request', kind, EXPLOIT_NRESP)
        assert thread.status == DONE
        assert [e.detail for e in events if e.kind == 'mark'] == ['heap_overflow']

    thread, events = serve(process, 'serve_request', 1, 3)
    assert [e for e in events if e.kind == 'mark'] == []
    assert process.read_global('sessions_served') == 3
    assert process.heap[process.read_global('the_authctxt')].fields['responses'] == 3


def test_sites_of_direct_and_address_taken_functions():
    process = launch_fixture('sshd')

    [direct] = process.sites_of('input_userauth_info_response')
    assert process.block_at(direct).name == 'serve_request'
    assert process.instruction_at(direct).op == CALL

    [taken] = process.sites_of('input_userauth_info_response_pam')
    assert process.block_at(taken).name == 'serve_request'
    assert process.instruction_at(taken).op == 'LOADFN'


def test_rewrite_site_retargets_the_call():
    process = launch_fixture('sshd')
    before = process.image_bytes()
    [site] = process.sites_of('input_userauth_info_response')

    assert process.rewrite_site(site, 'input_userauth_info_response_pam') == 'input_userauth_info_response'
    assert process.image_bytes() != before

    _, events = serve(process, 'serve_request', 1, 3)
    assert ('input_userauth_info_response_pam', 'input_userauth_info_response_pam') in \
        [(e.symbol, e.detail) for e in events if e.kind == 'resolve']
    assert len(process.events('rewrite')) == 1


def test_rewrite_site_refuses_bad_targets():
    process = launch_fixture('sshd')
    entry = process.block_named('serve_request').base
    [site] = process.sites_of('input_userauth_info_response')

    with pytest.raises(SiteError, match='not a call site'):
        process.rewrite_site(entry, 'main')
    with pytest.raises(SiteError, match='not a code symbol'):
        process.rewrite_site(site, 'sessions_served')
    with pytest.raises(SiteError, match='no instruction'):
        process.rewrite_site(0x999999, 'main')


def test_equal_programs_have_equal_image_bytes():
    assert launch_fixture('sshd').image_bytes() == launch_fixture('sshd').image_bytes()
    assert launch_fixture('sshd').image_bytes() != launch_fixture('sshd', 'new').image_bytes()


def test_trampoline_follows_its_guard():
    process = launch(parse_translation_unit(TRAMPOLINE_PROGRAM, 't.c'), init=None)
    process.install_trampoline('f_tramp', 'bundle-1', 'g', 'f')

    assert run(process, 'f_tramp').result == 1
    process.set_guard('bundle-1', True)
    assert run(process, 'f_tramp').result == 2
    process.set_guard('bundle-1', False)
    assert run(process, 'f_tramp').result == 1
    assert [e.detail for e in process.events('guard')] == ['on', 'off']


def test_code_in_use_sees_frames_and_stored_pointers():
    process = launch_fixture('sshd')
    pam = process.block_named('input_userauth_info_response_pam').base
    direct = process.block_named('input_userauth_info_response').base

    assert not process.code_in_use(pam)
    serve(process, 'serve_request', 2, 3)
    assert process.code_in_use(pam)

    tid = process.spawn_thread('serve_request', [1, 3])
    while process.threads[tid].frames[-1].symbol != 'input_userauth_info_response':
        assert process.step(tid) == READY
    process.park(tid)
    assert process.stack_contains('input_userauth_info_response')
    assert process.code_in_use(direct)

    process.unpark(tid)
    assert process.run_thread(tid).status == DONE
    assert not process.stack_contains('input_userauth_info_response')
    assert not process.code_in_use(direct)


def test_removed_code_faults_the_thread_inside_it():
    process = launch_fixture('sshd')
    tid = process.spawn_thread('serve_request', [1, 3])
    while process.threads[tid].frames[-1].symbol != 'input_userauth_info_response':
        process.step(tid)

    process.remove_code('input_userauth_info_response')
    thread = process.run_thread(tid)
    assert thread.status == ERROR
    assert 'was removed' in thread.message


def test_symbols_cannot_be_redefined():
    process = launch_fixture('sshd')
    with pytest.raises(VMError, match='already defined'):
        process.install_function(LoweredFunction('main', (), 'int32', 0, (Instruction(RET, (None,)),)))


def test_unresolved_reference_fails_the_load():
    bad = LoweredFunction('f', (), 'void', 1, (
        Instruction(CALL, (0, 'missing', ())),
        Instruction(RET, (None,)),
    ))
    with pytest.raises(VMError, match='unresolved symbol missing'):
        load_program(ProgramImage('bad', functions=(bad,)))


def test_global_store_conversion_and_retype():
    process = launch_fixture('limits')

    assert process.read_global('quota') == 5000
    process.write_global('open_connections', 2 ** 31)
    assert process.read_global('open_connections') == -2 ** 31

    process.write_global('open_connections', 7)
    process.retype_global('open_connections', 'int64')
    assert process.read_global('open_connections') == 7
    process.write_global('open_connections', 2 ** 31)
    assert process.read_global('open_connections') == 2 ** 31
    assert [e.detail for e in process.events('retype')] == ['int32 -> int64']

    with pytest.raises(VMError, match='cannot retype'):
        process.retype_global('open_connections', 'struct session')


def test_shadow_field_lowering_and_storage():
    new_account = parse_fixture('session', 'new').function('account')
    lowered = lower_function(new_account, shadow_fields={('session', 'packets'): ('uint32', 0)})
    ops = [instruction.op for instruction in lowered.code]

    assert LOADSH in ops and STORESH in ops
    assert all(i.args[3] != 'packets' for i in lowered.code if i.op == LOADF)

    process = launch_fixture('session')
    process.install_function(dataclasses.replace(lowered, name='account_new'))
    assert run(process, 'account_new', 5).result == 1
    assert run(process, 'account_new', 5).result == 2
    assert list(process.shadow[('session', 'packets')]) == [process.read_global('current_session')]
    assert run(process, 'account', 5).result == 15


def test_alarms_are_raised_before_fatal():
    check = parse_translation_unit(PROGRAM, 'program.c').function('check')
    lowered = lower_function(check, alarms=('intrusion attempt',))
    ops = [instruction.op for instruction in lowered.code]

    assert ops.index(ALARM) < ops.index(FATAL)
    assert any(i.op == CONST and i.args[1] == 'intrusion attempt' for i in lowered.code)

    plain = lower_function(check)
    assert ALARM not in [instruction.op for instruction in plain.code]


def test_image_text_round_trip():
    image = lower_unit(parse_fixture('sshd', 'old'))
    text = render_image(image)

    assert load_image(text) == image
    assert render_image(load_image(text)) == text


@pytest.mark.parametrize("text", [
    "garbage\n{}",
    "HOTMEND-IMAGE v1\n{}",
    "HOTMEND-IMAGE v1\nnot json",
])
def test_malformed_image_is_rejected(text):
    with pytest.raises(ImageFormatError):
        load_image(text)


def test_instruction_text_and_symbols():
    call = Instruction(CALL, (0, 'f', (1, 2)))

    assert str(call) == 'CALL r0 f (r1, r2)'
    assert call.symbol == 'f'
    assert call.with_symbol('g').args == (0, 'g', (1, 2))
    assert Instruction(CONST, (0, 1)).symbol is None
    with pytest.raises(ValueError):
        Instruction.from_plain(['NOPE'])


def test_trace_limit_keeps_the_latest_events():
    unit = parse_translation_unit(PROGRAM, 'program.c')
    bounded = launch(unit, trace_limit=10)
    unbounded = launch(unit)
    for process in (bounded, unbounded):
        for n in range(1, 6):
            run(process, 'sum_to', n)

    everything = unbounded.events()
    assert len(everything) > 10
    assert bounded.events() == everything[-10:]
    assert bounded.events()[0].clock > everything[0].clock
    assert bounded.events()[-1].kind == 'return'


def test_status_summary():
    status = launch_fixture('sshd').status()
    assert status['functions'] == 5
    assert status['globals'] == 3
    assert status['live_threads'] == 0
    assert status['active_bundles'] == []
    assert not status['halted']


def schedule_trace(seed):
    process = program()
    tids = [process.spawn_thread('sum_to', [n]) for n in (5, 7, 9)]
    assert Scheduler(process, seed=seed).run_until_idle()
    return process.render_trace(), [process.threads[tid].result for tid in tids]


def test_scheduler_is_reproducible():
    first, results = schedule_trace(3)
    again, _ = schedule_trace(3)

    assert first == again
    assert results == [9, 16, 25]


def test_scheduler_hooks_and_idle_clock():
    process = program()
    tid = process.spawn_thread('sum_to', [10])
    process.park(tid)
    start = process.clock
    scheduler = Scheduler(process, seed=1)
    scheduler.at_step(start + 40, lambda p: p.unpark(tid))

    assert scheduler.run_until_idle()
    assert process.threads[tid].status == DONE
    assert process.threads[tid].result == 25
    assert process.clock >= start + 40


def test_scheduler_advances_clock_with_nothing_to_run():
    process = program()
    start = process.clock
    Scheduler(process).run(10)
    assert process.clock == start + 10


def test_scheduler_gives_up_after_max_steps():
    process = program()
    assert not Scheduler(process).run_until(lambda p: False, max_steps=5)
    with pytest.raises(ValueError):
        Scheduler(process, max_quantum=0)


def test_request_load_serves_requests_on_threads():
    process = program()
    load = RequestLoad(process, [('sum_to', [10]), ('divide', [6, 3])], executors=4, max_requests=20)
    load.start()
    load.join(timeout=30)

    assert not load.running
    assert load.served == 20
    assert load.outcomes[DONE] == 20
    assert process.live_threads() == []


def test_request_load_needs_requests():
    with pytest.raises(ValueError):
        RequestLoad(program(), [])
