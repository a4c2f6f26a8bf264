import io
import os
import socket
import time

import pytest
import yaml

from utilities import ConfigError
from aspectdsl import render_bundle, write_bundle
from weaver import WeaveOptions, WOVEN, FAILED_SYMBOLS
from fleet import (
    ProtocolError,
    FRAME_HEADER,
    MAX_FRAME_BYTES,
    PING,
    LIST,
    WEAVE,
    UNWEAVE,
    STATUS,
    PONG,
    ERROR,
    make_request,
    make_reply,
    make_error,
    reply_type,
    validate_message,
    encode_frame,
    decode_payload,
    read_frame,
    write_frame,
    fleet_config_from_plain,
    load_fleet_config,
    launch_process,
    NodeSpec,
    NodeAgent,
    HostedProcess,
    start_agent,
    stop_agent,
    AgentClient,
    FleetJob,
    deploy,
    query_node,
    run_fleet_driver,
    PENDING,
    NODE_WOVEN,
    FAILED,
    UNREACHABLE,
)
from reporting import ReportAccumulator
from .util import fixture_path, launch_fixture, source_path, EXPLOIT_NRESP

PAM_HANDLER = 'input_userauth_info_response_pam'


def frames(*messages):
    buffer = io.BytesIO()
    for message in messages:
        write_frame(buffer, message)
    buffer.seek(0)
    return buffer


def free_port():
    with socket.socket() as sock:
        sock.bind(('127.0.0.1', 0))
        return sock.getsockname()[1]


def sshd_agent(node_id, version='old', agent_class=NodeAgent):
    return agent_class(node_id, {'sshd': HostedProcess(launch_fixture('sshd', version))})


# ------------------------------------------------------------------ wire

def test_frames_carry_a_length_prefix():
    request = make_request(PING)
    encoded = encode_frame(request)

    (length,) = FRAME_HEADER.unpack(encoded[:FRAME_HEADER.size])
    assert length == len(encoded) - FRAME_HEADER.size
    assert read_frame(io.BytesIO(encoded)) == request


def test_stream_of_frames_then_clean_end():
    first, second = make_request(PING), make_request(STATUS)
    stream = frames(first, second)

    assert read_frame(stream) == first
    assert read_frame(stream) == second
    assert read_frame(stream) is None


def test_replies_keep_the_correlation_id():
    request = make_request(WEAVE, {'bundle': 'x'})
    assert make_reply(request)['id'] == request['id']
    assert make_reply(request)['type'] == 'WEAVE_OK'
    assert reply_type(PING) == PONG
    assert make_error('boom', request['id'])['body'] == {'error': 'boom'}
    assert make_request(PING)['id'] != make_request(PING)['id']


@pytest.mark.parametrize("message", [
    {'version': 1, 'type': PING, 'body': {}},
    {'version': 2, 'type': PING, 'id': 'a', 'body': {}},
    {'version': 1, 'type': 'HELLO', 'id': 'a', 'body': {}},
    {'version': 1, 'type': WEAVE, 'id': 'a', 'body': {}},
    {'version': 1, 'type': UNWEAVE, 'id': 'a', 'body': {'process': 'sshd'}},
    {'version': 1, 'type': ERROR, 'id': 'a', 'body': {}},
    {'version': 1, 'type': PING, 'id': 'a', 'body': {}, 'extra': True},
])
def test_invalid_messages_are_rejected(message):
    with pytest.raises(ProtocolError) as exc:
        validate_message(message)
    assert not exc.value.fatal


def test_invalid_message_keeps_its_id_for_the_error_reply():
    with pytest.raises(ProtocolError) as exc:
        validate_message({'version': 1, 'type': WEAVE, 'id': 'c-7', 'body': {}})
    assert exc.value.correlation_id == 'c-7'


def test_payload_that_is_not_json():
    with pytest.raises(ProtocolError, match='not JSON'):
        decode_payload(b'{nope')
    with pytest.raises(ProtocolError, match='not JSON'):
        decode_payload(b'\xff\xfe')


def test_bad_payload_leaves_the_stream_aligned():
    payload = b'{nope'
    stream = io.BytesIO(FRAME_HEADER.pack(len(payload)) + payload + encode_frame(make_request(PING)))

    with pytest.raises(ProtocolError) as exc:
        read_frame(stream)
    assert not exc.value.fatal
    assert read_frame(stream)['type'] == PING


@pytest.mark.parametrize("data", [
    b'\x00\x00',
    FRAME_HEADER.pack(10) + b'{}',
    FRAME_HEADER.pack(MAX_FRAME_BYTES + 1),
])
def test_truncated_or_oversized_frames_are_fatal(data):
    with pytest.raises(ProtocolError) as exc:
        read_frame(io.BytesIO(data))
    assert exc.value.fatal


# ---------------------------------------------------------------- config

def test_fleet_fixture_loads():
    config = load_fleet_config(fixture_path('fleet.yaml'))

    assert [n.node_id for n in config.nodes] == ['node-a', 'node-b', 'node-c']
    assert config.node('node-c').processes == ('sshd-nopam',)
    assert config.node('node-a').address == '127.0.0.1:7401'
    assert config.reply_timeout == 30.0

    sshd = config.process('sshd')
    assert sshd.source == source_path('sshd', 'old')
    assert sshd.request_load() == [('serve_request', [1, 3]), ('serve_request', [2, 5])]
    assert sshd.threads == 2

    with pytest.raises(ConfigError):
        config.node('node-z')
    with pytest.raises(ConfigError):
        config.process('httpd')


@pytest.mark.parametrize("node_filter, expected", [
    (None, ['node-a', 'node-b', 'node-c']),
    ('', ['node-a', 'node-b', 'node-c']),
    ('node-*', ['node-a', 'node-b', 'node-c']),
    ('node-a, node-c', ['node-a', 'node-c']),
    ('node-[ab]', ['node-a', 'node-b']),
    ('other', []),
])
def test_select_nodes(node_filter, expected):
    config = load_fleet_config(fixture_path('fleet.yaml'))
    assert [n.node_id for n in config.select_nodes(node_filter)] == expected


@pytest.mark.parametrize("plain, message", [
    ({}, "'version' is a required property"),
    ({'version': 2}, 'version'),
    ({'version': 1, 'nodes': [{'id': 'a', 'address': 'nowhere'}]}, 'nodes/0/address'),
    ({'version': 1, 'nodes': [{'id': 'a', 'address': 'h:1'}, {'id': 'a', 'address': 'h:2'}]}, 'listed twice'),
    ({'version': 1, 'nodes': [{'id': 'a', 'address': 'h:1', 'processes': ['sshd']}]}, "unknown process 'sshd'"),
    ({'version': 1, 'processes': {'sshd': {'source': 's.c'}}}, "'entry' is a required property"),
    ({'version': 1, 'timeouts': {'reply': 0}}, 'timeouts/reply'),
])
def test_config_errors_name_the_problem(plain, message):
    with pytest.raises(ConfigError, match=message):
        fleet_config_from_plain(plain, 'fleet.yaml')


def test_launch_process_runs_init():
    config = load_fleet_config(fixture_path('fleet.yaml'))
    process = launch_process(config.process('sshd'))

    assert process.name == 'sshd'
    assert process.status()['functions'] == 5
    assert process.live_threads() == []


# ----------------------------------------------------------------- agent

def test_agent_handles_every_request(sshd_bundle):
    agent = sshd_agent('node-a')

    pong = agent.handle(make_request(PING))
    assert (pong['type'], pong['body']['agent']) == (PONG, 'node-a')

    listing = agent.handle(make_request(LIST))['body']['processes']['sshd']
    assert PAM_HANDLER in listing['functions']
    assert 'sessions_served' in listing['globals']

    woven = agent.handle(make_request(WEAVE, {'bundle': render_bundle(sshd_bundle)}))
    assert woven['type'] == 'WEAVE_OK'
    assert woven['body']['reports']['sshd']['outcome'] == WOVEN

    status = agent.handle(make_request(STATUS))['body']['processes']['sshd']
    assert status['active_bundles'] == [sshd_bundle.bundle_id]

    unwoven = agent.handle(make_request(UNWEAVE, {'bundle_id': sshd_bundle.bundle_id, 'process': 'sshd'}))
    assert unwoven['body']['reports']['sshd']['outcome'] == 'Unwoven'


def test_agent_turns_failures_into_error_replies(sshd_bundle):
    agent = sshd_agent('node-a')

    unknown = make_request(WEAVE, {'bundle': render_bundle(sshd_bundle), 'process': 'httpd'})
    reply = agent.respond(unknown)
    assert (reply['type'], reply['id']) == (ERROR, unknown['id'])
    assert "no process 'httpd'" in reply['body']['error']

    garbage = agent.respond(make_request(WEAVE, {'bundle': 'not a bundle'}))
    assert 'not a hotmend bundle' in garbage['body']['error']

    not_woven = agent.respond(make_request(UNWEAVE, {'bundle_id': sshd_bundle.bundle_id}))
    assert not_woven['type'] == ERROR


@pytest.mark.parametrize("options, error", [
    ({'quiescence_timeout': 'soon'}, 'ValueError'),
    ({'quiescence_timeout': [1]}, 'TypeError'),
])
def test_agent_replies_to_malformed_options(sshd_bundle, options, error):
    agent = sshd_agent('node-a')
    request = make_request(WEAVE, {'bundle': render_bundle(sshd_bundle), 'options': options})
    reply = agent.respond(request)

    assert (reply['type'], reply['id']) == (ERROR, request['id'])
    assert reply['body']['error'].startswith(f"{error}:")
    status = agent.respond(make_request(STATUS))['body']['processes']['sshd']
    assert status['active_bundles'] == []


def test_agent_weave_failure_is_a_report_not_an_error(sshd_bundle):
    agent = sshd_agent('node-c', 'nopam')
    reply = agent.respond(make_request(WEAVE, {'bundle': render_bundle(sshd_bundle)}))

    assert reply['type'] == 'WEAVE_OK'
    report = reply['body']['reports']['sshd']
    assert report['outcome'] == FAILED_SYMBOLS
    assert report['missing_symbols'] == [PAM_HANDLER]


@pytest.mark.network
def test_agent_over_tcp_survives_a_bad_frame():
    server = start_agent(sshd_agent('node-a'))
    try:
        with socket.create_connection(('127.0.0.1', server.port), timeout=5) as sock:
            stream = sock.makefile('rwb')
            payload = b'{nope'
            stream.write(FRAME_HEADER.pack(len(payload)) + payload)
            stream.flush()
            assert read_frame(stream)['type'] == ERROR

            request = make_request(PING)
            write_frame(stream, request)
            reply = read_frame(stream)
            assert (reply['type'], reply['id']) == (PONG, request['id'])
            stream.close()

        with AgentClient('127.0.0.1', server.port) as client:
            assert client.request(PING)['agent'] == 'node-a'
            with pytest.raises(ProtocolError, match='not woven'):
                client.request(UNWEAVE, {'bundle_id': 'hm-000000000000'})
    finally:
        stop_agent(server)


# ------------------------------------------------------------------ jobs

def test_job_tracks_terminal_statuses(sshd_bundle):
    nodes = [NodeSpec('a', '127.0.0.1', 1), NodeSpec('b', '127.0.0.1', 2)]
    job = FleetJob(sshd_bundle, nodes)

    assert job.statuses == {'a': PENDING, 'b': PENDING}
    job.set_status('a', NODE_WOVEN)
    assert not job.finished
    with pytest.raises(Exception, match='already Woven'):
        job.set_status('a', FAILED)
    job.set_status('b', UNREACHABLE)
    assert job.finished

    with pytest.raises(Exception, match='targeted twice'):
        FleetJob(sshd_bundle, nodes + [NodeSpec('a', '127.0.0.1', 3)])


def test_job_options_per_node(sshd_bundle):
    special = WeaveOptions(wait_for_quiescence=True)
    job = FleetJob(sshd_bundle, [NodeSpec('a', 'h', 1)], node_options={'a': special})
    assert job.options_for('a') == special
    assert job.options_for('b') == WeaveOptions()


def test_deploy_to_no_nodes(sshd_bundle):
    report = deploy(FleetJob(sshd_bundle, []))
    assert report.results == []
    assert report.ok
    assert report.counts == {NODE_WOVEN: 0, FAILED: 0, UNREACHABLE: 0}
    assert report.to_plain()['metrics']['node_wall_count'] == 0


@pytest.mark.network
@pytest.mark.acceptance
def test_fleet_rollout_reports_each_node(sshd_bundle):
    servers = [start_agent(sshd_agent('node-a')), start_agent(sshd_agent('node-b')),
               start_agent(sshd_agent('node-c', 'nopam'))]
    dead_port = free_port()
    try:
        targets = [NodeSpec(s.agent.node_id, '127.0.0.1', s.port) for s in servers]
        targets.append(NodeSpec('node-d', '127.0.0.1', dead_port))
        job = FleetJob(sshd_bundle, targets)

        report = deploy(job, connect_timeout=2.0, reply_timeout=30.0)

        assert report.counts == {NODE_WOVEN: 2, FAILED: 1, UNREACHABLE: 1}
        assert not report.ok
        assert job.finished
        assert report.result('node-c').status == FAILED
        assert PAM_HANDLER in report.result('node-c').reason
        assert report.result('node-a').reports['sshd'].sites_rewritten == 2
        assert [r.node_id for r in report.results] == ['node-a', 'node-b', 'node-c', 'node-d']

        for server in servers[:2]:
            process = server.agent.hosted['sshd'].process
            thread = process.call('serve_request', [1, EXPLOIT_NRESP])
            assert thread.status == 'fatal'

        status = query_node(targets[0], STATUS)
        assert status['processes']['sshd']['active_bundles'] == [sshd_bundle.bundle_id]
        with pytest.raises(Exception, match='not a query'):
            query_node(targets[0], WEAVE)
    finally:
        for server in servers:
            stop_agent(server)


class SlowAgent(NodeAgent):
    def handle(self, request):
        if request['type'] == WEAVE:
            time.sleep(0.25)
        return super().handle(request)


def timed_rollout(bundle, node_count):
    servers = [start_agent(sshd_agent(f"node-{i}", agent_class=SlowAgent)) for i in range(node_count)]
    try:
        job = FleetJob(bundle, [NodeSpec(s.agent.node_id, '127.0.0.1', s.port) for s in servers])
        started = time.perf_counter()
        report = deploy(job)
        elapsed = time.perf_counter() - started
    finally:
        for server in servers:
            stop_agent(server)
    assert report.counts[NODE_WOVEN] == node_count
    return elapsed


@pytest.mark.network
def test_rollout_runs_nodes_concurrently(sshd_bundle):
    one = timed_rollout(sshd_bundle, 1)
    eight = timed_rollout(sshd_bundle, 8)
    assert eight <= 2 * one


@pytest.mark.network
def test_fleet_driver_reads_config_and_bundle(sshd_bundle, tmp_path):
    servers = [start_agent(sshd_agent('node-a')), start_agent(sshd_agent('node-b'))]
    try:
        config = {
            'version': 1,
            'timeouts': {'connect': 2.0, 'reply': 30.0},
            'nodes': [{'id': s.agent.node_id, 'address': f"127.0.0.1:{s.port}", 'processes': ['sshd']}
                      for s in servers],
            'processes': {'sshd': {'source': source_path('sshd', 'old'), 'init': 'main',
                                   'entry': 'serve_request'}},
        }
        config_path = os.path.join(str(tmp_path), 'fleet.yaml')
        with open(config_path, 'w') as f:
            yaml.safe_dump(config, f)
        bundle_path = os.path.join(str(tmp_path), 'sshd.bundle')
        write_bundle(sshd_bundle, bundle_path)
        stats = ReportAccumulator(str(tmp_path), command='deploy')

        deployed = run_fleet_driver(bundle_path, config_path, 'node-b', stats_accumulator=stats)

        assert [r.node_id for r in deployed['report'].results] == ['node-b']
        assert deployed['report'].ok
        assert stats.get('fleet.woven') == 1
        assert stats.get('fleet.unreachable') == 0
        assert stats.get('fleet.node_wall_count') == 1
        assert servers[0].agent.hosted['sshd'].process.woven == {}
    finally:
        for server in servers:
            stop_agent(server)
