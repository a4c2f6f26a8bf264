"""
Fleet deployment: push one bundle to a set of node agents concurrently.

Each node is independent: a slow or failing node never holds up the
others, and there is no cross-node rollback. Worker threads only talk to
their node; the job's status map is updated by the dispatching thread
alone, as results come in.
"""
import logging
import socket
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from utilities import HotmendError
from aspectdsl import PatchBundle, render_bundle
from weaver import WeaveOptions, WeaveReport, WOVEN
from reporting import compute_latency_metrics

from .fleet_config import NodeSpec, DEFAULT_CONNECT_TIMEOUT, DEFAULT_REPLY_TIMEOUT
from .wire_protocol import (
    ProtocolError, make_request, read_frame, write_frame, ERROR, PING, LIST, WEAVE, STATUS, UNWEAVE,
)

logger = logging.getLogger("hotmend.fleet")

PENDING = 'Pending'
NODE_WOVEN = 'Woven'
FAILED = 'Failed'
UNREACHABLE = 'Unreachable'

TERMINAL_STATUSES = (NODE_WOVEN, FAILED, UNREACHABLE)
NODE_STATUSES = (PENDING,) + TERMINAL_STATUSES

MAX_WORKERS = 16


class AgentClient:
    """
    One connection to a node agent.

    Usage:
        with AgentClient('127.0.0.1', 7401) as client:
            body = client.request(PING)
    """

    def __init__(self, host, port, connect_timeout=DEFAULT_CONNECT_TIMEOUT, reply_timeout=DEFAULT_REPLY_TIMEOUT):
        self.sock = socket.create_connection((host, port), timeout=connect_timeout)
        self.sock.settimeout(reply_timeout)
        self.stream = self.sock.makefile('rwb')

    def request(self, message_type, body=None):
        """Send one request and return the body of its reply; ERROR replies raise ProtocolError."""
        request = make_request(message_type, body)
        write_frame(self.stream, request)
        reply = read_frame(self.stream)
        if reply is None:
            raise ProtocolError("agent closed the connection", request['id'])
        if reply['id'] != request['id']:
            raise ProtocolError(f"reply {reply['id']} does not answer {request['id']}", request['id'])
        if reply['type'] == ERROR:
            raise ProtocolError(reply['body']['error'], request['id'])
        return reply['body']

    def close(self):
        try:
            self.stream.close()
        finally:
            self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


@dataclass
class NodeResult:
    node_id: str
    status: str
    reason: str = ''
    reports: Dict[str, WeaveReport] = field(default_factory=dict)
    wall_us: int = 0

    def to_plain(self):
        plain = {
            'node': self.node_id,
            'status': self.status,
            'wall_us': self.wall_us,
            'reports': {name: report.to_plain() for name, report in sorted(self.reports.items())},
        }
        if self.reason:
            plain['reason'] = self.reason
        return plain


@dataclass
class FleetJob:
    bundle: PatchBundle
    targets: List[NodeSpec]
    options: WeaveOptions = field(default_factory=WeaveOptions)
    node_options: Dict[str, WeaveOptions] = field(default_factory=dict)
    statuses: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ids = [node.node_id for node in self.targets]
        if len(set(ids)) != len(ids):
            raise HotmendError("a node is targeted twice")
        self.statuses = {node_id: PENDING for node_id in ids}
        self._lock = threading.Lock()

    def options_for(self, node_id) -> WeaveOptions:
        return self.node_options.get(node_id, self.options)

    def set_status(self, node_id, status):
        with self._lock:
            current = self.statuses[node_id]
            if current in TERMINAL_STATUSES and status != current:
                raise HotmendError(f"node {node_id} is already {current}")
            self.statuses[node_id] = status

    @property
    def finished(self):
        return all(s in TERMINAL_STATUSES for s in self.statuses.values())


@dataclass
class FleetReport:
    bundle_id: str
    results: List[NodeResult] = field(default_factory=list)
    wall_us: int = 0

    @property
    def counts(self):
        counts = Counter({status: 0 for status in TERMINAL_STATUSES})
        counts.update(result.status for result in self.results)
        return dict(counts)

    @property
    def ok(self):
        return all(result.status == NODE_WOVEN for result in self.results)

    def result(self, node_id) -> Optional[NodeResult]:
        return next((r for r in self.results if r.node_id == node_id), None)

    def wall_metrics(self):
        return compute_latency_metrics([r.wall_us for r in self.results], 'node_wall')

    def to_plain(self):
        return {
            'bundle_id': self.bundle_id,
            'wall_us': self.wall_us,
            'counts': self.counts,
            'nodes': [result.to_plain() for result in self.results],
            'metrics': self.wall_metrics(),
        }

    def __str__(self):
        counts = self.counts
        summary = ', '.join(f"{counts[s]} {s}" for s in TERMINAL_STATUSES)
        return f"{self.bundle_id}: {len(self.results)} node(s): {summary} in {self.wall_us} us"


def _node_status(reports: Dict[str, WeaveReport]):
    failures = [f"{name}: {report}" for name, report in sorted(reports.items()) if report.outcome != WOVEN]
    if failures:
        return FAILED, '; '.join(failures)
    return NODE_WOVEN, ''


def _weave_on_node(node: NodeSpec, bundle_text, options: WeaveOptions, connect_timeout, reply_timeout):
    started = time.perf_counter()

    def elapsed():
        return int((time.perf_counter() - started) * 1_000_000)

    try:
        client = AgentClient(node.host, node.port, connect_timeout, reply_timeout)
    except OSError as e:
        return NodeResult(node.node_id, UNREACHABLE, str(e), wall_us=elapsed())
    try:
        with client:
            body = {'bundle': bundle_text, 'options': options.to_plain()}
            reply = client.request(WEAVE, body)
    except ProtocolError as e:
        return NodeResult(node.node_id, FAILED, str(e), wall_us=elapsed())
    except OSError as e:
        return NodeResult(node.node_id, UNREACHABLE, str(e), wall_us=elapsed())
    reports = {name: WeaveReport.from_plain(plain) for name, plain in reply['reports'].items()}
    status, reason = _node_status(reports)
    return NodeResult(node.node_id, status, reason, reports, elapsed())


def deploy(job: FleetJob, connect_timeout=DEFAULT_CONNECT_TIMEOUT, reply_timeout=DEFAULT_REPLY_TIMEOUT) -> FleetReport:
    """Weave the job's bundle on every target node at once and collect one result per node."""
    started = time.perf_counter()
    report = FleetReport(job.bundle.bundle_id)
    if not job.targets:
        return report

    bundle_text = render_bundle(job.bundle)
    workers = min(MAX_WORKERS, len(job.targets))
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix='deploy') as pool:
        futures = {
            pool.submit(_weave_on_node, node, bundle_text, job.options_for(node.node_id),
                        connect_timeout, reply_timeout): node
            for node in job.targets
        }
        for future in as_completed(futures):
            node = futures[future]
            try:
                result = future.result()
            except Exception as e:
                result = NodeResult(node.node_id, FAILED, f"{type(e).__name__}: {e}")
            job.set_status(node.node_id, result.status)
            report.results.append(result)
            logger.info("%s: %s%s", node.node_id, result.status, f" ({result.reason})" if result.reason else '')

    report.results.sort(key=lambda r: r.node_id)
    report.wall_us = int((time.perf_counter() - started) * 1_000_000)
    return report


def query_node(node: NodeSpec, message_type=STATUS, body=None, connect_timeout=DEFAULT_CONNECT_TIMEOUT,
               reply_timeout=DEFAULT_REPLY_TIMEOUT):
    """One request to one node; used for PING, LIST, STATUS and UNWEAVE."""
    if message_type not in (PING, LIST, STATUS, UNWEAVE):
        raise HotmendError(f"{message_type} is not a query")
    with AgentClient(node.host, node.port, connect_timeout, reply_timeout) as client:
        return client.request(message_type, body)
