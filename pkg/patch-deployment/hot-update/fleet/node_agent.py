"""
Node agent: hosts running target processes and weaves bundles into them on request.
"""
import logging
import socket
import socketserver
import threading
from dataclasses import dataclass
from typing import Dict, Optional

from utilities import HotmendError
from targetvm import TargetProcess, RequestLoad
from aspectdsl import load_bundle
from weaver import WeaveOptions, weave, unweave

from .wire_protocol import (
    ProtocolError, read_frame, write_frame, make_reply, make_error, PING, LIST, WEAVE, UNWEAVE, STATUS,
)

logger = logging.getLogger("hotmend.fleet")

AGENT_VERSION = '1.0.0'


@dataclass
class HostedProcess:
    process: TargetProcess
    load: Optional[RequestLoad] = None

    def status(self):
        status = self.process.status()
        if self.load is not None:
            status['requests_served'] = self.load.served
            status['request_outcomes'] = dict(self.load.outcomes)
        return status


class NodeAgent:
    """
    Request handling independent of transport.

    Usage:
        agent = NodeAgent('node-a', {'sshd': HostedProcess(process, load)})
        reply = agent.handle(make_request(PING))
    """

    def __init__(self, node_id, hosted: Dict[str, HostedProcess]):
        self.node_id = node_id
        self.hosted = dict(hosted)

    def _targets(self, body):
        name = body.get('process')
        if name is None:
            return list(self.hosted.items())
        if name not in self.hosted:
            raise HotmendError(f"node {self.node_id} hosts no process {name!r}")
        return [(name, self.hosted[name])]

    def handle(self, request):
        kind, body = request['type'], request['body']
        if kind == PING:
            return make_reply(request, {'agent': self.node_id, 'version': AGENT_VERSION})
        if kind == LIST:
            return make_reply(request, {'processes': {
                name: {'functions': h.process.function_symbols(), 'globals': h.process.global_symbols()}
                for name, h in sorted(self.hosted.items())
            }})
        if kind == WEAVE:
            bundle = load_bundle(body['bundle'])
            options = WeaveOptions.from_plain(body.get('options'))
            reports = {name: weave(h.process, bundle, options, driver=h.load).to_plain()
                       for name, h in self._targets(body)}
            return make_reply(request, {'reports': reports})
        if kind == UNWEAVE:
            reports = {name: unweave(h.process, body['bundle_id'], driver=h.load).to_plain()
                       for name, h in self._targets(body)}
            return make_reply(request, {'reports': reports})
        if kind == STATUS:
            return make_reply(request, {'agent': self.node_id, 'processes': {
                name: h.status() for name, h in sorted(self.hosted.items())
            }})
        raise ProtocolError(f"{kind} is not a request", request.get('id'))

    def respond(self, request):
        """handle() with every failure turned into an ERROR reply."""
        try:
            reply = self.handle(request)
        except HotmendError as e:
            reply = make_error(e, request.get('id'))
        except Exception as e:
            logger.exception("%s: %s %s failed", self.node_id, request['type'], request['id'])
            reply = make_error(f"{type(e).__name__}: {e}", request.get('id'))
        logger.info("%s: %s %s -> %s", self.node_id, request['type'], request['id'], reply['type'])
        return reply

    def stop_load(self):
        for hosted in self.hosted.values():
            if hosted.load is not None:
                hosted.load.stop()


class _AgentRequestHandler(socketserver.StreamRequestHandler):
    def handle(self):
        agent: NodeAgent = self.server.agent
        while True:
            try:
                request = read_frame(self.rfile)
            except ProtocolError as e:
                logger.warning("%s: bad frame from %s: %s", agent.node_id, self.client_address[0], e)
                self._send(make_error(e, e.correlation_id))
                if e.fatal:
                    return
                continue
            except (ConnectionError, socket.timeout):
                return
            if request is None:
                return
            self._send(agent.respond(request))

    def _send(self, message):
        try:
            write_frame(self.wfile, message)
        except (ConnectionError, socket.timeout):
            pass


class AgentServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, server_address, agent: NodeAgent):
        super().__init__(server_address, _AgentRequestHandler)
        self.agent = agent

    @property
    def port(self):
        return self.server_address[1]


def start_agent(agent: NodeAgent, host='127.0.0.1', port=0) -> AgentServer:
    """Serve `agent` on a background thread; port 0 picks a free port."""
    server = AgentServer((host, port), agent)
    thread = threading.Thread(target=server.serve_forever, name=f"agent-{agent.node_id}", daemon=True)
    thread.start()
    logger.info("agent %s listening on %s:%d", agent.node_id, host, server.port)
    return server


def stop_agent(server: AgentServer):
    server.shutdown()
    server.server_close()
    server.agent.stop_load()


def agent_serve(host, port, agent: NodeAgent):
    """Serve until interrupted."""
    with AgentServer((host, port), agent) as server:
        logger.info("agent %s listening on %s:%d", agent.node_id, host, server.port)
        try:
            server.serve_forever()
        finally:
            agent.stop_load()
