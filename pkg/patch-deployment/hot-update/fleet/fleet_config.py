"""
Fleet and process configuration (YAML, validated against a schema).

    version: 1
    timeouts: {connect: 2.0, reply: 30.0}
    nodes:
      - {id: node-a, address: "127.0.0.1:7401", processes: [sshd]}
    processes:
      sshd:
        source: sshd/old/sshd.c
        init: main
        entry: serve_request
        load: {threads: 2, requests: [[1, 3], [2, 1]]}

Paths are relative to the configuration file.
"""
import fnmatch
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from jsonschema import Draft202012Validator

from utilities import ConfigError, load_yaml, read_text
from csubset import parse_translation_unit
from targetvm import load_program, RequestLoad, DONE

logger = logging.getLogger("hotmend.fleet")

DEFAULT_CONNECT_TIMEOUT = 2.0
DEFAULT_REPLY_TIMEOUT = 30.0

FLEET_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": 1},
        "timeouts": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "connect": {"type": "number", "exclusiveMinimum": 0},
                "reply": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "address"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "address": {"type": "string", "pattern": r"^[^:\s]+:[0-9]{1,5}$"},
                    "processes": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "processes": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["source", "entry"],
                "additionalProperties": False,
                "properties": {
                    "source": {"type": "string"},
                    "init": {"type": "string"},
                    "entry": {"type": "string"},
                    "load": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "threads": {"type": "integer", "minimum": 0, "maximum": 64},
                            "requests": {"type": "array", "items": {"type": "array"}},
                        },
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True)
class ProcessSpec:
    name: str
    source: str                     # absolute path
    entry: str
    init: Optional[str] = None
    threads: int = 0
    requests: Tuple[Tuple, ...] = ()

    def request_load(self):
        """(entry, args) pairs for RequestLoad."""
        return [(self.entry, list(args)) for args in self.requests]


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    host: str
    port: int
    processes: Tuple[str, ...] = ()

    @property
    def address(self):
        return f"{self.host}:{self.port}"


@dataclass(frozen=True)
class FleetConfig:
    path: str = ''
    connect_timeout: float = DEFAULT_CONNECT_TIMEOUT
    reply_timeout: float = DEFAULT_REPLY_TIMEOUT
    nodes: Tuple[NodeSpec, ...] = ()
    processes: Dict[str, ProcessSpec] = field(default_factory=dict)

    def node(self, node_id) -> NodeSpec:
        for node in self.nodes:
            if node.node_id == node_id:
                return node
        raise ConfigError(f"{self.path}: no node {node_id!r}")

    def process(self, name) -> ProcessSpec:
        spec = self.processes.get(name)
        if spec is None:
            raise ConfigError(f"{self.path}: no process {name!r}")
        return spec

    def select_nodes(self, node_filter=None) -> List[NodeSpec]:
        """Nodes whose id matches any comma-separated shell pattern of `node_filter` (all when empty)."""
        if not node_filter:
            return list(self.nodes)
        patterns = [p.strip() for p in node_filter.split(',') if p.strip()]
        return [n for n in self.nodes if any(fnmatch.fnmatchcase(n.node_id, p) for p in patterns)]


def parse_address(address):
    host, _, port = address.rpartition(':')
    return host, int(port)


def fleet_config_from_plain(plain, path=''):
    errors = sorted(Draft202012Validator(FLEET_SCHEMA).iter_errors(plain), key=lambda e: list(e.path))
    if errors:
        where = '/'.join(str(p) for p in errors[0].path) or '<root>'
        raise ConfigError(f"{path or 'fleet config'}: {where}: {errors[0].message}")

    base = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()
    processes = {}
    for name, entry in (plain.get('processes') or {}).items():
        load = entry.get('load') or {}
        processes[name] = ProcessSpec(
            name=name,
            source=os.path.normpath(os.path.join(base, entry['source'])),
            entry=entry['entry'],
            init=entry.get('init'),
            threads=load.get('threads', 0),
            requests=tuple(tuple(args) for args in load.get('requests', ())),
        )

    nodes = []
    seen = set()
    for entry in plain.get('nodes') or []:
        if entry['id'] in seen:
            raise ConfigError(f"{path or 'fleet config'}: node {entry['id']!r} is listed twice")
        seen.add(entry['id'])
        unknown = [p for p in entry.get('processes', []) if p not in processes]
        if unknown:
            raise ConfigError(f"{path or 'fleet config'}: node {entry['id']!r} hosts unknown process {unknown[0]!r}")
        host, port = parse_address(entry['address'])
        nodes.append(NodeSpec(entry['id'], host, port, tuple(entry.get('processes', ()))))

    timeouts = plain.get('timeouts') or {}
    return FleetConfig(
        path=path,
        connect_timeout=float(timeouts.get('connect', DEFAULT_CONNECT_TIMEOUT)),
        reply_timeout=float(timeouts.get('reply', DEFAULT_REPLY_TIMEOUT)),
        nodes=tuple(nodes),
        processes=processes,
    )


def load_fleet_config(path) -> FleetConfig:
    return fleet_config_from_plain(load_yaml(path), path)


def launch_process(spec: ProcessSpec, trace_limit=100_000):
    """Load the process's program and run its init function to completion."""
    unit = parse_translation_unit(read_text(spec.source), os.path.basename(spec.source))
    process = load_program(unit, name=spec.name, trace_limit=trace_limit)
    if spec.init:
        thread = process.call(spec.init)
        process.reap(thread.tid)
        if thread.status != DONE:
            raise ConfigError(f"process {spec.name}: {spec.init}() ended {thread.status} {thread.message}".rstrip())
    logger.info("launched %s from %s", spec.name, spec.source)
    return process


def start_load(process, spec: ProcessSpec) -> Optional[RequestLoad]:
    if not spec.threads or not spec.requests:
        return None
    return RequestLoad(process, spec.request_load(), executors=spec.threads).start()
