import sys
import os

# Add patch-deployment/ to the path so submodules can import utilities
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from .wire_protocol import (
    ProtocolError,
    PROTOCOL_VERSION,
    FRAME_HEADER,
    MAX_FRAME_BYTES,
    PING,
    LIST,
    WEAVE,
    UNWEAVE,
    STATUS,
    PONG,
    ERROR,
    REQUEST_TYPES,
    make_request,
    make_reply,
    make_error,
    reply_type,
    validate_message,
    encode_frame,
    decode_payload,
    read_frame,
    write_frame,
)
from .fleet_config import (
    FleetConfig,
    NodeSpec,
    ProcessSpec,
    fleet_config_from_plain,
    load_fleet_config,
    launch_process,
    start_load,
)
from .node_agent import NodeAgent, HostedProcess, AgentServer, start_agent, stop_agent, agent_serve
from .coordinator import (
    AgentClient,
    FleetJob,
    FleetReport,
    NodeResult,
    deploy,
    query_node,
    PENDING,
    NODE_WOVEN,
    FAILED,
    UNREACHABLE,
    NODE_STATUSES,
    TERMINAL_STATUSES,
)
from .fleet_driver import run_fleet_driver

__all__ = [
    'ProtocolError',
    'PROTOCOL_VERSION',
    'FRAME_HEADER',
    'MAX_FRAME_BYTES',
    'PING',
    'LIST',
    'WEAVE',
    'UNWEAVE',
    'STATUS',
    'PONG',
    'ERROR',
    'REQUEST_TYPES',
    'make_request',
    'make_reply',
    'make_error',
    'reply_type',
    'validate_message',
    'encode_frame',
    'decode_payload',
    'read_frame',
    'write_frame',
    'FleetConfig',
    'NodeSpec',
    'ProcessSpec',
    'fleet_config_from_plain',
    'load_fleet_config',
    'launch_process',
    'start_load',
    'NodeAgent',
    'HostedProcess',
    'AgentServer',
    'start_agent',
    'stop_agent',
    'agent_serve',
    'AgentClient',
    'FleetJob',
    'FleetReport',
    'NodeResult',
    'deploy',
    'query_node',
    'PENDING',
    'NODE_WOVEN',
    'FAILED',
    'UNREACHABLE',
    'NODE_STATUSES',
    'TERMINAL_STATUSES',
    'run_fleet_driver',
]

__version__ = '1.0.0'
__author__ = 'hotmend maintainers'
