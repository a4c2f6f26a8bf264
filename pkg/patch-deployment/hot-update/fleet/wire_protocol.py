"""
Agent wire protocol.

Every message is one frame: a 4-byte big-endian payload length followed by
the payload, UTF-8 canonical JSON:

    {"version": 1, "type": "WEAVE", "id": "c7f1...-3", "body": {...}}

Each request gets exactly one reply carrying the request's id. Reply
types are PONG for PING, ERROR for anything that failed, and the request
type with an _OK suffix otherwise.
"""
import itertools
import json
import struct
import threading
import uuid

from jsonschema import Draft202012Validator

from utilities import HotmendError, canonical_text

PROTOCOL_VERSION = 1
FRAME_HEADER = struct.Struct('>I')
MAX_FRAME_BYTES = 64 * 1024 * 1024

PING = 'PING'
LIST = 'LIST'
WEAVE = 'WEAVE'
UNWEAVE = 'UNWEAVE'
STATUS = 'STATUS'
REQUEST_TYPES = (PING, LIST, WEAVE, UNWEAVE, STATUS)

PONG = 'PONG'
ERROR = 'ERROR'
REPLY_TYPES = (PONG, ERROR) + tuple(f"{t}_OK" for t in REQUEST_TYPES if t != PING)

MESSAGE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "type", "id", "body"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": PROTOCOL_VERSION},
        "type": {"enum": list(REQUEST_TYPES + REPLY_TYPES)},
        "id": {"type": ["string", "null"]},
        "body": {"type": "object"},
    },
    "allOf": [
        {"if": {"properties": {"type": {"const": WEAVE}}},
         "then": {"properties": {"body": {"required": ["bundle"], "properties": {
             "bundle": {"type": "string"},
             "process": {"type": "string"},
             "options": {"type": "object"}}}}}},
        {"if": {"properties": {"type": {"const": UNWEAVE}}},
         "then": {"properties": {"body": {"required": ["bundle_id"], "properties": {
             "bundle_id": {"type": "string"},
             "process": {"type": "string"}}}}}},
        {"if": {"properties": {"type": {"const": ERROR}}},
         "then": {"properties": {"body": {"required": ["error"]}}}},
    ],
}

_VALIDATOR = Draft202012Validator(MESSAGE_SCHEMA)


class ProtocolError(HotmendError):
    def __init__(self, message, correlation_id=None, fatal=False):
        self.correlation_id = correlation_id
        self.fatal = fatal              # the stream can no longer be trusted
        super().__init__(message)


_ids = itertools.count(1)
_ids_lock = threading.Lock()
_SESSION = uuid.uuid4().hex[:8]


def next_correlation_id():
    with _ids_lock:
        return f"{_SESSION}-{next(_ids)}"


def reply_type(request_type):
    return PONG if request_type == PING else f"{request_type}_OK"


def make_message(message_type, body=None, correlation_id=None):
    return {'version': PROTOCOL_VERSION, 'type': message_type, 'id': correlation_id, 'body': body or {}}


def make_request(message_type, body=None):
    return make_message(message_type, body, next_correlation_id())


def make_reply(request, body=None):
    return make_message(reply_type(request['type']), body, request['id'])


def make_error(message, correlation_id=None):
    return make_message(ERROR, {'error': str(message)}, correlation_id)


def validate_message(message):
    errors = sorted(_VALIDATOR.iter_errors(message), key=lambda e: list(e.path))
    if errors:
        correlation_id = message.get('id') if isinstance(message, dict) else None
        where = '/'.join(str(p) for p in errors[0].path) or '<message>'
        raise ProtocolError(f"invalid message at {where}: {errors[0].message}", correlation_id)
    return message


def encode_frame(message) -> bytes:
    payload = canonical_text(validate_message(message)).encode('utf-8')
    if len(payload) > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {len(payload)} bytes exceeds {MAX_FRAME_BYTES}", message.get('id'))
    return FRAME_HEADER.pack(len(payload)) + payload


def decode_payload(payload: bytes):
    try:
        message = json.loads(payload.decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as e:
        raise ProtocolError(f"payload is not JSON: {e}") from None
    return validate_message(message)


def _read_exactly(stream, size):
    chunks = []
    remaining = size
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b''.join(chunks)


def read_frame(stream):
    """
    Read one message from a binary file-like stream. Returns None on a clean
    end of stream; raises ProtocolError for a malformed payload (the stream
    stays aligned) or a truncated or oversized frame (fatal).
    """
    header = _read_exactly(stream, FRAME_HEADER.size)
    if not header:
        return None
    if len(header) < FRAME_HEADER.size:
        raise ProtocolError("truncated frame header", fatal=True)
    (length,) = FRAME_HEADER.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {length} bytes exceeds {MAX_FRAME_BYTES}", fatal=True)
    payload = _read_exactly(stream, length)
    if len(payload) < length:
        raise ProtocolError("truncated frame", fatal=True)
    return decode_payload(payload)


def write_frame(stream, message):
    stream.write(encode_frame(message))
    stream.flush()
