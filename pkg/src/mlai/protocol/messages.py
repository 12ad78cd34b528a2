"""Length-prefixed message framing and the payload vocabulary.

Every message on a stream is::

    uint32  length   bytes that follow this field (11 + payload)
    uint8   kind
    uint64  sequence per-connection counter, starts at 0
    uint16  sender
    ...     payload

All integers are big-endian and all reals are IEEE-754 doubles, big-endian.
"""
import enum
import struct
from dataclasses import dataclass

from ..detection import DETECTION_SIZE, BoundingBox, pack_detection, unpack_detection
from ..errors import CorruptFrame, NeedMoreBytes, PayloadTooLarge
from ..features import pack_feature, unpack_feature
from ..geo import GeoPoint, TelemetryRecord
from ..imaging import decode_frame, encode_frame
from ..reid import SCORE_SIZE, pack_score, unpack_score


class MessageKind(enum.IntEnum):
    FRAME = 1
    FEATURE = 2
    COMMAND = 3
    DETECTIONS = 4
    SCORE = 5
    STOP_REID = 6
    START_TRACKING = 7
    TELEMETRY = 8
    ACK = 9


_PREFIX = struct.Struct(">I")
_HEADER = struct.Struct(">BQH")
HEADER_SIZE = _HEADER.size  # 11
MAX_PAYLOAD = 2**32 - 16


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sequence: int
    sender: int
    payload: bytes = b""


def frame_message(msg):
    if len(msg.payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(msg.payload)} bytes exceeds {MAX_PAYLOAD}")
    body_len = HEADER_SIZE + len(msg.payload)
    return _PREFIX.pack(body_len) + _HEADER.pack(int(msg.kind), msg.sequence, msg.sender) + bytes(msg.payload)


def unframe(stream):
    """Split one message off the front of ``stream``.

    Returns ``(message, remaining_bytes)``. Raises NeedMoreBytes when the
    buffer ends mid-message and CorruptFrame on an impossible length or an
    unknown kind.
    """
    stream = bytes(stream)
    if len(stream) < _PREFIX.size:
        raise NeedMoreBytes(_PREFIX.size - len(stream))
    (length,) = _PREFIX.unpack_from(stream)
    if length < HEADER_SIZE:
        raise CorruptFrame(f"length field {length} shorter than the {HEADER_SIZE}-byte header")
    end = _PREFIX.size + length
    if len(stream) >= _PREFIX.size + 1:
        _check_kind(stream[_PREFIX.size])
    if len(stream) < end:
        raise NeedMoreBytes(end - len(stream))
    kind, seq, sender = _HEADER.unpack_from(stream, _PREFIX.size)
    payload = stream[_PREFIX.size + HEADER_SIZE : end]
    return Message(MessageKind(kind), seq, sender, payload), stream[end:]


def _check_kind(byte):
    try:
        MessageKind(byte)
    except ValueError:
        raise CorruptFrame(f"unknown message kind 0x{byte:02X}") from None


class FrameReader:
    """Incremental reassembly of messages from arbitrarily split chunks.

    With ``check_sequence`` it also enforces gap-free, strictly increasing
    sequence numbers per sender.
    """

    def __init__(self, check_sequence=True):
        self._buf = bytearray()
        self.check_sequence = check_sequence
        self._next_seq = {}

    def feed(self, data):
        self._buf += data
        out = []
        while True:
            try:
                msg, rest = unframe(self._buf)
            except NeedMoreBytes:
                return out
            self._buf = bytearray(rest)
            if self.check_sequence:
                want = self._next_seq.get(msg.sender, 0)
                if msg.sequence != want:
                    raise CorruptFrame(f"sender {msg.sender}: sequence {msg.sequence}, expected {want}")
                self._next_seq[msg.sender] = want + 1
            out.append(msg)

    @property
    def pending(self):
        return len(self._buf)


# -- payloads -----------------------------------------------------------------


class Verb(enum.IntEnum):
    START_DETECT = 1
    START_TRACK = 2
    STOP_VISION = 3


_BOX = struct.Struct(">dddd")


def _pack_box(box):
    return _BOX.pack(box.b_x, box.b_y, box.b_w, box.b_h)


def _unpack_box(data, offset):
    return BoundingBox(*_BOX.unpack_from(data, offset))


@dataclass(frozen=True)
class Command:
    verb: Verb
    box: BoundingBox = None


def encode_command(cmd):
    head = struct.pack(">BB", int(cmd.verb), cmd.box is not None)
    return head + (_pack_box(cmd.box) if cmd.box is not None else b"")


def decode_command(data):
    if len(data) not in (2, 2 + _BOX.size):
        raise CorruptFrame(f"COMMAND payload of {len(data)} bytes")
    verb, has_box = struct.unpack_from(">BB", data)
    try:
        verb = Verb(verb)
    except ValueError:
        raise CorruptFrame(f"unknown command verb {verb}") from None
    if bool(has_box) != (len(data) > 2):
        raise CorruptFrame("COMMAND box flag disagrees with payload length")
    return Command(verb, _unpack_box(data, 2) if has_box else None)


_FEATURE_HEAD = struct.Struct(">HIIdB")


@dataclass(frozen=True)
class FeaturePayload:
    """A descriptor in flight: a probe (origin = tracking sensor) or a candidate."""

    origin: int
    object_id: int
    frame_index: int
    cosine: float
    feature: object
    box: BoundingBox = None


def encode_feature(p):
    has_box = p.box is not None
    head = _FEATURE_HEAD.pack(p.origin, p.object_id, p.frame_index, p.cosine, has_box)
    return head + (_pack_box(p.box) if has_box else b"") + pack_feature(p.feature)


def decode_feature(data):
    if len(data) < _FEATURE_HEAD.size:
        raise CorruptFrame("FEATURE payload too short")
    origin, oid, fidx, cos, has_box = _FEATURE_HEAD.unpack_from(data)
    if has_box > 1:
        raise CorruptFrame(f"FEATURE box flag {has_box}")
    pos = _FEATURE_HEAD.size
    try:
        box = None
        if has_box:
            box = _unpack_box(data, pos)
            pos += _BOX.size
        fv, used = unpack_feature(data, pos)
    except (ValueError, struct.error) as exc:
        raise CorruptFrame(f"bad FEATURE payload: {exc}") from None
    if pos + used != len(data):
        raise CorruptFrame("trailing bytes after FEATURE payload")
    return FeaturePayload(origin, oid, fidx, cos, fv, box)


_DETS_HEAD = struct.Struct(">IH")


def encode_detections(frame_index, detections):
    return _DETS_HEAD.pack(frame_index, len(detections)) + b"".join(pack_detection(d) for d in detections)


def decode_detections(data):
    if len(data) < _DETS_HEAD.size:
        raise CorruptFrame("DETECTIONS payload too short")
    fidx, n = _DETS_HEAD.unpack_from(data)
    if len(data) != _DETS_HEAD.size + n * DETECTION_SIZE:
        raise CorruptFrame(f"DETECTIONS declares {n} entries, payload is {len(data)} bytes")
    return fidx, [unpack_detection(data, _DETS_HEAD.size + i * DETECTION_SIZE) for i in range(n)]


def encode_score(score):
    return pack_score(score)


def decode_score(data):
    if len(data) != SCORE_SIZE:
        raise CorruptFrame(f"SCORE payload of {len(data)} bytes")
    return unpack_score(data)


def encode_stop_reid(episode):
    return struct.pack(">I", episode)


def decode_stop_reid(data):
    if len(data) != 4:
        raise CorruptFrame("STOP_REID payload must be 4 bytes")
    return struct.unpack(">I", data)[0]


_START = struct.Struct(">II")


def encode_start_tracking(episode, object_id, box):
    return _START.pack(episode, object_id) + _pack_box(box)


def decode_start_tracking(data):
    if len(data) != _START.size + _BOX.size:
        raise CorruptFrame("START_TRACKING payload has the wrong size")
    episode, oid = _START.unpack_from(data)
    return episode, oid, _unpack_box(data, _START.size)


_TELEMETRY = struct.Struct(">HdddddBddd")


def encode_telemetry(r):
    return _TELEMETRY.pack(
        r.sensor,
        r.position.latitude,
        r.position.longitude,
        r.altitude,
        r.velocity,
        r.heading,
        int(r.motors_on),
        r.home.latitude,
        r.home.longitude,
        r.timestamp,
    )


def decode_telemetry(data):
    if len(data) != _TELEMETRY.size:
        raise CorruptFrame("TELEMETRY payload has the wrong size")
    s, lat, lng, alt, vel, hdg, motors, hlat, hlng, ts = _TELEMETRY.unpack(data)
    return TelemetryRecord(s, GeoPoint(lat, lng), alt, vel, hdg, bool(motors), GeoPoint(hlat, hlng), ts)


def _decode_ack(data):
    if data:
        raise CorruptFrame("ACK carries no payload")
    return None


DECODERS = {
    MessageKind.FRAME: decode_frame,
    MessageKind.FEATURE: decode_feature,
    MessageKind.COMMAND: decode_command,
    MessageKind.DETECTIONS: decode_detections,
    MessageKind.SCORE: decode_score,
    MessageKind.STOP_REID: decode_stop_reid,
    MessageKind.START_TRACKING: decode_start_tracking,
    MessageKind.TELEMETRY: decode_telemetry,
    MessageKind.ACK: _decode_ack,
}


def decode_payload(msg):
    """Parse ``msg.payload`` under its kind's schema."""
    try:
        return DECODERS[msg.kind](msg.payload)
    except CorruptFrame:
        raise
    except (ValueError, struct.error) as exc:
        raise CorruptFrame(f"{msg.kind.name} payload does not parse: {exc}") from None


__all__ = [
    "MessageKind",
    "Message",
    "frame_message",
    "unframe",
    "FrameReader",
    "Verb",
    "Command",
    "FeaturePayload",
    "encode_frame",
    "encode_command",
    "encode_feature",
    "encode_detections",
    "encode_score",
    "encode_stop_reid",
    "encode_start_tracking",
    "encode_telemetry",
    "decode_payload",
]
