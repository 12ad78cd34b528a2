from .apdex import (
    ApdexCollector,
    ApdexCounters,
    Outcome,
    RequestTimer,
    apdex,
    classify_latency,
    classify_request,
)
from .messages import (
    Command,
    FeaturePayload,
    FrameReader,
    Message,
    MessageKind,
    Verb,
    decode_payload,
    encode_command,
    encode_detections,
    encode_feature,
    encode_score,
    encode_start_tracking,
    encode_stop_reid,
    encode_telemetry,
    frame_message,
    unframe,
)
from .transport import Channel, LoopbackTransport, SocketTransport, loopback_pair, socket_pair
