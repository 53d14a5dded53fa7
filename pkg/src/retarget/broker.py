"""In-process pub/sub broker with a TCP bridge.

Topics carry JSON-compatible payloads. Publishing stamps a per-publisher
sequence number and fans the envelope out to every live subscription.
Live consumers get a bounded queue that drops the oldest message under
backpressure (freshness over completeness); recorders subscribe in spill
mode with no bound.

The TCP bridge speaks length-prefixed frames: a 4-byte big-endian payload
length followed by a UTF-8 JSON envelope {topic, seq, t, payload}.
Clients send {"op": "subscribe", "topics": [...]} or
{"op": "publish", "topic": ..., "payload": ...} frames and receive plain
envelopes for their subscribed topics.
"""

from __future__ import annotations

import json
import socket
import socketserver
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import TypeMismatch, UnknownTopic

DEFAULT_QUEUE_LIMIT = 64

_LENGTH = struct.Struct(">I")


@dataclass(frozen=True)
class Envelope:
    topic: str
    seq: int
    t: float
    payload: object

    def to_wire(self) -> dict:
        return {"topic": self.topic, "seq": self.seq, "t": self.t,
                "payload": self.payload}


class Subscription:
    """One consumer's view of a set of topics."""

    def __init__(self, topics: tuple, maxlen: Optional[int]):
        self.topics = topics
        self._queue: deque = deque()
        self._maxlen = maxlen
        self._cond = threading.Condition()
        self.dropped = 0
        self.closed = False

    def _push(self, env: Envelope) -> None:
        with self._cond:
            if self.closed:
                return
            if self._maxlen is not None and len(self._queue) >= self._maxlen:
                self._queue.popleft()
                self.dropped += 1
            self._queue.append(env)
            self._cond.notify()

    def get(self, timeout: Optional[float] = None) -> Optional[Envelope]:
        """Next envelope, or None on timeout / close."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while not self._queue:
                if self.closed:
                    return None
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return None
                self._cond.wait(remaining)
            return self._queue.popleft()

    def drain(self) -> list:
        with self._cond:
            items = list(self._queue)
            self._queue.clear()
            return items

    def close(self) -> None:
        with self._cond:
            self.closed = True
            self._cond.notify_all()


class Broker:
    """Thread-safe topic registry and fan-out."""

    def __init__(self):
        self._lock = threading.Lock()
        self._types: dict[str, type] = {}
        self._seq: dict[tuple, int] = {}
        self._subs: dict[str, list] = {}

    def register_topic(self, name: str, payload_type: type = dict) -> None:
        with self._lock:
            self._types[name] = payload_type
            self._subs.setdefault(name, [])

    def topics(self) -> list[str]:
        with self._lock:
            return sorted(self._types)

    def publish(self, topic: str, payload, publisher: str = "local") -> int:
        with self._lock:
            if topic not in self._types:
                raise UnknownTopic(f"topic {topic!r} is not registered")
            expected = self._types[topic]
            if not isinstance(payload, expected):
                raise TypeMismatch(
                    f"topic {topic!r} carries {expected.__name__}, "
                    f"got {type(payload).__name__}")
            key = (publisher, topic)
            seq = self._seq.get(key, 0) + 1
            self._seq[key] = seq
            env = Envelope(topic=topic, seq=seq, t=time.time(), payload=payload)
            subs = list(self._subs[topic])
        for sub in subs:
            sub._push(env)
        return seq

    def subscribe(self, topics: Iterable[str] | str,
                  maxlen: Optional[int] = DEFAULT_QUEUE_LIMIT,
                  spill: bool = False) -> Subscription:
        """Attach a consumer; spill=True means an unbounded queue (recording)."""
        if isinstance(topics, str):
            topics = (topics,)
        topics = tuple(topics)
        sub = Subscription(topics, None if spill else maxlen)
        with self._lock:
            for t in topics:
                if t not in self._types:
                    raise UnknownTopic(f"topic {t!r} is not registered")
            for t in topics:
                self._subs[t].append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            for t in sub.topics:
                if sub in self._subs.get(t, ()):
                    self._subs[t].remove(sub)
        sub.close()


# --- length-prefixed framing -------------------------------------------------

def encode_frame(obj: dict) -> bytes:
    body = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _LENGTH.pack(len(body)) + body


def read_frame(sock: socket.socket) -> Optional[dict]:
    header = _read_exact(sock, _LENGTH.size)
    if header is None:
        return None
    (length,) = _LENGTH.unpack(header)
    body = _read_exact(sock, length)
    if body is None:
        return None
    return json.loads(body.decode("utf-8"))


def _read_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    chunks = b""
    while len(chunks) < n:
        try:
            part = sock.recv(n - len(chunks))
        except OSError:
            return None
        if not part:
            return None
        chunks += part
    return chunks


class _BridgeHandler(socketserver.BaseRequestHandler):
    def handle(self):
        broker: Broker = self.server.broker  # type: ignore[attr-defined]
        sub: Optional[Subscription] = None
        stop = threading.Event()
        sender: Optional[threading.Thread] = None
        self._send_lock = threading.Lock()
        try:
            while True:
                frame = read_frame(self.request)
                if frame is None:
                    break
                op = frame.get("op")
                if op == "subscribe":
                    if sub is not None:
                        broker.unsubscribe(sub)
                        stop.set()
                        if sender:
                            sender.join()
                        stop = threading.Event()
                    try:
                        sub = broker.subscribe(frame.get("topics", []))
                    except UnknownTopic as exc:
                        self._send({"error": str(exc)})
                        sub = None
                        continue
                    sender = threading.Thread(
                        target=self._pump, args=(sub, stop), daemon=True)
                    sender.start()
                    self._send({"ok": "subscribed", "topics": list(sub.topics)})
                elif op == "publish":
                    try:
                        seq = broker.publish(frame["topic"], frame.get("payload"),
                                             publisher=f"tcp:{self.client_address}")
                        self._send({"ok": "published", "seq": seq})
                    except (UnknownTopic, TypeMismatch, KeyError) as exc:
                        self._send({"error": str(exc)})
                else:
                    self._send({"error": f"unknown op {op!r}"})
        finally:
            stop.set()
            if sub is not None:
                broker.unsubscribe(sub)

    def _pump(self, sub: Subscription, stop: threading.Event):
        while not stop.is_set():
            env = sub.get(timeout=0.2)
            if env is None:
                continue
            try:
                self._send(env.to_wire())
            except OSError:
                return

    def _send(self, obj: dict) -> None:
        with self._send_lock:
            self.request.sendall(encode_frame(obj))


class TopicServer(socketserver.ThreadingTCPServer):
    """TCP bridge exposing a broker's topics to external clients."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, broker: Broker, address: tuple = ("127.0.0.1", 0)):
        super().__init__(address, _BridgeHandler)
        self.broker = broker
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple:
        return self.server_address[:2]

    def start(self) -> "TopicServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread:
            self._thread.join(timeout=2)


class TopicClient:
    """Blocking client for the TCP bridge (used by the CLI)."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._pending: deque = deque()  # envelopes that arrived between replies

    def subscribe(self, topics: Iterable[str]) -> dict:
        self._sock.sendall(encode_frame({"op": "subscribe", "topics": list(topics)}))
        reply = self._await_reply()
        if "error" in reply:
            raise UnknownTopic(reply["error"])
        return reply

    def publish(self, topic: str, payload) -> dict:
        self._sock.sendall(encode_frame({"op": "publish", "topic": topic,
                                         "payload": payload}))
        reply = self._await_reply()
        if "error" in reply:
            if "carries" in reply["error"]:
                raise TypeMismatch(reply["error"])
            raise UnknownTopic(reply["error"])
        return reply

    def _await_reply(self) -> dict:
        while True:
            frame = read_frame(self._sock)
            if frame is None:
                raise ConnectionError("bridge closed")
            if "ok" in frame or "error" in frame:
                return frame
            self._pending.append(frame)

    def recv(self, timeout: Optional[float] = None) -> Optional[dict]:
        if self._pending:
            return self._pending.popleft()
        if timeout is not None:
            self._sock.settimeout(timeout)
        try:
            return read_frame(self._sock)
        except socket.timeout:
            return None

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
