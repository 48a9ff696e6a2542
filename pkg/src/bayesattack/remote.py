"""Newline-delimited JSON over TCP for attacking out-of-process models.

Handshake::

    -> {"hello": 1}
    <- {"modes": ["hard", "soft"], "classes": K, "shape": [C, H, W]}

Query::

    -> {"id": n, "mode": "hard" | "soft", "image": [flat row-major floats]}
    <- {"id": n, "label": int}        or   {"id": n, "logits": [...]}

A server that cannot honour a frame answers ``{"id": n, "error": "..."}``
(``id`` is null if it could not be read). Replies must echo the request id.
"""
from __future__ import annotations

import itertools
import json
import logging
import socket
import socketserver
import threading

import numpy as np

from bayesattack.errors import CapabilityError, ProtocolError, TransportError
from bayesattack.oracle import Oracle

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10.0


def parse_address(address: str) -> tuple[str, int]:
    addr = address[len("tcp://"):] if address.startswith("tcp://") else address
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {address!r}")
    return host or "127.0.0.1", int(port)


def _encode(payload) -> bytes:
    return (json.dumps(payload, separators=(",", ":")) + "\n").encode("utf-8")


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        oracle: Oracle = self.server.oracle
        for raw in self.rfile:
            reply = self._answer(oracle, raw)
            try:
                self.wfile.write(_encode(reply))
                self.wfile.flush()
            except OSError:
                return

    @staticmethod
    def _answer(oracle, raw):
        try:
            msg = json.loads(raw)
        except (ValueError, UnicodeDecodeError):
            return {"id": None, "error": "malformed frame"}
        if not isinstance(msg, dict):
            return {"id": None, "error": "frame must be a JSON object"}
        if "hello" in msg:
            return {"modes": list(oracle.modes), "classes": oracle.classes, "shape": list(oracle.shape)}
        qid = msg.get("id")
        if not isinstance(qid, int) or isinstance(qid, bool):
            return {"id": None, "error": "missing or non-integer id"}
        mode = msg.get("mode")
        if mode not in oracle.modes:
            return {"id": qid, "error": f"unsupported mode {mode!r}"}
        try:
            image = np.asarray(msg["image"], dtype=np.float64)
        except (KeyError, TypeError, ValueError):
            return {"id": qid, "error": "image must be a flat list of numbers"}
        if image.ndim != 1 or image.size != int(np.prod(oracle.shape)) or not np.all(np.isfinite(image)):
            return {"id": qid, "error": f"image must hold {int(np.prod(oracle.shape))} finite numbers"}
        image = image.reshape(oracle.shape)
        if mode == "hard":
            return {"id": qid, "label": oracle.label(image)}
        return {"id": qid, "logits": [float(v) for v in oracle.logits(image)]}


class OracleServer(socketserver.ThreadingTCPServer):
    """Serve one in-process oracle; one thread per connection."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, oracle: Oracle, host="127.0.0.1", port=0):
        self.oracle = oracle
        super().__init__((host, port), _Handler)
        self._thread = None

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self):
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.shutdown()
        self.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class RemoteOracle(Oracle):
    """Client side of the wire protocol; requests on one connection are serialized."""

    def __init__(self, address: str, timeout: float = DEFAULT_TIMEOUT):
        host, port = parse_address(address)
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {address}: {exc}") from exc
        self._file = self._sock.makefile("rwb")
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        hello = self._exchange({"hello": 1})
        try:
            self.modes = tuple(hello["modes"])
            self.classes = int(hello["classes"])
            self.shape = tuple(int(s) for s in hello["shape"])
        except (KeyError, TypeError, ValueError) as exc:
            self.close()
            raise ProtocolError(f"bad handshake reply: {hello!r}") from exc
        if len(self.shape) != 3 or self.classes < 1:
            self.close()
            raise ProtocolError(f"bad handshake reply: {hello!r}")

    def _exchange(self, payload):
        try:
            self._file.write(_encode(payload))
            self._file.flush()
            line = self._file.readline()
        except socket.timeout as exc:
            raise TransportError("remote oracle timed out") from exc
        except OSError as exc:
            raise TransportError(f"remote oracle connection failed: {exc}") from exc
        if not line:
            raise TransportError("remote oracle closed the connection")
        try:
            reply = json.loads(line)
        except ValueError as exc:
            raise ProtocolError(f"unparseable reply {line[:80]!r}") from exc
        if not isinstance(reply, dict):
            raise ProtocolError(f"reply is not an object: {reply!r}")
        return reply

    def _request(self, mode, image):
        flat = np.asarray(image, dtype=np.float64).ravel()
        with self._lock:
            qid = next(self._ids)
            reply = self._exchange({"id": qid, "mode": mode, "image": flat.tolist()})
        if reply.get("id") != qid:
            raise ProtocolError(f"reply id {reply.get('id')!r} does not match request id {qid}")
        if "error" in reply:
            raise ProtocolError(f"server rejected query: {reply['error']}")
        return reply

    def label(self, image) -> int:
        reply = self._request("hard", image)
        label = reply.get("label")
        if not isinstance(label, int) or isinstance(label, bool) or not 0 <= label < self.classes:
            raise ProtocolError(f"bad label in reply: {reply!r}")
        return label

    def logits(self, image) -> np.ndarray:
        if "soft" not in self.modes:
            raise CapabilityError("remote oracle only advertises hard-label queries")
        reply = self._request("soft", image)
        try:
            z = np.asarray(reply["logits"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad logits in reply: {reply!r}") from exc
        if z.shape != (self.classes,):
            raise ProtocolError(f"expected {self.classes} logits, got {z.shape}")
        return z

    def close(self):
        for obj in (getattr(self, "_file", None), getattr(self, "_sock", None)):
            if obj is not None:
                try:
                    obj.close()
                except OSError:
                    pass
