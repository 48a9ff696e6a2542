import json
import socket
import socketserver
import threading
import time

import numpy as np
import pytest

from bayesattack.errors import CapabilityError, ProtocolError, TransportError
from bayesattack.oracle import LinearOracle, ObjectiveSpec, Oracle, QueryLedger, objective, query_hard
from bayesattack.remote import OracleServer, RemoteOracle, parse_address

SHAPE = (1, 4, 4)


@pytest.fixture
def local(rng):
    return LinearOracle(rng.standard_normal((3, 16)), rng.standard_normal(3), SHAPE)


@pytest.fixture
def server(local):
    with OracleServer(local) as srv:
        yield srv


class FakeServer(socketserver.ThreadingTCPServer):
    """Answers the handshake, then replies with ``reply(msg)``."""

    daemon_threads = True

    def __init__(self, reply, modes=("hard", "soft")):
        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                for raw in self.rfile:
                    msg = json.loads(raw)
                    if "hello" in msg:
                        out = {"modes": list(modes), "classes": 3, "shape": list(SHAPE)}
                    else:
                        out = outer.reply(msg)
                    self.wfile.write((out if isinstance(out, bytes) else json.dumps(out).encode()) + b"\n")

        self.reply = reply
        super().__init__(("127.0.0.1", 0), Handler)
        threading.Thread(target=self.serve_forever, daemon=True).start()

    @property
    def address(self):
        return "%s:%d" % self.server_address


def test_parse_address():
    assert parse_address("tcp://localhost:5577") == ("localhost", 5577)
    assert parse_address(":80") == ("127.0.0.1", 80)
    with pytest.raises(ValueError):
        parse_address("localhost")


def test_loopback_matches_local(server, local, rng):
    with RemoteOracle(server.address) as remote:
        assert remote.shape == SHAPE and remote.classes == 3
        for _ in range(50):
            x = rng.uniform(size=SHAPE)
            assert remote.label(x) == local.label(x)
            np.testing.assert_allclose(remote.logits(x), local.logits(x), rtol=1e-12)


def test_objective_over_wire(server, local, rng):
    x0 = rng.uniform(size=SHAPE)
    y0 = local.label(x0)
    delta = rng.uniform(-0.2, 0.2, SHAPE)
    spec = ObjectiveSpec("untargeted", "soft")
    with RemoteOracle(server.address) as remote:
        a = objective(spec, remote, x0, y0, delta, QueryLedger(1))
    assert a == objective(spec, local, x0, y0, delta, QueryLedger(1))


def test_hard_only_server_refuses_soft():
    class HardOnly(Oracle):
        modes = ("hard",)
        shape = SHAPE
        classes = 2

        def logits(self, image):
            return np.array([0.0, 1.0])

    with OracleServer(HardOnly()) as srv, RemoteOracle(srv.address) as remote:
        assert remote.label(np.zeros(SHAPE)) == 1
        with pytest.raises(CapabilityError):
            remote.logits(np.zeros(SHAPE))


def test_malformed_image_rejected_without_charge(server):
    ledger = QueryLedger(5)
    with RemoteOracle(server.address) as remote:
        with pytest.raises(ProtocolError, match="rejected"):
            query_hard(remote, np.zeros((1, 2, 2)), ledger)
        with pytest.raises(ProtocolError):
            query_hard(remote, np.full(SHAPE, np.nan), ledger)
        assert ledger.used == 0
        assert query_hard(remote, np.zeros(SHAPE), ledger) in range(3)
    assert ledger.used == 1


def test_server_answers_garbage(server):
    host, port = parse_address(server.address)
    with socket.create_connection((host, port), timeout=5) as s:
        f = s.makefile("rwb")
        for frame in (b"not json", b"[1,2]", b'{"mode":"hard"}', b'{"id":1,"mode":"fuzzy","image":[]}'):
            f.write(frame + b"\n")
            f.flush()
            assert "error" in json.loads(f.readline())


def test_id_mismatch():
    with FakeServer(lambda m: {"id": m["id"] + 1, "label": 0}) as srv:
        with RemoteOracle(srv.address) as remote:
            ledger = QueryLedger(3)
            with pytest.raises(ProtocolError, match="id"):
                query_hard(remote, np.zeros(SHAPE), ledger)
            assert ledger.used == 0


@pytest.mark.parametrize("method,reply", [
    ("label", lambda m: b"}{"),
    ("label", lambda m: {"id": m["id"], "label": 7}),
    ("label", lambda m: {"id": m["id"], "label": True}),
    ("logits", lambda m: {"id": m["id"], "logits": [1, 2]}),
], ids=["unparseable", "label-range", "label-bool", "logit-count"])
def test_bad_replies(method, reply):
    with FakeServer(reply) as srv, RemoteOracle(srv.address) as remote:
        with pytest.raises(ProtocolError):
            getattr(remote, method)(np.zeros(SHAPE))


def test_connection_refused():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    with pytest.raises(TransportError):
        RemoteOracle(f"127.0.0.1:{port}", timeout=1)


def test_server_disappears(local):
    srv = OracleServer(local).start()
    remote = RemoteOracle(srv.address)
    srv.stop()
    remote._sock.shutdown(socket.SHUT_RDWR)
    ledger = QueryLedger(2)
    with pytest.raises(TransportError):
        query_hard(remote, np.zeros(SHAPE), ledger)
    assert ledger.used == 0
    remote.close()


def test_timeout():
    with FakeServer(lambda m: time.sleep(2) or {"id": m["id"], "label": 0}) as srv:
        with RemoteOracle(srv.address, timeout=0.3) as remote:
            with pytest.raises(TransportError, match="timed out"):
                remote.label(np.zeros(SHAPE))
