"""The newline-delimited membership-query wire protocol."""

import io
import sys
import threading

import numpy as np
import pytest

from copysampler import (
    ExternalOracle,
    HalfspaceOracle,
    ProtocolError,
    QueryTransportError,
    external_handshake,
    parse_handshake,
    serve_oracle,
)
from copysampler.core import RandomSource

SERVER_SNIPPET = (
    "from copysampler.oracles import HalfspaceOracle, serve_stdio; "
    "serve_stdio(HalfspaceOracle(w=(1.0, 0.0), c=0.5))"
)


def spawn_server():
    return ExternalOracle.spawn([sys.executable, "-c", SERVER_SNIPPET])


class TestHandshake:
    def test_valid(self):
        assert parse_handshake("HELLO 2 3\n") == (2, 3)

    def test_zero_dimension_rejected(self):
        with pytest.raises(ProtocolError):
            parse_handshake("HELLO 0 2\n")

    def test_arity_rejected(self):
        with pytest.raises(ProtocolError):
            parse_handshake("HELLO 2\n")

    def test_wrong_tag_rejected(self):
        with pytest.raises(ProtocolError):
            parse_handshake("HOWDY 2 2\n")

    def test_non_integer_rejected(self):
        with pytest.raises(ProtocolError):
            parse_handshake("HELLO two 3\n")

    def test_reads_from_transport(self):
        assert external_handshake(io.StringIO("HELLO 4 2\n")) == (4, 2)

    def test_eof_before_handshake(self):
        with pytest.raises(ProtocolError):
            external_handshake(io.StringIO(""))


class TestInProcessServer:
    def _run(self, requests: str):
        inbound = io.StringIO(requests)
        outbound = io.StringIO()
        oracle = HalfspaceOracle(w=(1.0, 0.0), c=0.5)
        answered = serve_oracle(oracle, inbound, outbound)
        return answered, outbound.getvalue()

    def test_greeting_and_labels(self):
        answered, out = self._run("0.7 0.2\n0.3 0.9\nBYE\n")
        lines = out.splitlines()
        assert lines[0] == "HELLO 2 2"
        assert lines[1:] == ["1", "0"]
        assert answered == 2

    def test_eof_terminates(self):
        answered, out = self._run("0.7 0.2\n")
        assert answered == 1

    def test_malformed_request_raises(self):
        with pytest.raises(ProtocolError):
            self._run("0.7\n")

    def test_non_numeric_request_raises(self):
        with pytest.raises(ProtocolError):
            self._run("a b\n")


class TestChildProcess:
    def test_end_to_end_matches_direct(self):
        direct = HalfspaceOracle(w=(1.0, 0.0), c=0.5)
        with spawn_server() as remote:
            assert (remote.d, remote.k) == (2, 2)
            rng = RandomSource(31)
            X = rng.uniform((50, 2))
            np.testing.assert_array_equal(remote.query_many(X), direct.query_many(X))
            assert remote.query_count == 50

    def test_transport_failure_raises(self):
        remote = spawn_server()
        remote._proc.kill()
        remote._proc.wait()
        with pytest.raises((QueryTransportError, ProtocolError)):
            for _ in range(3):  # first write may land in a dying pipe buffer
                remote.query(np.array([0.1, 0.2]))

    def test_bye_shuts_down_cleanly(self):
        remote = spawn_server()
        remote.query(np.array([0.9, 0.9]))
        remote.close()
        assert remote._proc.returncode == 0


class TestStreamPairTransport:
    def test_duplex_pipe(self):
        # exercise the protocol over plain in-process pipes, no subprocess
        c2s_r, c2s_w = _pipe_pair()
        s2c_r, s2c_w = _pipe_pair()
        oracle = HalfspaceOracle(w=(0.0, 1.0), c=0.25)
        server = threading.Thread(target=serve_oracle, args=(oracle, c2s_r, s2c_w))
        server.start()
        client = ExternalOracle(s2c_r, c2s_w)
        assert client.query(np.array([0.0, 0.9])) == 1
        assert client.query(np.array([0.0, 0.1])) == 0
        client.close()
        server.join(timeout=5)
        assert not server.is_alive()

    def test_label_out_of_range_rejected(self):
        reader = io.StringIO("HELLO 1 2\n7\n")
        writer = io.StringIO()
        client = ExternalOracle(reader, writer)
        with pytest.raises(ProtocolError):
            client.query(np.array([0.5]))


def _pipe_pair():
    import os

    r_fd, w_fd = os.pipe()
    return os.fdopen(r_fd, "r"), os.fdopen(w_fd, "w")
