"""Newline-delimited JSON protocol for scorers living in another process.

Handshake::

    -> {"op": "hello"}
    <- {"vocab": [...], "bos": i, "eos": j}

Query::

    -> {"op": "score", "source": [ids], "prefix": [ids]}
    <- {"logprobs": [f, ...]}          # one entry per vocabulary item

Failures come back as ``{"error": "message"}``.  Transport is a TCP socket
or a child process's stdin/stdout.
"""

from __future__ import annotations

import json
import logging
import math
import os
import select
import shlex
import socket
import socketserver
import subprocess
import sys
import threading
from typing import Optional, Sequence

import numpy as np

from .scorer import NORM_TOL, UNK, Scorer, ScorerError, Vocabulary

log = logging.getLogger(__name__)


class ScorerProtocolError(ScorerError):
    pass


class ScorerTimeout(ScorerProtocolError):
    pass


class MalformedReply(ScorerProtocolError):
    pass


class NormalizationError(ScorerProtocolError):
    pass


class VocabularyMismatch(ScorerProtocolError):
    pass


class RemoteScorerError(ScorerProtocolError):
    """The server answered with an ``{"error": ...}`` message."""


# -- server side -------------------------------------------------------------


def handle_message(scorer: Scorer, msg) -> dict:
    vocab = scorer.vocab
    if not isinstance(msg, dict):
        return {"error": "request must be a JSON object"}
    op = msg.get("op")
    if op == "hello":
        return {"vocab": vocab.tokens, "bos": vocab.bos_id, "eos": vocab.eos_id}
    if op == "score":
        try:
            source = [vocab.token(int(i)) for i in msg["source"]]
            prefix = [vocab.token(int(i)) for i in msg["prefix"]]
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            return {"error": f"bad score request: {exc!r}"}
        try:
            row = scorer.score_next(source, prefix)
        except ScorerError as exc:
            return {"error": str(exc)}
        return {"logprobs": [float(x) for x in row]}
    return {"error": f"unknown op {op!r}"}


def _reply_line(scorer: Scorer, line: bytes) -> bytes:
    try:
        msg = json.loads(line)
    except ValueError as exc:
        reply = {"error": f"invalid JSON: {exc}"}
    else:
        reply = handle_message(scorer, msg)
    return (json.dumps(reply) + "\n").encode()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for line in self.rfile:
            if not line.strip():
                continue
            self.wfile.write(_reply_line(self.server.scorer, line))
            self.wfile.flush()


class ScorerServer(socketserver.ThreadingTCPServer):
    """Serve ``scorer`` on a local TCP port (0 picks a free one).

    Use as a context manager; ``endpoint`` is the ``host:port`` string the
    client expects.
    """

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, scorer: Scorer, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.scorer = scorer
        self._thread: Optional[threading.Thread] = None

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "ScorerServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve_stdio(scorer: Scorer, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(_reply_line(scorer, line))
        stdout.flush()


# -- client side -------------------------------------------------------------


class _Channel:
    """Line-oriented reader/writer over a raw file descriptor with timeouts."""

    def __init__(self, rfd: int, write, close):
        self.rfd = rfd
        self._write = write
        self._close = close
        self._buf = b""

    def send(self, data: bytes) -> None:
        self._write(data)

    def readline(self, timeout: float) -> bytes:
        while b"\n" not in self._buf:
            ready, _, _ = select.select([self.rfd], [], [], timeout)
            if not ready:
                raise ScorerTimeout(f"no reply within {timeout}s")
            chunk = os.read(self.rfd, 65536)
            if not chunk:
                raise MalformedReply("connection closed by scorer")
            self._buf += chunk
        line, _, self._buf = self._buf.partition(b"\n")
        return line

    def close(self) -> None:
        self._close()


def _open_channel(endpoint: str, timeout: float) -> _Channel:
    if endpoint.startswith("exec:"):
        proc = subprocess.Popen(shlex.split(endpoint[5:]), stdin=subprocess.PIPE, stdout=subprocess.PIPE)

        def write(data):
            proc.stdin.write(data)
            proc.stdin.flush()

        def close():
            proc.stdin.close()
            proc.wait(timeout=timeout)
            proc.stdout.close()

        return _Channel(proc.stdout.fileno(), write, close)

    address = endpoint[6:] if endpoint.startswith("tcp://") else endpoint
    host, _, port = address.rpartition(":")
    try:
        sock = socket.create_connection((host, int(port)), timeout=timeout)
    except socket.timeout:
        raise ScorerTimeout(f"connecting to {endpoint} timed out") from None
    except (OSError, ValueError) as exc:
        raise ScorerProtocolError(f"cannot connect to {endpoint}: {exc}") from None
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return _Channel(sock.fileno(), sock.sendall, sock.close)


class ExternalScorer(Scorer):
    """Client for the protocol; behaves like any in-process scorer.

    ``endpoint`` is ``host:port`` (optionally ``tcp://``-prefixed) or
    ``exec:<command>`` to spawn a server speaking over stdio.  Passing
    ``vocab`` makes the handshake verify the server's vocabulary.
    """

    def __init__(self, endpoint: str, vocab: Optional[Vocabulary] = None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._expected = vocab
        self._lock = threading.Lock()
        self._chan: Optional[_Channel] = None
        self.vocab = self._handshake()

    def _request(self, msg: dict) -> dict:
        if self._chan is None:
            self._chan = _open_channel(self.endpoint, self.timeout)
        self._chan.send((json.dumps(msg) + "\n").encode())
        line = self._chan.readline(self.timeout)
        try:
            reply = json.loads(line)
        except ValueError:
            raise MalformedReply(f"reply is not JSON: {line[:80]!r}") from None
        if not isinstance(reply, dict):
            raise MalformedReply("reply must be a JSON object")
        if "error" in reply:
            raise RemoteScorerError(str(reply["error"]))
        return reply

    def _handshake(self) -> Vocabulary:
        with self._lock:
            reply = self._request({"op": "hello"})
        try:
            tokens = list(reply["vocab"])
            bos, eos = tokens[int(reply["bos"])], tokens[int(reply["eos"])]
            vocab = Vocabulary(tokens, bos, eos, UNK if UNK in tokens else None)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise MalformedReply(f"bad handshake reply: {exc!r}") from None
        if self._expected is not None and vocab != self._expected:
            raise VocabularyMismatch("server vocabulary differs from the expected one")
        return vocab

    def _ids(self, tokens: Sequence[str]) -> list[int]:
        try:
            return [self.vocab.id(t) for t in tokens]
        except KeyError as exc:
            raise VocabularyMismatch(f"token {exc.args[0]!r} not in server vocabulary") from None

    def score_next(self, source, prefix):
        msg = {"op": "score", "source": self._ids(source), "prefix": self._ids(prefix)}
        with self._lock:
            reply = self._request(msg)
        row = reply.get("logprobs")
        if not isinstance(row, list) or len(row) != len(self.vocab):
            raise MalformedReply(f"expected {len(self.vocab)} log-probabilities")
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in row):
            raise MalformedReply("log-probabilities must be numbers")
        arr = np.asarray(row, dtype=float)
        if np.any(np.isnan(arr)) or np.any(arr > 0):
            raise NormalizationError("log-probabilities must be <= 0")
        total = math.fsum(np.exp(arr).tolist())
        if abs(total - 1.0) > NORM_TOL:
            raise NormalizationError(f"probabilities sum to {total!r}")
        return arr

    def close(self) -> None:
        with self._lock:
            if self._chan is not None:
                self._chan.close()
                self._chan = None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_chan"] = None
        state["_lock"] = None
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def main(argv=None) -> int:
    """``python -m editdecode.protocol MODEL.json [--port N | --stdio]``"""
    import argparse

    from .scorer import CopyBiasedScorer, load_scorer_file

    ap = argparse.ArgumentParser(prog="editdecode-scorer-server")
    ap.add_argument("model")
    ap.add_argument("--copy-weight", type=float, default=0.0)
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=0)
    ap.add_argument("--stdio", action="store_true")
    args = ap.parse_args(argv)
    scorer = load_scorer_file(args.model)
    if args.copy_weight:
        scorer = CopyBiasedScorer(scorer, args.copy_weight)
    if args.stdio:
        serve_stdio(scorer)
        return 0
    server = ScorerServer(scorer, args.host, args.port)
    print(server.endpoint, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
