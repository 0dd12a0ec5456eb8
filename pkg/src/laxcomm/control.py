"""Reliable control plane for multi-process runs.

Data channels are lossy by design; coordination must not be. Rank 0 runs a
small TCP JSON-lines server that the other ranks connect to. It carries
the start barrier (PREPARE/READY/START with a shared epoch), the lockstep
barriers of modes 0-2 (BARRIER/RELEASE with a leader stop decision), and
the end-of-replicate result gather (RESULT), including final colors for
the mode-4 quality assessment. Rank 0 is itself a worker: at barrier
points it services its peers inline, which is exact lockstep.
"""

from __future__ import annotations

import json
import socket
import time
from typing import Dict, List, Optional

from .errors import BarrierBroken, LaunchError

_CONNECT_RETRY_S = 0.05
_CONNECT_TIMEOUT_S = 20.0
_IO_TIMEOUT_S = 120.0


class _Conn:
    def __init__(self, sock: socket.socket):
        sock.settimeout(_IO_TIMEOUT_S)
        self.sock = sock
        self._rfile = sock.makefile("r", encoding="utf-8")

    def send(self, obj: dict) -> None:
        data = (json.dumps(obj, separators=(",", ":")) + "\n").encode()
        self.sock.sendall(data)

    def recv(self) -> dict:
        line = self._rfile.readline()
        if not line:
            raise BarrierBroken("control connection closed")
        return json.loads(line)

    def close(self):
        try:
            self._rfile.close()
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class ControlServer:
    """Rank 0's side: accepts every peer once, then phase-locked messaging."""

    def __init__(self, host: str, port: int, expected_peers: int):
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._listener.bind((host, port))
        except OSError as e:
            raise LaunchError(f"control bind {host}:{port}: {e}") from e
        self._listener.listen(expected_peers or 1)
        self._listener.settimeout(_CONNECT_TIMEOUT_S)
        self.expected_peers = expected_peers
        self.peers: Dict[int, _Conn] = {}

    def wait_for_peers(self) -> None:
        while len(self.peers) < self.expected_peers:
            try:
                sock, _ = self._listener.accept()
            except socket.timeout as e:
                raise LaunchError(
                    f"only {len(self.peers)}/{self.expected_peers} peers connected"
                ) from e
            conn = _Conn(sock)
            hello = conn.recv()
            if hello.get("type") != "hello" or "rank" not in hello:
                conn.close()
                raise LaunchError(f"bad hello: {hello}")
            self.peers[int(hello["rank"])] = conn

    def broadcast(self, obj: dict) -> None:
        for conn in self.peers.values():
            conn.send(obj)

    def collect(self, expect_type: str) -> Dict[int, dict]:
        """Read exactly one message of the expected type from every peer."""
        out = {}
        for rank, conn in self.peers.items():
            msg = conn.recv()
            if msg.get("type") != expect_type:
                raise BarrierBroken(
                    f"rank {rank} sent {msg.get('type')!r}, expected {expect_type!r}"
                )
            out[rank] = msg
        return out

    def abort(self) -> None:
        try:
            self.broadcast({"type": "abort"})
        except OSError:
            pass

    def close(self):
        for conn in self.peers.values():
            conn.close()
        self._listener.close()


class ControlClient:
    """A peer rank's side."""

    def __init__(self, host: str, port: int, rank: int):
        deadline = time.monotonic() + _CONNECT_TIMEOUT_S
        last_err: Optional[Exception] = None
        while time.monotonic() < deadline:
            try:
                sock = socket.create_connection((host, port), timeout=_IO_TIMEOUT_S)
                break
            except OSError as e:
                last_err = e
                time.sleep(_CONNECT_RETRY_S)
        else:
            raise LaunchError(f"control connect {host}:{port}: {last_err}")
        self.rank = rank
        self.conn = _Conn(sock)
        self.conn.send({"type": "hello", "rank": rank})

    def send(self, obj: dict) -> None:
        self.conn.send(obj)

    def recv(self) -> dict:
        msg = self.conn.recv()
        if msg.get("type") == "abort":
            raise BarrierBroken("coordinator aborted the run")
        return msg

    def close(self):
        self.conn.close()


class ProcessBarrier:
    """GenerationBarrier-compatible barrier spanning all ranks.

    The leader is always rank 0: it gathers one BARRIER (with a local stop
    vote) per peer, folds in its own decision, and broadcasts RELEASE. Any
    rank voting stop stops everyone at the same generation.
    """

    def __init__(self, server: Optional[ControlServer] = None,
                 client: Optional[ControlClient] = None):
        if (server is None) == (client is None):
            raise ValueError("exactly one of server/client")
        self._server = server
        self._client = client
        self._generation = 0

    def wait(self, decide=None) -> tuple:
        gen = self._generation
        vote = bool(decide()) if decide is not None else False
        if self._server is not None:
            try:
                msgs = self._server.collect("barrier")
            except (BarrierBroken, OSError) as e:
                self._server.abort()
                raise BarrierBroken(str(e)) from e
            stop = vote or any(m.get("vote") for m in msgs.values())
            self._server.broadcast({"type": "release", "gen": gen, "stop": stop})
        else:
            self._client.send({"type": "barrier", "gen": gen, "vote": vote})
            msg = self._client.recv()
            if msg.get("type") != "release":
                raise BarrierBroken(f"expected release, got {msg.get('type')!r}")
            stop = bool(msg.get("stop"))
        self._generation += 1
        return gen, stop

    def abort(self):
        if self._server is not None:
            self._server.abort()


def sleep_until_epoch(epoch: float) -> None:
    """Busy-finish sleep to a shared wall-clock start line."""
    while True:
        remaining = epoch - time.time()
        if remaining <= 0:
            return
        time.sleep(min(remaining, 0.01))
