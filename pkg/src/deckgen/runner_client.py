"""Client for the sandbox runner's line-delimited JSON stdio protocol.

The runner is a separate process that syntax-probes code fragments, executes
candidate programs in a scratch directory, and extracts shape inventories
from the decks they produce. One request line yields exactly one reply line
with a matching id and op.
"""
from __future__ import annotations

import json
import subprocess
import threading
from pathlib import Path


class RunnerProtocolError(Exception):
    pass


class RunnerClient:
    def __init__(self, cmd: list[str]):
        self._proc = subprocess.Popen(
            cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lock = threading.Lock()
        self._next_id = 0

    def request(self, op: str, **params) -> dict:
        """Send one request and block for its reply; ids must round-trip."""
        with self._lock:
            self._next_id += 1
            req_id = self._next_id
            payload = {"id": req_id, "op": op, **params}
            if self._proc.poll() is not None:
                raise RunnerProtocolError("runner process has exited")
            assert self._proc.stdin and self._proc.stdout
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        if not line:
            raise RunnerProtocolError("runner closed its output stream")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RunnerProtocolError(f"undecodable reply line: {line!r}") from exc
        if reply.get("id") != req_id or reply.get("op") != op:
            raise RunnerProtocolError(
                f"desynchronized reply: sent id={req_id} op={op}, "
                f"got id={reply.get('id')} op={reply.get('op')}"
            )
        return reply

    def syntax_check(self, code: str) -> dict:
        return self.request("syntax_check", code=code)

    def execute(self, code: str, workdir: str | Path, timeout: float = 30.0) -> dict:
        return self.request("execute", code=code, workdir=str(workdir), timeout=timeout)

    def extract(self, deck_path: str | Path) -> dict:
        return self.request("extract", deck_path=str(deck_path))

    def render(self, deck_path: str | Path) -> dict:
        return self.request("render", deck_path=str(deck_path))

    def close(self) -> None:
        if self._proc.poll() is None:
            if self._proc.stdin:
                self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "RunnerClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def runner_syntax_checker(client: RunnerClient):
    """Snippet-stage checker: syntax probe only, fragments need not run."""

    def check(code: str) -> str | None:
        reply = client.syntax_check(code)
        if reply.get("ok"):
            return None
        err = reply.get("error", {})
        return f"{err.get('kind', 'error')}: {err.get('message', 'unknown failure')}"

    return check


def runner_execution_checker(client: RunnerClient, workdir: str | Path, timeout: float = 30.0):
    """Assembly-stage checker: full execution in the program working directory."""

    def check(code: str) -> str | None:
        reply = client.execute(code, workdir, timeout)
        if reply.get("ok"):
            return None
        err = reply.get("error", {})
        message = err.get("message", "unknown failure")
        trace = err.get("traceback")
        return f"{err.get('kind', 'error')}: {message}" + (f"\n{trace}" if trace else "")

    return check
