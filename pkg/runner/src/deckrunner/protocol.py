"""Line-delimited JSON protocol over stdio.

One request line in, exactly one reply line out, ids and ops echoed back.
Requests: {"id": ..., "op": "syntax_check" | "execute" | "extract" | "render",
...op params}. Replies: {"id", "op", "ok", "payload"?} or
{"id", "op", "ok": false, "error": {"kind", "message", ...}}.
The process serves requests serially until stdin closes.
"""
from __future__ import annotations

import json
import sys

from .extract import ExtractError, extract
from .render import render
from .sandbox import execute, syntax_check

OPS = ("syntax_check", "execute", "extract", "render")


def handle(request: dict) -> dict:
    op = request.get("op")
    base = {"id": request.get("id"), "op": op}
    if op not in OPS:
        return {
            **base,
            "ok": False,
            "error": {"kind": "bad_request", "message": f"unknown op {op!r}"},
        }
    try:
        if op == "syntax_check":
            result = syntax_check(str(request.get("code", "")))
        elif op == "execute":
            if "workdir" not in request:
                return {
                    **base,
                    "ok": False,
                    "error": {"kind": "bad_request", "message": "execute requires workdir"},
                }
            result = execute(
                str(request.get("code", "")),
                request["workdir"],
                float(request.get("timeout", 30.0)),
            )
        elif op == "extract":
            try:
                shapes = extract(request.get("deck_path", ""))
                result = {"ok": True, "payload": {"shapes": shapes}}
            except ExtractError as exc:
                result = {"ok": False, "error": {"kind": "input_error", "message": str(exc)}}
        else:
            result = render(request.get("deck_path", ""))
    except Exception as exc:  # a handler bug must not kill the protocol loop
        result = {"ok": False, "error": {"kind": "internal_error", "message": str(exc)}}
    return {**base, **result}


def serve(stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            reply = {
                "id": None,
                "op": None,
                "ok": False,
                "error": {"kind": "bad_request", "message": f"undecodable request: {exc}"},
            }
        else:
            reply = handle(request)
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()


def main() -> None:
    serve()


if __name__ == "__main__":
    main()
