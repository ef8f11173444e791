"""Syntax probing and isolated execution of candidate slide programs.

The syntax probe only parses: fragments legitimately reference names such as
``slide`` or ``prs`` that exist in the harness that will eventually host
them, so no execution happens at snippet stage. Execution runs the full
program in a child interpreter whose working directory is the supplied
scratch dir; relative paths (picture assets, the saved deck) resolve there
and nothing outside it is touched by a well-formed program. Success demands
a clean exit plus a produced .pptx.
"""
from __future__ import annotations

import os
import subprocess
import sys
from pathlib import Path

# Child preamble: prefer the real python-pptx, fall back to the bundled
# compatible writer so generated programs run in hermetic environments.
_BOOTSTRAP = """\
import sys
program_path = sys.argv[1]
sys.argv = sys.argv[1:]
try:
    import pptx  # noqa: F401
except ImportError:
    from deckrunner import pptx_compat
    pptx_compat.install()
with open(program_path, encoding="utf-8") as fh:
    source = fh.read()
code = compile(source, "program.py", "exec")
exec(code, {"__name__": "__main__", "__file__": program_path})
"""


def syntax_check(code: str) -> dict:
    """Parse ``code``; never executes. Errors carry one-based line numbers."""
    try:
        compile(code, "<snippet>", "exec")
    except SyntaxError as exc:
        return {
            "ok": False,
            "error": {
                "kind": "syntax_error",
                "message": f"line {exc.lineno}: {exc.msg}",
                "line": exc.lineno,
            },
        }
    return {"ok": True, "payload": {}}


def execute(code: str, workdir: str | Path, timeout: float = 30.0) -> dict:
    """Run a program in ``workdir``; reply with the produced deck path."""
    if timeout <= 0:
        return {
            "ok": False,
            "error": {"kind": "bad_request", "message": "timeout must be positive"},
        }
    wd = Path(workdir)
    wd.mkdir(parents=True, exist_ok=True)
    program = wd / "program.py"
    program.write_text(code, encoding="utf-8")

    env = dict(os.environ)
    pkg_parent = str(Path(__file__).resolve().parent.parent)
    env["PYTHONPATH"] = pkg_parent + (
        os.pathsep + env["PYTHONPATH"] if env.get("PYTHONPATH") else ""
    )
    try:
        proc = subprocess.run(
            [sys.executable, "-c", _BOOTSTRAP, str(program)],
            cwd=wd,
            env=env,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired:
        return {
            "ok": False,
            "error": {
                "kind": "timeout",
                "message": f"program exceeded {timeout}s and was killed",
            },
        }
    if proc.returncode != 0:
        return {
            "ok": False,
            "error": {
                "kind": "runtime_error",
                "message": f"program exited with status {proc.returncode}",
                "traceback": proc.stderr.strip(),
            },
        }
    decks = sorted(wd.glob("*.pptx"), key=lambda p: (p.stat().st_mtime, p.name))
    if not decks:
        return {
            "ok": False,
            "error": {
                "kind": "no_output_file",
                "message": "program exited cleanly but produced no .pptx file",
            },
        }
    return {"ok": True, "payload": {"deck_path": str(decks[-1])}}
