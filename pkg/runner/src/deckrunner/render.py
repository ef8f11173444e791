"""Optional deck-to-PNG rendering via a headless office converter.

Rendering needs an external converter; when none is discoverable the reply
is a declared capability error, not a crash, so callers can skip
image-based checks cleanly.
"""
from __future__ import annotations

import shutil
import subprocess
from pathlib import Path

_CONVERTER_NAMES = ("soffice", "libreoffice")


def find_converter() -> str | None:
    for name in _CONVERTER_NAMES:
        path = shutil.which(name)
        if path:
            return path
    return None


def render(deck_path: str | Path, timeout: float = 120.0) -> dict:
    """Render the deck's first slide to a PNG beside it."""
    deck = Path(deck_path)
    if not deck.is_file():
        return {
            "ok": False,
            "error": {"kind": "input_error", "message": f"no such deck: {deck}"},
        }
    converter = find_converter()
    if converter is None:
        return {
            "ok": False,
            "error": {
                "kind": "converter_missing",
                "message": "no headless office converter (soffice/libreoffice) on PATH",
            },
        }
    out_dir = deck.parent
    try:
        proc = subprocess.run(
            [converter, "--headless", "--convert-to", "png", "--outdir", str(out_dir), str(deck)],
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired:
        return {
            "ok": False,
            "error": {"kind": "timeout", "message": f"conversion exceeded {timeout}s"},
        }
    png = out_dir / (deck.stem + ".png")
    if proc.returncode != 0 or not png.is_file():
        return {
            "ok": False,
            "error": {
                "kind": "conversion_failed",
                "message": proc.stderr.strip() or f"converter exited {proc.returncode}",
            },
        }
    return {"ok": True, "payload": {"png_path": str(png)}}
