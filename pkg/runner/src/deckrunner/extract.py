"""Shape-inventory extraction straight from the deck package XML.

Parses the Office Open XML parts with the standard library; deliberately
independent of any deck-writing code so inventories double as a check on
whatever produced the file. Positions convert EMU to inches (914400 per
inch); text concatenates all runs, paragraphs joined by newlines; the style
subset covers solid fill color plus first-run font size/bold.
"""
from __future__ import annotations

import re
import zipfile
from pathlib import Path
from xml.etree import ElementTree

from . import EMU_PER_INCH

_NS = {
    "p": "http://schemas.openxmlformats.org/presentationml/2006/main",
    "a": "http://schemas.openxmlformats.org/drawingml/2006/main",
}


class ExtractError(Exception):
    pass


def _bbox_inches(sp_pr) -> tuple[float, float, float, float]:
    if sp_pr is None:
        return (0.0, 0.0, 0.0, 0.0)
    xfrm = sp_pr.find("a:xfrm", _NS)
    if xfrm is None:
        return (0.0, 0.0, 0.0, 0.0)
    off = xfrm.find("a:off", _NS)
    ext = xfrm.find("a:ext", _NS)
    x = int(off.get("x", "0")) if off is not None else 0
    y = int(off.get("y", "0")) if off is not None else 0
    cx = int(ext.get("cx", "0")) if ext is not None else 0
    cy = int(ext.get("cy", "0")) if ext is not None else 0
    return (x / EMU_PER_INCH, y / EMU_PER_INCH, cx / EMU_PER_INCH, cy / EMU_PER_INCH)


def _text_of(element) -> str:
    tx_body = element.find("p:txBody", _NS)
    if tx_body is None:
        return ""
    lines = []
    for para in tx_body.findall("a:p", _NS):
        runs = [t.text or "" for t in para.findall(".//a:t", _NS)]
        lines.append("".join(runs))
    return "\n".join(lines)


def _style_of(element) -> dict:
    style: dict = {}
    sp_pr = element.find("p:spPr", _NS)
    if sp_pr is not None:
        fill = sp_pr.find("a:solidFill/a:srgbClr", _NS)
        if fill is not None and fill.get("val"):
            style["fill"] = fill.get("val")
        geom = sp_pr.find("a:prstGeom", _NS)
        if geom is not None and geom.get("prst"):
            style["preset"] = geom.get("prst")
    rpr = element.find("p:txBody/a:p/a:r/a:rPr", _NS)
    if rpr is not None:
        if rpr.get("sz"):
            style["font_size"] = int(rpr.get("sz")) / 100.0
        if rpr.get("b") is not None:
            style["bold"] = rpr.get("b") in ("1", "true")
    return style


def _type_name(element) -> str:
    tag = element.tag.split("}")[-1]
    if tag == "pic":
        return "picture"
    if tag == "cxnSp":
        return "connector"
    if tag == "graphicFrame":
        return "table" if element.find(".//a:tbl", _NS) is not None else "graphic_frame"
    if tag == "grpSp":
        return "group"
    if tag == "sp":
        ph = element.find("p:nvSpPr/p:nvPr/p:ph", _NS)
        if ph is not None:
            return "placeholder"
        cnv = element.find("p:nvSpPr/p:cNvSpPr", _NS)
        if cnv is not None and cnv.get("txBox") == "1":
            return "textbox"
        return "autoshape"
    return tag


def _shape_records(sp_tree) -> list[dict]:
    records = []
    skip = {"nvGrpSpPr", "grpSpPr"}
    for element in sp_tree:
        tag = element.tag.split("}")[-1]
        if tag in skip:
            continue
        records.append(
            {
                "type_name": _type_name(element),
                "bbox": list(_bbox_inches(element.find("p:spPr", _NS))),
                "text": _text_of(element),
                "style": _style_of(element),
            }
        )
    return records


def _first_slide_name(zf: zipfile.ZipFile) -> str | None:
    slides = []
    for name in zf.namelist():
        match = re.fullmatch(r"ppt/slides/slide(\d+)\.xml", name)
        if match:
            slides.append((int(match.group(1)), name))
    if not slides:
        return None
    return min(slides)[1]


def extract(deck_path: str | Path) -> list[dict]:
    """Inventory of the deck's first slide as plain dicts (see module doc)."""
    path = Path(deck_path)
    if not path.is_file():
        raise ExtractError(f"no such deck: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            slide_name = _first_slide_name(zf)
            if slide_name is None:
                return []
            root = ElementTree.fromstring(zf.read(slide_name))
    except (zipfile.BadZipFile, ElementTree.ParseError, KeyError) as exc:
        raise ExtractError(f"unreadable deck {path}: {exc}") from exc
    sp_tree = root.find("p:cSld/p:spTree", _NS)
    if sp_tree is None:
        return []
    return _shape_records(sp_tree)
