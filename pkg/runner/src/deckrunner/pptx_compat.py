"""Minimal stand-in for the python-pptx API surface generated programs use.

Writes genuine Office Open XML packages with the standard library, so decks
built here survive independent inspection (the extractor parses the XML, it
never imports this module). Installed into ``sys.modules`` as ``pptx`` only
when the real library is absent; programs keep their normal imports either
way.

Supported subset: blank presentations, slide size, textboxes, preset-geometry
autoshapes, pictures, straight/elbow connectors, paragraph/run text with
size/bold/italic/color, solid fills, and line color/width.
"""
from __future__ import annotations

import sys
import types
import zipfile
from pathlib import Path
from xml.sax.saxutils import escape

EMU_PER_INCH = 914400
EMU_PER_POINT = 12700
EMU_PER_CM = 360000


class Length(int):
    """EMU integer with unit accessors, mirroring the real library's Length."""

    @property
    def emu(self) -> int:
        return int(self)

    @property
    def inches(self) -> float:
        return int(self) / EMU_PER_INCH

    @property
    def pt(self) -> float:
        return int(self) / EMU_PER_POINT

    @property
    def cm(self) -> float:
        return int(self) / EMU_PER_CM


def Inches(value: float) -> Length:
    return Length(round(value * EMU_PER_INCH))


def Pt(value: float) -> Length:
    return Length(round(value * EMU_PER_POINT))


def Emu(value: int) -> Length:
    return Length(int(value))


class RGBColor(tuple):
    def __new__(cls, r: int, g: int, b: int):
        for channel in (r, g, b):
            if not 0 <= channel <= 255:
                raise ValueError("channel values must be 0-255")
        return super().__new__(cls, (r, g, b))

    def __str__(self) -> str:
        return "%02X%02X%02X" % self

    @classmethod
    def from_string(cls, value: str) -> "RGBColor":
        value = value.lstrip("#")
        return cls(int(value[0:2], 16), int(value[2:4], 16), int(value[4:6], 16))


class _Enum:
    def __init__(self, name: str, value: str):
        self.name = name
        self.value = value  # prstGeom preset string

    def __repr__(self):
        return f"{self.name} ({self.value})"


class MSO_SHAPE:
    RECTANGLE = _Enum("RECTANGLE", "rect")
    ROUNDED_RECTANGLE = _Enum("ROUNDED_RECTANGLE", "roundRect")
    OVAL = _Enum("OVAL", "ellipse")
    ISOCELES_TRIANGLE = _Enum("ISOCELES_TRIANGLE", "triangle")
    RIGHT_TRIANGLE = _Enum("RIGHT_TRIANGLE", "rtTriangle")
    DIAMOND = _Enum("DIAMOND", "diamond")
    PENTAGON = _Enum("PENTAGON", "pentagon")
    HEXAGON = _Enum("HEXAGON", "hexagon")
    OCTAGON = _Enum("OCTAGON", "octagon")
    STAR_5_POINT = _Enum("STAR_5_POINT", "star5")
    CHEVRON = _Enum("CHEVRON", "chevron")
    RIGHT_ARROW = _Enum("RIGHT_ARROW", "rightArrow")
    LEFT_ARROW = _Enum("LEFT_ARROW", "leftArrow")
    UP_ARROW = _Enum("UP_ARROW", "upArrow")
    DOWN_ARROW = _Enum("DOWN_ARROW", "downArrow")


class MSO_CONNECTOR:
    STRAIGHT = _Enum("STRAIGHT", "line")
    ELBOW = _Enum("ELBOW", "bentConnector3")


class PP_ALIGN:
    LEFT = "l"
    CENTER = "ctr"
    RIGHT = "r"
    JUSTIFY = "just"


class _ColorFormat:
    def __init__(self):
        self.rgb: RGBColor | None = None


class _FillFormat:
    def __init__(self):
        self.fore_color = _ColorFormat()
        self._kind: str | None = None

    def solid(self):
        self._kind = "solid"

    def background(self):
        self._kind = "none"
        self.fore_color = _ColorFormat()


class _LineFormat:
    def __init__(self):
        self.color = _ColorFormat()
        self.width: Length | None = None


class _Font:
    def __init__(self):
        self.size: Length | None = None
        self.bold: bool | None = None
        self.italic: bool | None = None
        self.name: str | None = None
        self.color = _ColorFormat()


class _Run:
    def __init__(self, text: str = ""):
        self.text = text
        self.font = _Font()


class _Paragraph:
    def __init__(self):
        self.runs: list[_Run] = []
        self.font = _Font()
        self.alignment: str | None = None

    @property
    def text(self) -> str:
        return "".join(r.text for r in self.runs)

    @text.setter
    def text(self, value: str):
        self.runs = [_Run(value)]

    def add_run(self) -> _Run:
        run = _Run()
        self.runs.append(run)
        return run


class _TextFrame:
    def __init__(self):
        self.paragraphs: list[_Paragraph] = [_Paragraph()]
        self.word_wrap: bool | None = None

    @property
    def text(self) -> str:
        return "\n".join(p.text for p in self.paragraphs)

    @text.setter
    def text(self, value: str):
        lines = value.split("\n")
        self.paragraphs = []
        for line in lines:
            para = _Paragraph()
            para.text = line
            self.paragraphs.append(para)
        if not self.paragraphs:
            self.paragraphs = [_Paragraph()]

    def add_paragraph(self) -> _Paragraph:
        para = _Paragraph()
        self.paragraphs.append(para)
        return para


class _Shape:
    def __init__(self, kind: str, left, top, width, height, preset: str = "rect",
                 is_textbox: bool = False, image_path: str | None = None):
        self.kind = kind  # "textbox" | "autoshape" | "picture" | "connector"
        self.left = Length(left)
        self.top = Length(top)
        self.width = Length(width)
        self.height = Length(height)
        self.preset = preset
        self.is_textbox = is_textbox
        self.image_path = image_path
        self.fill = _FillFormat()
        self.line = _LineFormat()
        self.text_frame = _TextFrame() if kind in ("textbox", "autoshape") else None

    @property
    def text(self) -> str:
        return self.text_frame.text if self.text_frame else ""


class _Shapes:
    def __init__(self, slide: "_Slide"):
        self._slide = slide
        self._items: list[_Shape] = []

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def add_textbox(self, left, top, width, height) -> _Shape:
        shape = _Shape("textbox", left, top, width, height, is_textbox=True)
        self._items.append(shape)
        return shape

    def add_shape(self, shape_type: _Enum, left, top, width, height) -> _Shape:
        shape = _Shape("autoshape", left, top, width, height, preset=shape_type.value)
        self._items.append(shape)
        return shape

    def add_picture(self, image_file, left, top, width=None, height=None) -> _Shape:
        path = Path(image_file)
        if not path.is_file():
            raise FileNotFoundError(f"no such image: {image_file}")
        w, h = width, height
        if w is None or h is None:
            iw, ih = _png_dimensions(path)
            native_w = Length(round(iw * EMU_PER_INCH / 96))  # 96 dpi convention
            native_h = Length(round(ih * EMU_PER_INCH / 96))
            if w is None and h is None:
                w, h = native_w, native_h
            elif w is None:
                w = Length(round(int(h) * iw / ih))
            else:
                h = Length(round(int(w) * ih / iw))
        shape = _Shape("picture", left, top, w, h, image_path=str(path))
        self._items.append(shape)
        return shape

    def add_connector(self, connector_type: _Enum, begin_x, begin_y, end_x, end_y) -> _Shape:
        left, width = sorted((int(begin_x), int(end_x)))
        top, height = sorted((int(begin_y), int(end_y)))
        shape = _Shape("connector", left, top, width - left, height - top,
                       preset=connector_type.value)
        self._items.append(shape)
        return shape


def _png_dimensions(path: Path) -> tuple[int, int]:
    # PNG IHDR: width/height are bytes 16-24 of the file.
    with open(path, "rb") as fh:
        head = fh.read(24)
    if len(head) < 24 or head[:8] != b"\x89PNG\r\n\x1a\n":
        return (96, 96)  # non-PNG assets get a 1-inch default
    return int.from_bytes(head[16:20], "big"), int.from_bytes(head[20:24], "big")


class _Slide:
    def __init__(self):
        self.shapes = _Shapes(self)


class _Slides:
    def __init__(self):
        self._items: list[_Slide] = []

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def add_slide(self, layout) -> _Slide:
        slide = _Slide()
        self._items.append(slide)
        return slide


class _SlideLayout:
    def __init__(self, index: int):
        self.index = index


class Presentation:
    def __init__(self, pptx=None):
        if pptx is not None:
            raise NotImplementedError(
                "the fallback writer builds new decks only; reading an "
                "existing .pptx requires the real python-pptx library"
            )
        self.slide_width = Inches(10.0)
        self.slide_height = Inches(7.5)
        self.slides = _Slides()
        self.slide_layouts = [_SlideLayout(i) for i in range(7)]

    def save(self, path) -> None:
        _PackageWriter(self).write(Path(path))


# ---------------------------------------------------------------------------
# OOXML serialization

_NS_DECLS = (
    'xmlns:a="http://schemas.openxmlformats.org/drawingml/2006/main" '
    'xmlns:r="http://schemas.openxmlformats.org/officeDocument/2006/relationships" '
    'xmlns:p="http://schemas.openxmlformats.org/presentationml/2006/main"'
)

_XML_HEADER = '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n'


def _solid_fill_xml(color: RGBColor | None) -> str:
    if color is None:
        return ""
    return f'<a:solidFill><a:srgbClr val="{color}"/></a:solidFill>'


def _run_props_xml(font: _Font) -> str:
    attrs = ['lang="en-US"']
    if font.size is not None:
        attrs.append(f'sz="{int(font.size) * 100 // EMU_PER_POINT}"')
    if font.bold is not None:
        attrs.append(f'b="{1 if font.bold else 0}"')
    if font.italic is not None:
        attrs.append(f'i="{1 if font.italic else 0}"')
    inner = _solid_fill_xml(font.color.rgb)
    if font.name:
        inner += f'<a:latin typeface="{escape(font.name)}"/>'
    if inner:
        return f"<a:rPr {' '.join(attrs)}>{inner}</a:rPr>"
    return f"<a:rPr {' '.join(attrs)}/>"


def _merged_font(run: _Run, para: _Paragraph) -> _Font:
    # Paragraph-level font acts as the default for runs that do not override.
    font = _Font()
    for attr in ("size", "bold", "italic", "name"):
        run_v = getattr(run.font, attr)
        para_v = getattr(para.font, attr)
        setattr(font, attr, run_v if run_v is not None else para_v)
    font.color.rgb = run.font.color.rgb or para.font.color.rgb
    return font


def _tx_body_xml(tf: _TextFrame) -> str:
    paras = []
    for para in tf.paragraphs:
        ppr = f'<a:pPr algn="{para.alignment}"/>' if para.alignment else ""
        runs = "".join(
            f"<a:r>{_run_props_xml(_merged_font(run, para))}<a:t>{escape(run.text)}</a:t></a:r>"
            for run in para.runs
        )
        paras.append(f"<a:p>{ppr}{runs}</a:p>")
    return f"<p:txBody><a:bodyPr/><a:lstStyle/>{''.join(paras)}</p:txBody>"


def _xfrm_xml(shape: _Shape) -> str:
    return (
        f'<a:xfrm><a:off x="{int(shape.left)}" y="{int(shape.top)}"/>'
        f'<a:ext cx="{int(shape.width)}" cy="{int(shape.height)}"/></a:xfrm>'
    )


def _line_xml(shape: _Shape) -> str:
    if shape.line.color.rgb is None and shape.line.width is None:
        return ""
    width_attr = f' w="{int(shape.line.width)}"' if shape.line.width is not None else ""
    return f"<a:ln{width_attr}>{_solid_fill_xml(shape.line.color.rgb)}</a:ln>"


def _shape_xml(shape: _Shape, shape_id: int, rel_by_image: dict[str, str]) -> str:
    name = f"{shape.kind.title()} {shape_id - 1}"
    if shape.kind == "picture":
        rid = rel_by_image[shape.image_path]
        return (
            f"<p:pic><p:nvPicPr>"
            f'<p:cNvPr id="{shape_id}" name="{escape(name)}"/>'
            f"<p:cNvPicPr/><p:nvPr/></p:nvPicPr>"
            f'<p:blipFill><a:blip r:embed="{rid}"/><a:stretch><a:fillRect/></a:stretch></p:blipFill>'
            f'<p:spPr>{_xfrm_xml(shape)}<a:prstGeom prst="rect"><a:avLst/></a:prstGeom></p:spPr>'
            f"</p:pic>"
        )
    if shape.kind == "connector":
        return (
            f"<p:cxnSp><p:nvCxnSpPr>"
            f'<p:cNvPr id="{shape_id}" name="{escape(name)}"/>'
            f"<p:cNvCxnSpPr/><p:nvPr/></p:nvCxnSpPr>"
            f"<p:spPr>{_xfrm_xml(shape)}"
            f'<a:prstGeom prst="{shape.preset}"><a:avLst/></a:prstGeom>'
            f"{_line_xml(shape)}</p:spPr></p:cxnSp>"
        )
    tx_box_attr = ' txBox="1"' if shape.is_textbox else ""
    fill = ""
    if shape.fill._kind == "solid":
        fill = _solid_fill_xml(shape.fill.fore_color.rgb)
    elif shape.fill._kind == "none" or shape.is_textbox:
        fill = "<a:noFill/>"
    return (
        f"<p:sp><p:nvSpPr>"
        f'<p:cNvPr id="{shape_id}" name="{escape(name)}"/>'
        f"<p:cNvSpPr{tx_box_attr}/><p:nvPr/></p:nvSpPr>"
        f"<p:spPr>{_xfrm_xml(shape)}"
        f'<a:prstGeom prst="{shape.preset}"><a:avLst/></a:prstGeom>'
        f"{fill}{_line_xml(shape)}</p:spPr>"
        f"{_tx_body_xml(shape.text_frame)}"
        f"</p:sp>"
    )


class _PackageWriter:
    def __init__(self, prs: Presentation):
        self.prs = prs

    def write(self, path: Path) -> None:
        slides = list(self.prs.slides)
        media: list[str] = []
        for slide in slides:
            for shape in slide.shapes:
                if shape.kind == "picture" and shape.image_path not in media:
                    media.append(shape.image_path)
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            zf.writestr("[Content_Types].xml", self._content_types(len(slides)))
            zf.writestr("_rels/.rels", self._root_rels())
            zf.writestr("ppt/presentation.xml", self._presentation(len(slides)))
            zf.writestr("ppt/_rels/presentation.xml.rels", self._presentation_rels(len(slides)))
            zf.writestr("ppt/slideMasters/slideMaster1.xml", self._slide_master())
            zf.writestr(
                "ppt/slideMasters/_rels/slideMaster1.xml.rels",
                self._relationships(
                    [("rId1", "slideLayout", "../slideLayouts/slideLayout1.xml")]
                ),
            )
            zf.writestr("ppt/slideLayouts/slideLayout1.xml", self._slide_layout())
            zf.writestr(
                "ppt/slideLayouts/_rels/slideLayout1.xml.rels",
                self._relationships(
                    [("rId1", "slideMaster", "../slideMasters/slideMaster1.xml")]
                ),
            )
            for i, name in enumerate(media, start=1):
                zf.writestr(f"ppt/media/image{i}.png", Path(name).read_bytes())
            for s_idx, slide in enumerate(slides, start=1):
                rel_by_image = {
                    name: f"rId{media.index(name) + 1}"
                    for name in media
                }
                zf.writestr(f"ppt/slides/slide{s_idx}.xml", self._slide(slide, rel_by_image))
                rels = [
                    (f"rId{media.index(name) + 1}", "image", f"../media/image{media.index(name) + 1}.png")
                    for name in media
                ]
                zf.writestr(
                    f"ppt/slides/_rels/slide{s_idx}.xml.rels", self._relationships(rels)
                )

    @staticmethod
    def _content_types(n_slides: int) -> str:
        overrides = "".join(
            f'<Override PartName="/ppt/slides/slide{i}.xml" '
            f'ContentType="application/vnd.openxmlformats-officedocument.presentationml.slide+xml"/>'
            for i in range(1, n_slides + 1)
        )
        return _XML_HEADER + (
            '<Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types">'
            '<Default Extension="rels" ContentType="application/vnd.openxmlformats-package.relationships+xml"/>'
            '<Default Extension="xml" ContentType="application/xml"/>'
            '<Default Extension="png" ContentType="image/png"/>'
            '<Override PartName="/ppt/presentation.xml" '
            'ContentType="application/vnd.openxmlformats-officedocument.presentationml.presentation.main+xml"/>'
            '<Override PartName="/ppt/slideMasters/slideMaster1.xml" '
            'ContentType="application/vnd.openxmlformats-officedocument.presentationml.slideMaster+xml"/>'
            '<Override PartName="/ppt/slideLayouts/slideLayout1.xml" '
            'ContentType="application/vnd.openxmlformats-officedocument.presentationml.slideLayout+xml"/>'
            f"{overrides}</Types>"
        )

    @staticmethod
    def _root_rels() -> str:
        return _XML_HEADER + (
            '<Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships">'
            '<Relationship Id="rId1" '
            'Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument" '
            'Target="ppt/presentation.xml"/></Relationships>'
        )

    @staticmethod
    def _relationships(rels: list[tuple[str, str, str]]) -> str:
        base = "http://schemas.openxmlformats.org/officeDocument/2006/relationships"
        body = "".join(
            f'<Relationship Id="{rid}" Type="{base}/{kind}" Target="{target}"/>'
            for rid, kind, target in rels
        )
        return _XML_HEADER + (
            '<Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships">'
            f"{body}</Relationships>"
        )

    def _presentation(self, n_slides: int) -> str:
        slide_ids = "".join(
            f'<p:sldId id="{255 + i}" r:id="rId{1 + i}"/>' for i in range(1, n_slides + 1)
        )
        return _XML_HEADER + (
            f"<p:presentation {_NS_DECLS}>"
            '<p:sldMasterIdLst><p:sldMasterId id="2147483648" r:id="rId1"/></p:sldMasterIdLst>'
            f"<p:sldIdLst>{slide_ids}</p:sldIdLst>"
            f'<p:sldSz cx="{int(self.prs.slide_width)}" cy="{int(self.prs.slide_height)}"/>'
            '<p:notesSz cx="6858000" cy="9144000"/>'
            "</p:presentation>"
        )

    @staticmethod
    def _presentation_rels(n_slides: int) -> str:
        rels = [("rId1", "slideMaster", "slideMasters/slideMaster1.xml")]
        rels += [
            (f"rId{1 + i}", "slide", f"slides/slide{i}.xml")
            for i in range(1, n_slides + 1)
        ]
        return _PackageWriter._relationships(rels)

    @staticmethod
    def _empty_sp_tree() -> str:
        return (
            "<p:spTree>"
            '<p:nvGrpSpPr><p:cNvPr id="1" name=""/><p:cNvGrpSpPr/><p:nvPr/></p:nvGrpSpPr>'
            '<p:grpSpPr><a:xfrm><a:off x="0" y="0"/><a:ext cx="0" cy="0"/>'
            '<a:chOff x="0" y="0"/><a:chExt cx="0" cy="0"/></a:xfrm></p:grpSpPr>'
        )

    def _slide_master(self) -> str:
        return _XML_HEADER + (
            f"<p:sldMaster {_NS_DECLS}>"
            f"<p:cSld>{self._empty_sp_tree()}</p:spTree></p:cSld>"
            '<p:clrMap bg1="lt1" tx1="dk1" bg2="lt2" tx2="dk2" accent1="accent1" '
            'accent2="accent2" accent3="accent3" accent4="accent4" accent5="accent5" '
            'accent6="accent6" hlink="hlink" folHlink="folHlink"/>'
            '<p:sldLayoutIdLst><p:sldLayoutId id="2147483649" r:id="rId1"/></p:sldLayoutIdLst>'
            "</p:sldMaster>"
        )

    def _slide_layout(self) -> str:
        return _XML_HEADER + (
            f"<p:sldLayout {_NS_DECLS}>"
            f"<p:cSld>{self._empty_sp_tree()}</p:spTree></p:cSld>"
            "</p:sldLayout>"
        )

    def _slide(self, slide: _Slide, rel_by_image: dict[str, str]) -> str:
        shapes_xml = "".join(
            _shape_xml(shape, shape_id, rel_by_image)
            for shape_id, shape in enumerate(slide.shapes, start=2)
        )
        return _XML_HEADER + (
            f"<p:sld {_NS_DECLS}>"
            f"<p:cSld>{self._empty_sp_tree()}{shapes_xml}</p:spTree></p:cSld>"
            "</p:sld>"
        )


def install() -> None:
    """Register this module's API as ``pptx`` in sys.modules (idempotent)."""
    if "pptx" in sys.modules:
        return
    root = types.ModuleType("pptx")
    root.Presentation = Presentation

    util = types.ModuleType("pptx.util")
    util.Inches = Inches
    util.Pt = Pt
    util.Emu = Emu
    util.Length = Length

    dml = types.ModuleType("pptx.dml")
    dml_color = types.ModuleType("pptx.dml.color")
    dml_color.RGBColor = RGBColor
    dml.color = dml_color

    enum = types.ModuleType("pptx.enum")
    enum_shapes = types.ModuleType("pptx.enum.shapes")
    enum_shapes.MSO_SHAPE = MSO_SHAPE
    enum_shapes.MSO_CONNECTOR = MSO_CONNECTOR
    enum_text = types.ModuleType("pptx.enum.text")
    enum_text.PP_ALIGN = PP_ALIGN
    enum.shapes = enum_shapes
    enum.text = enum_text

    root.util = util
    root.dml = dml
    root.enum = enum
    sys.modules["pptx"] = root
    sys.modules["pptx.util"] = util
    sys.modules["pptx.dml"] = dml
    sys.modules["pptx.dml.color"] = dml_color
    sys.modules["pptx.enum"] = enum
    sys.modules["pptx.enum.shapes"] = enum_shapes
    sys.modules["pptx.enum.text"] = enum_text
