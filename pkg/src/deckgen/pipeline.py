"""Three-agent generation: describe blocks, code each one, assemble the slide.

The design image is segmented into blocks, a description agent labels the
whole design and every block against the shape-type vocabulary, a coder
agent turns each block into a snippet under a bounded repair loop, and an
assembly agent merges the surviving snippets using their positions scaled
into slide coordinates. Everything observable lands in a deterministic
trace so a run can be replayed bit-for-bit.
"""
from __future__ import annotations

import json
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from time import perf_counter
from typing import Callable

from .cgseg import Region, cgseg
from .config import RunConfig, SlideGeometry
from .kb import KbEntry, VectorIndex, all_entries, build_index, load_kb, retrieve_top_k
from .llm import BackendError, ChatRequest, ImagePart, TextPart
from .prompts import (
    ASSEMBLER_SYSTEM,
    BLOCK_DESCRIPTION_TEMPLATE,
    CODER_SYSTEM,
    DESCRIBER_SYSTEM,
    LAYOUT_TEMPLATE,
    OVERALL_DESCRIPTION_TEMPLATE,
    REFINEMENT_TEMPLATE,
    SNIPPET_SECTION_TEMPLATE,
    SNIPPET_TEMPLATE,
    format_grammar,
    format_vocabulary,
)
from .raster import RasterImage, load_image, to_png_bytes

# A checker probes one code text: None means pass, a string is the error fed
# back into the next attempt.
Checker = Callable[[str], "str | None"]


class PipelineInputError(Exception):
    pass


@dataclass(frozen=True)
class Descriptions:
    overall: str
    per_block: list[tuple[str, str]]


@dataclass(frozen=True)
class Attempt:
    code: str
    error: str | None

    def to_dict(self) -> dict:
        return {"code": self.code, "error": self.error}


@dataclass(frozen=True)
class CodeSnippet:
    region_id: str
    code: str
    attempts: list[Attempt]
    status: str  # "ok" | "dropped"

    def to_dict(self) -> dict:
        return {
            "region_id": self.region_id,
            "code": self.code,
            "status": self.status,
            "attempts": [a.to_dict() for a in self.attempts],
        }


@dataclass(frozen=True)
class AssembledProgram:
    code: str
    attempts: list[Attempt]
    status: str  # "ok" | "execution_failure"

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "status": self.status,
            "attempts": [a.to_dict() for a in self.attempts],
        }


@dataclass
class PipelineResult:
    sample_id: str
    status: str = "ok"
    error: dict | None = None
    regions: list[dict] = field(default_factory=list)
    descriptions: dict = field(default_factory=dict)
    snippets: list[dict] = field(default_factory=list)
    positions: list[dict] = field(default_factory=list)
    layout_prompt: str = ""
    program: dict = field(default_factory=dict)
    backend_calls: list[dict] = field(default_factory=list)
    metrics: dict | None = None
    timing_s: float = 0.0

    def to_trace_dict(self) -> dict:
        # timing is volatile and deliberately left out of the trace bytes
        return {
            "sample_id": self.sample_id,
            "status": self.status,
            "error": self.error,
            "regions": self.regions,
            "descriptions": self.descriptions,
            "snippets": self.snippets,
            "positions": self.positions,
            "layout_prompt": self.layout_prompt,
            "program": self.program,
            "backend_calls": self.backend_calls,
            "metrics": self.metrics,
        }

    def to_trace_json(self) -> str:
        return json.dumps(self.to_trace_dict(), indent=2, sort_keys=True) + "\n"


def region_ids(regions: list[Region]) -> list[str]:
    return [f"block-{i + 1}" for i in range(len(regions))]


def strip_code_fences(text: str) -> str:
    """Return the contents of the first fenced block, or the text unchanged."""
    stripped = text.strip()
    if not stripped.startswith("```"):
        return stripped
    lines = stripped.splitlines()
    body: list[str] = []
    for line in lines[1:]:
        if line.strip().startswith("```"):
            break
        body.append(line)
    return "\n".join(body).strip()


def _design_part(design: RasterImage, label: str) -> ImagePart:
    return ImagePart(path=label, data=to_png_bytes(design))


def describe(
    design: RasterImage,
    regions: list[Region],
    kb_entries: list[KbEntry],
    backend,
    call_log: list[dict] | None = None,
) -> Descriptions:
    """One overall-description call, then one call per block, in block order.

    Every call carries the complete shape-type vocabulary so the agent never
    invents element names. Backend failures abort the sample.
    """
    vocabulary = format_vocabulary(all_entries(kb_entries, "shape_type"))
    overall_prompt = OVERALL_DESCRIPTION_TEMPLATE.format(vocabulary=vocabulary)
    overall = _call(
        backend,
        ChatRequest(
            system=DESCRIBER_SYSTEM,
            parts=(_design_part(design, "design.png"), TextPart(overall_prompt)),
        ),
        call_log,
        stage="describe",
        block=None,
    )
    per_block: list[tuple[str, str]] = []
    for rid, region in zip(region_ids(regions), regions):
        prompt = BLOCK_DESCRIPTION_TEMPLATE.format(block_id=rid, vocabulary=vocabulary)
        text = _call(
            backend,
            ChatRequest(
                system=DESCRIBER_SYSTEM,
                parts=(_design_part(region.image, f"{rid}.png"), TextPart(prompt)),
            ),
            call_log,
            stage="describe",
            block=rid,
        )
        per_block.append((rid, text))
    return Descriptions(overall=overall, per_block=per_block)


def _call(backend, req: ChatRequest, call_log, stage: str, block: str | None) -> str:
    text = req.text_content()
    try:
        reply = backend.complete(req).text
    except BackendError as exc:
        if call_log is not None:
            call_log.append(
                {
                    "stage": stage,
                    "block": block,
                    "system": req.system,
                    "request_text": text,
                    "reply": None,
                    "error": f"{exc.kind}: {exc}",
                }
            )
        raise
    if call_log is not None:
        call_log.append(
            {
                "stage": stage,
                "block": block,
                "system": req.system,
                "request_text": text,
                "reply": reply,
                "error": None,
            }
        )
    return reply


def _refine_loop(
    base_prompt: str,
    make_request: Callable[[str], ChatRequest],
    backend,
    checker: Checker,
    max_refine: int,
    call_log,
    stage: str,
    block: str | None,
) -> tuple[str, list[Attempt], bool]:
    """Shared bounded repair loop; returns (final code, attempts, succeeded)."""
    attempts: list[Attempt] = []
    prompt = base_prompt
    code = ""
    error: str | None = "not attempted"
    for _ in range(max_refine):
        try:
            reply = _call(backend, make_request(prompt), call_log, stage, block)
        except BackendError as exc:
            code, error = "", f"{exc.kind}: {exc}"
        else:
            code = strip_code_fences(reply)
            error = checker(code)
        attempts.append(Attempt(code=code, error=error))
        if error is None:
            return code, attempts, True
        prompt = base_prompt + "\n\n" + REFINEMENT_TEMPLATE.format(
            previous_code=code if code else "(no code produced)", error=error
        )
    return code, attempts, False


def gen_snippet(
    region_id: str,
    region_image: RasterImage,
    description: str,
    of_index: VectorIndex,
    backend,
    checker: Checker,
    provider,
    top_k: int = 5,
    max_refine: int = 3,
    call_log: list[dict] | None = None,
) -> CodeSnippet:
    """Generate one block's snippet with retrieval-augmented grammar context.

    The block description is the retrieval query. Each failed probe feeds its
    error text into the next attempt; after ``max_refine`` failures the block
    is dropped.
    """
    grammar = retrieve_top_k(of_index, description, top_k, provider)
    base_prompt = SNIPPET_TEMPLATE.format(
        block_id=region_id, description=description, grammar=format_grammar(grammar)
    )
    image_part = _design_part(region_image, f"{region_id}.png")

    def make_request(prompt: str) -> ChatRequest:
        return ChatRequest(system=CODER_SYSTEM, parts=(image_part, TextPart(prompt)))

    code, attempts, ok = _refine_loop(
        base_prompt, make_request, backend, checker, max_refine, call_log,
        stage="coder", block=region_id,
    )
    return CodeSnippet(
        region_id=region_id,
        code=code if ok else "",
        attempts=attempts,
        status="ok" if ok else "dropped",
    )


def scale_position(
    bbox: tuple[int, int, int, int], geom: SlideGeometry
) -> tuple[float, float, float, float]:
    """Map a pixel box into slide inches by proportional scaling."""
    if geom.image_width < 1 or geom.image_height < 1:
        raise ValueError("geometry lacks image dimensions")
    sx = geom.slide_width / geom.image_width
    sy = geom.slide_height / geom.image_height
    x, y, w, h = bbox
    return (x * sx, y * sy, w * sx, h * sy)


def build_layout_prompt(
    design_ref: str,
    overall_description: str,
    snippets: list[CodeSnippet],
    positions: dict[str, tuple[float, float, float, float]],
    grammar_entries,
    geom: SlideGeometry,
    pictures: list[str] | None = None,
) -> str:
    """Instantiate the assembly template; only surviving snippets appear.

    Raises if any template placeholder survives substitution, so a partial
    prompt can never be sent.
    """
    ok_snippets = [s for s in snippets if s.status == "ok"]
    sections = []
    for s in ok_snippets:
        x, y, w, h = positions[s.region_id]
        sections.append(
            SNIPPET_SECTION_TEMPLATE.format(
                block_id=s.region_id, x=x, y=y, w=w, h=h, code=s.code
            )
        )
    text = LAYOUT_TEMPLATE.format(
        design=design_ref,
        overall_description=overall_description,
        snippets="\n\n".join(sections) if sections else "(no block snippets)",
        grammar=format_grammar(grammar_entries),
        slide_width=geom.slide_width,
        slide_height=geom.slide_height,
        pictures=", ".join(pictures) if pictures else "(none)",
    )
    for marker in ("{design}", "{overall_description}", "{snippets}", "{grammar}", "{pictures}"):
        if marker in text:
            raise ValueError(f"unfilled template placeholder {marker}")
    return text


def assemble(
    prompt: str,
    pictures: list[str | Path],
    backend,
    checker: Checker,
    max_refine: int = 3,
    workdir: str | Path | None = None,
    design: RasterImage | None = None,
    call_log: list[dict] | None = None,
) -> AssembledProgram:
    """Run the assembly agent under the same bounded repair loop as the coder.

    Picture assets are copied into the program working directory first so the
    checker can execute the candidate program in place.
    """
    if workdir is not None:
        wd = Path(workdir)
        wd.mkdir(parents=True, exist_ok=True)
        for pic in pictures:
            src = Path(pic)
            if not src.is_file():
                raise PipelineInputError(f"picture file not found: {src}")
            shutil.copy(src, wd / src.name)

    parts: tuple = (TextPart(prompt),)
    if design is not None:
        parts = (_design_part(design, "design.png"), TextPart(prompt))

    def make_request(p: str) -> ChatRequest:
        if design is not None:
            return ChatRequest(system=ASSEMBLER_SYSTEM, parts=(parts[0], TextPart(p)))
        return ChatRequest(system=ASSEMBLER_SYSTEM, parts=(TextPart(p),))

    code, attempts, ok = _refine_loop(
        prompt, make_request, backend, checker, max_refine, call_log,
        stage="assembler", block=None,
    )
    return AssembledProgram(
        code=code if ok else "",
        attempts=attempts,
        status="ok" if ok else "execution_failure",
    )


def syntax_checker(code: str) -> str | None:
    """Local syntax probe: compile only, no execution."""
    try:
        compile(code, "<candidate>", "exec")
        return None
    except SyntaxError as exc:
        return f"syntax error at line {exc.lineno}: {exc.msg}"


def run_pipeline(
    design_path: str | Path,
    picture_paths: list[str | Path],
    cfg: RunConfig,
    out_dir: str | Path,
    backend=None,
    snippet_checker: Checker | None = None,
    assembly_checker: Checker | None = None,
) -> PipelineResult:
    """End-to-end generation for one design image.

    Stage failures are captured in the returned trace instead of raising, so
    a batch caller survives bad samples. The persisted trace is canonical
    JSON: identical inputs and a deterministic backend give identical bytes.
    """
    started = perf_counter()
    design_path = Path(design_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = PipelineResult(sample_id=design_path.stem)

    def fail(stage: str, exc: Exception) -> PipelineResult:
        result.status = "failed"
        result.error = {"stage": stage, "message": str(exc)}
        result.timing_s = perf_counter() - started
        _persist(result, out)
        return result

    try:
        if not design_path.is_file():
            raise PipelineInputError(f"design image not found: {design_path}")
        for pic in picture_paths:
            if not Path(pic).is_file():
                raise PipelineInputError(f"picture file not found: {pic}")
        design = load_image(design_path)
    except (PipelineInputError, ValueError, FileNotFoundError) as exc:
        return fail("input", exc)

    geom = cfg.geometry.with_image(design.width, design.height)
    if backend is None:
        from .llm import make_backend

        try:
            backend = make_backend(cfg.backend)
        except (ValueError, OSError) as exc:
            return fail("config", exc)
    if snippet_checker is None:
        snippet_checker = syntax_checker
    if assembly_checker is None:
        assembly_checker = syntax_checker

    try:
        st_entries = load_kb(cfg.shape_type_kb)
        of_entries = load_kb(cfg.operation_function_kb)
        provider = cfg.embedding.build()
        of_index = build_index(of_entries, provider, "operation_function")
    except Exception as exc:
        return fail("knowledge_base", exc)

    regions = cgseg(design, cfg.cgseg)
    ids = region_ids(regions)
    result.regions = [dict(r.to_dict(), id=rid) for rid, r in zip(ids, regions)]

    describe_log: list[dict] = []
    try:
        descriptions = describe(design, regions, st_entries, backend, describe_log)
    except BackendError as exc:
        result.backend_calls = describe_log
        return fail("describe", exc)
    result.descriptions = {
        "overall": descriptions.overall,
        "per_block": [[rid, text] for rid, text in descriptions.per_block],
    }

    desc_by_id = dict(descriptions.per_block)
    snippet_logs: dict[str, list[dict]] = {rid: [] for rid in ids}

    def _one(rid: str, region: Region) -> CodeSnippet:
        return gen_snippet(
            rid,
            region.image,
            desc_by_id[rid],
            of_index,
            backend,
            snippet_checker,
            provider,
            top_k=cfg.top_k,
            max_refine=cfg.max_refine,
            call_log=snippet_logs[rid],
        )

    if cfg.parallelism > 1 and len(regions) > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            snippets = list(pool.map(_one, ids, regions))
    else:
        snippets = [_one(rid, region) for rid, region in zip(ids, regions)]
    result.snippets = [s.to_dict() for s in snippets]

    positions = {
        rid: scale_position(region.bbox, geom) for rid, region in zip(ids, regions)
    }
    result.positions = [
        {"region_id": rid, "inches": list(positions[rid])} for rid in ids
    ]

    ok_snippets = [s for s in snippets if s.status == "ok"]
    assembly_log: list[dict] = []
    try:
        grammar_query = "\n".join(s.code for s in ok_snippets)
        grammar = (
            retrieve_top_k(of_index, grammar_query, cfg.top_k, provider)
            if grammar_query.strip()
            else []
        )
        picture_names = sorted(Path(p).name for p in picture_paths)
        layout_prompt = build_layout_prompt(
            design_ref=design_path.name,
            overall_description=descriptions.overall,
            snippets=snippets,
            positions=positions,
            grammar_entries=grammar,
            geom=geom,
            pictures=picture_names,
        )
        result.layout_prompt = layout_prompt
        program_dir = out / "program"
        program = assemble(
            layout_prompt,
            picture_paths,
            backend,
            assembly_checker,
            max_refine=cfg.max_refine,
            workdir=program_dir,
            design=design,
            call_log=assembly_log,
        )
    except (BackendError, PipelineInputError, ValueError) as exc:
        result.backend_calls = _merge_logs(describe_log, snippet_logs, ids, assembly_log)
        return fail("assemble", exc)

    result.program = program.to_dict()
    if program.status == "ok":
        (out / "program" / "program.py").write_text(program.code, encoding="utf-8")
    result.backend_calls = _merge_logs(describe_log, snippet_logs, ids, assembly_log)
    result.timing_s = perf_counter() - started
    _persist(result, out)
    return result


def _merge_logs(
    describe_log: list[dict],
    snippet_logs: dict[str, list[dict]],
    ids: list[str],
    assembly_log: list[dict],
) -> list[dict]:
    # Canonical order: describe calls, per-block coder attempts, assembly
    # attempts. Stable regardless of snippet parallelism.
    merged = list(describe_log)
    for rid in ids:
        merged.extend(snippet_logs[rid])
    merged.extend(assembly_log)
    return merged


def _persist(result: PipelineResult, out: Path) -> None:
    (out / "trace.json").write_text(result.to_trace_json(), encoding="utf-8")
    meta = {"sample_id": result.sample_id, "timing_s": result.timing_s}
    (out / "run_meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
