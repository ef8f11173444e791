from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deckgen.cgseg import CgsegConfig, Region, cgseg
from deckgen.config import EmbeddingConfig, RunConfig, SlideGeometry
from deckgen.kb import MockEmbeddingProvider, all_entries, build_index, load_kb
from deckgen.llm import BackendConfig, ScriptEntry, script_mock
from deckgen.pipeline import (
    Attempt,
    CodeSnippet,
    PipelineInputError,
    assemble,
    build_layout_prompt,
    describe,
    gen_snippet,
    run_pipeline,
    scale_position,
    strip_code_fences,
    syntax_checker,
)
from deckgen.prompts import OVERALL_DESCRIPTION_TEMPLATE, format_vocabulary
from deckgen.raster import RasterImage

from .conftest import DATA_DIR, solid_image

STARTER_DIR = Path(__file__).parent.parent / "src" / "deckgen" / "data"


def two_block_design() -> RasterImage:
    px = np.full((300, 400, 3), 255, dtype=np.uint8)
    px[40:100, 40:120] = (0, 0, 255)
    px[160:240, 240:340] = (0, 160, 0)
    return RasterImage(px)


def make_regions(img: RasterImage, max_depth: int = 1) -> list[Region]:
    return cgseg(img, CgsegConfig(grid=20, threshold=1.5, max_depth=max_depth))


def pipeline_script() -> list[ScriptEntry]:
    return [
        ScriptEntry("cropped from a slide design (block-1)", "A blue rectangle block."),
        ScriptEntry("cropped from a slide design (block-2)", "A green rectangle block."),
        ScriptEntry("one block of a slide (block-1)", "slide.shapes.add_shape(1, 0, 0, 10, 10)"),
        ScriptEntry("one block of a slide (block-2)", "slide.shapes.add_textbox(0, 0, 5, 5)"),
        ScriptEntry("full design of one slide", "A slide with two colored blocks."),
        ScriptEntry(
            "Assemble the complete slide program",
            "from pptx import Presentation\nprs = Presentation()\nprs.save('output.pptx')",
        ),
    ]


def fixture_config(tmp_path: Path, max_depth: int = 1) -> RunConfig:
    return RunConfig(
        backend=BackendConfig(kind="mock"),
        embedding=EmbeddingConfig(provider="mock", dimension=64, seed=0),
        cgseg=CgsegConfig(grid=20, threshold=1.5, max_depth=max_depth),
        geometry=SlideGeometry(13.333, 7.5),
    )


def kb_entries():
    return load_kb(STARTER_DIR / "shape_type_kb.jsonl")


def of_index(provider):
    entries = load_kb(STARTER_DIR / "operation_function_kb.jsonl")
    return build_index(entries, provider, "operation_function")


class TestDescribe:
    def test_zero_regions_overall_only(self):
        backend = script_mock([("full design of one slide", "Plain white slide.")])
        result = describe(solid_image(60, 60), [], kb_entries(), backend)
        assert result.overall == "Plain white slide."
        assert result.per_block == []
        assert backend.call_count() == 1

    def test_two_regions_three_calls_in_order(self):
        backend = script_mock(pipeline_script())
        img = two_block_design()
        regions = make_regions(img)
        assert len(regions) == 2
        log: list[dict] = []
        result = describe(img, regions, kb_entries(), backend, log)
        assert backend.call_count() == 3
        assert [c["block"] for c in log] == [None, "block-1", "block-2"]
        assert result.per_block[0] == ("block-1", "A blue rectangle block.")
        assert result.per_block[1] == ("block-2", "A green rectangle block.")

    def test_prompt_contains_each_vocabulary_entry_exactly_once(self):
        entries = all_entries(kb_entries(), "shape_type")
        prompt = OVERALL_DESCRIPTION_TEMPLATE.format(
            vocabulary=format_vocabulary(entries)
        )
        assert len(entries) == 44
        for entry in entries:
            assert prompt.count(f"- {entry.name}: ") == 1

    def test_backend_error_propagates(self):
        backend = script_mock([])  # unscripted
        from deckgen.llm import UnscriptedPromptError

        with pytest.raises(UnscriptedPromptError):
            describe(solid_image(60, 60), [], kb_entries(), backend)


class TestGenSnippet:
    def _run(self, checker, replies=None, max_refine=3):
        provider = MockEmbeddingProvider()
        entries = replies or ["code-v1", "code-v2", "code-v3"]
        script = [
            ScriptEntry("corrected code only", entries[1]),
            ScriptEntry("one block of a slide", entries[0]),
        ]
        # Third and later attempts also hit the refinement matcher; reuse v2.
        backend = script_mock(script)
        return gen_snippet(
            "block-1",
            solid_image(30, 30),
            "a text block",
            of_index(provider),
            backend,
            checker,
            provider,
            max_refine=max_refine,
        ), backend

    def test_single_attempt_on_success(self):
        snippet, backend = self._run(lambda code: None)
        assert snippet.status == "ok"
        assert snippet.code == "code-v1"
        assert len(snippet.attempts) == 1
        assert backend.call_count() == 1

    def test_always_fail_exhausts_three_attempts(self):
        snippet, backend = self._run(lambda code: "synthetic failure")
        assert snippet.status == "dropped"
        assert snippet.code == ""
        assert len(snippet.attempts) == 3
        assert backend.call_count() == 3
        assert all(a.error == "synthetic failure" for a in snippet.attempts)

    def test_fail_once_then_pass(self):
        seen = []

        def checker(code):
            seen.append(code)
            return "first try rejected" if len(seen) == 1 else None

        snippet, backend = self._run(checker)
        assert snippet.status == "ok"
        assert snippet.code == "code-v2"
        assert len(snippet.attempts) == 2
        assert backend.call_count() == 2

    def test_error_text_feeds_next_prompt(self):
        captured = []

        class Spy:
            def complete(self, req):
                captured.append(req.text_content())
                return type("R", (), {"text": "code"})()

        provider = MockEmbeddingProvider()
        gen_snippet(
            "block-1", solid_image(30, 30), "desc", of_index(provider), Spy(),
            lambda code: "checker says no", provider, max_refine=2,
        )
        assert "checker says no" in captured[1]
        assert "code" in captured[1]

    def test_backend_error_counts_as_attempt(self):
        provider = MockEmbeddingProvider()
        backend = script_mock([])  # every call raises unscripted
        snippet = gen_snippet(
            "block-1", solid_image(30, 30), "desc", of_index(provider), backend,
            lambda code: None, provider, max_refine=3,
        )
        assert snippet.status == "dropped"
        assert len(snippet.attempts) == 3
        assert all(a.error and "unscripted" in a.error for a in snippet.attempts)


class TestScalePosition:
    GEOM = SlideGeometry(13.333, 7.5).with_image(1280, 720)

    def test_origin_maps_to_origin(self):
        assert scale_position((0, 0, 128, 72), self.GEOM)[:2] == (0.0, 0.0)

    def test_worked_example(self):
        x, y, w, h = scale_position((640, 360, 320, 180), self.GEOM)
        # x sits exactly at the tolerance boundary (|6.6665 - 6.667| = 5e-4);
        # the 1e-12 covers binary representation of the decimal literals.
        tol = 5e-4 + 1e-12
        assert x == pytest.approx(6.667, abs=tol)
        assert y == pytest.approx(3.750, abs=tol)
        assert w == pytest.approx(3.333, abs=tol)
        assert h == pytest.approx(1.875, abs=tol)

    def test_full_image_maps_to_slide_extent(self):
        x, y, w, h = scale_position((0, 0, 1280, 720), self.GEOM)
        assert (x, y) == (0.0, 0.0)
        assert w == pytest.approx(13.333, abs=1e-12)
        assert h == pytest.approx(7.5, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 1280), st.integers(0, 720), st.integers(0, 1280), st.integers(0, 720))
    def test_round_trip_within_tolerance(self, x, y, w, h):
        inches = scale_position((x, y, w, h), self.GEOM)
        back = (
            inches[0] * 1280 / 13.333,
            inches[1] * 720 / 7.5,
            inches[2] * 1280 / 13.333,
            inches[3] * 720 / 7.5,
        )
        for orig, rt in zip((x, y, w, h), back):
            assert rt == pytest.approx(orig, abs=1e-9)

    def test_linear_in_the_box(self):
        a = scale_position((100, 50, 40, 20), self.GEOM)
        b = scale_position((200, 100, 80, 40), self.GEOM)
        for va, vb in zip(a, b):
            assert vb == pytest.approx(2 * va, abs=1e-12)

    def test_requires_image_dimensions(self):
        with pytest.raises(ValueError):
            scale_position((0, 0, 1, 1), SlideGeometry(13.333, 7.5))


def sample_snippets():
    ok1 = CodeSnippet("block-1", "slide.shapes.add_shape(1, 0, 0, 10, 10)",
                      [Attempt("slide.shapes.add_shape(1, 0, 0, 10, 10)", None)], "ok")
    ok2 = CodeSnippet("block-2", "slide.shapes.add_textbox(0, 0, 5, 5)",
                      [Attempt("slide.shapes.add_textbox(0, 0, 5, 5)", None)], "ok")
    dropped = CodeSnippet("block-3", "", [Attempt("bad", "err")] * 3, "dropped")
    return ok1, ok2, dropped


class TestLayoutPrompt:
    GEOM = SlideGeometry(13.333, 7.5).with_image(400, 300)
    POSITIONS = {
        "block-1": (1.0, 1.0, 2.0, 1.5),
        "block-2": (8.0, 4.0, 3.0, 2.0),
        "block-3": (0.0, 0.0, 1.0, 1.0),
    }

    def test_zero_snippets_is_valid(self):
        prompt = build_layout_prompt(
            "design.png", "overall text", [], {}, [], self.GEOM
        )
        assert "(no block snippets)" in prompt
        assert "design.png" in prompt

    def test_placeholder_audit_finds_all_five_sections(self):
        ok1, ok2, _ = sample_snippets()
        prompt = build_layout_prompt(
            "design.png", "overall", [ok1, ok2], self.POSITIONS, [], self.GEOM
        )
        for marker in ("<Design>", "<OverallDescription>", "<CodeSnippets>", "<Position*>", "<Grammar>"):
            assert marker in prompt

    def test_dropped_blocks_never_appear(self):
        ok1, ok2, dropped = sample_snippets()
        prompt = build_layout_prompt(
            "design.png", "overall", [ok1, ok2, dropped], self.POSITIONS, [], self.GEOM
        )
        assert "block-3" not in prompt

    def test_positions_are_three_decimal_inches(self):
        ok1, _, _ = sample_snippets()
        prompt = build_layout_prompt(
            "design.png", "overall", [ok1], self.POSITIONS, [], self.GEOM
        )
        assert "x=1.000 in, y=1.000 in, width=2.000 in, height=1.500 in" in prompt

    def test_matches_committed_golden(self):
        ok1, ok2, _ = sample_snippets()
        provider = MockEmbeddingProvider()
        index = of_index(provider)
        from deckgen.kb import retrieve_top_k

        grammar = retrieve_top_k(index, ok1.code + "\n" + ok2.code, 3, provider)
        prompt = build_layout_prompt(
            "design.png", "A slide with two colored blocks.",
            [ok1, ok2], self.POSITIONS, grammar, self.GEOM, ["logo.png"],
        )
        golden = (DATA_DIR / "golden_layout_prompt.txt").read_text(encoding="utf-8")
        assert prompt == golden


class TestAssemble:
    PROMPT = "Assemble the complete slide program (test stub prompt)"

    def test_single_attempt_on_success(self, tmp_path):
        backend = script_mock([("Assemble", "final code")])
        program = assemble(self.PROMPT, [], backend, lambda c: None, workdir=tmp_path / "w")
        assert program.status == "ok"
        assert program.code == "final code"
        assert len(program.attempts) == 1

    def test_always_fail_is_execution_failure(self, tmp_path):
        backend = script_mock([("Assemble", "bad code"), ("corrected code only", "bad code")])
        program = assemble(
            self.PROMPT, [], backend, lambda c: "runtime explosion", workdir=tmp_path / "w"
        )
        assert program.status == "execution_failure"
        assert program.code == ""
        assert len(program.attempts) == 3

    def test_fail_once_then_pass(self, tmp_path):
        calls = []

        def checker(code):
            calls.append(code)
            return "first failed" if len(calls) == 1 else None

        backend = script_mock([("corrected code only", "v2"), ("Assemble", "v1")])
        program = assemble(self.PROMPT, [], backend, checker, workdir=tmp_path / "w")
        assert program.status == "ok"
        assert program.code == "v2"
        assert len(program.attempts) == 2

    def test_pictures_copied_into_workdir(self, tmp_path):
        pic = tmp_path / "photo.png"
        pic.write_bytes(b"\x89PNG-ish")
        backend = script_mock([("Assemble", "code")])
        workdir = tmp_path / "program"
        assemble(self.PROMPT, [pic], backend, lambda c: None, workdir=workdir)
        assert (workdir / "photo.png").read_bytes() == b"\x89PNG-ish"

    def test_missing_picture_rejected(self, tmp_path):
        backend = script_mock([("Assemble", "code")])
        with pytest.raises(PipelineInputError):
            assemble(self.PROMPT, [tmp_path / "ghost.png"], backend, lambda c: None,
                     workdir=tmp_path / "w")


class TestStripFences:
    def test_plain_text_unchanged(self):
        assert strip_code_fences("x = 1") == "x = 1"

    def test_fenced_block_extracted(self):
        assert strip_code_fences("```python\nx = 1\ny = 2\n```") == "x = 1\ny = 2"

    def test_fence_without_language(self):
        assert strip_code_fences("```\nabc\n```") == "abc"


class TestSyntaxChecker:
    def test_valid_code_passes(self):
        assert syntax_checker("x = 1") is None

    def test_syntax_error_carries_line(self):
        err = syntax_checker("def f(:\n  pass")
        assert err is not None and "line 1" in err


class TestRunPipeline:
    def _write_design(self, tmp_path) -> Path:
        from PIL import Image

        path = tmp_path / "design.png"
        Image.fromarray(two_block_design().pixels).save(path)
        return path

    def test_uniform_design_zero_regions_still_assembles(self, tmp_path):
        from PIL import Image

        design = tmp_path / "plain.png"
        Image.fromarray(solid_image(400, 300).pixels).save(design)
        backend = script_mock(
            [
                ScriptEntry("full design of one slide", "An empty slide."),
                ScriptEntry("Assemble the complete slide program", "prs = 1"),
            ]
        )
        result = run_pipeline(design, [], fixture_config(tmp_path), tmp_path / "out",
                              backend=backend)
        assert result.status == "ok"
        assert result.regions == []
        assert result.program["status"] == "ok"
        assert backend.call_count() == 2  # overall + assembly only

    def test_end_to_end_trace_and_call_count(self, tmp_path):
        design = self._write_design(tmp_path)
        backend = script_mock(pipeline_script())
        cfg = fixture_config(tmp_path)
        result = run_pipeline(design, [], cfg, tmp_path / "out", backend=backend)
        assert result.status == "ok"
        assert [r["id"] for r in result.regions] == ["block-1", "block-2"]
        assert result.program["status"] == "ok"
        # 1 overall + 2 blocks + 2 snippet attempts + 1 assembly attempt
        assert backend.call_count() == 6
        assert len(result.backend_calls) == 6
        trace_path = tmp_path / "out" / "trace.json"
        assert trace_path.is_file()
        assert json.loads(trace_path.read_text())["sample_id"] == "design"
        program_file = tmp_path / "out" / "program" / "program.py"
        assert program_file.is_file()

    def test_trace_bytes_reproducible(self, tmp_path):
        design = self._write_design(tmp_path)
        cfg = fixture_config(tmp_path)
        traces = []
        for run in range(2):
            out = tmp_path / f"out{run}"
            run_pipeline(design, [], cfg, out, backend=script_mock(pipeline_script()))
            traces.append((out / "trace.json").read_bytes())
        assert traces[0] == traces[1]

    def test_missing_picture_is_declared_input_error(self, tmp_path):
        design = self._write_design(tmp_path)
        result = run_pipeline(
            design, [tmp_path / "ghost.png"], fixture_config(tmp_path),
            tmp_path / "out", backend=script_mock(pipeline_script()),
        )
        assert result.status == "failed"
        assert result.error["stage"] == "input"
        assert "ghost.png" in result.error["message"]

    def test_describe_failure_aborts_sample(self, tmp_path):
        design = self._write_design(tmp_path)
        result = run_pipeline(
            design, [], fixture_config(tmp_path), tmp_path / "out",
            backend=script_mock([]),
        )
        assert result.status == "failed"
        assert result.error["stage"] == "describe"

    def test_dropped_block_excluded_but_logged(self, tmp_path):
        design = self._write_design(tmp_path)
        backend = script_mock(pipeline_script())

        def snippet_checker(code):
            return "rejected" if "add_shape" in code else None

        result = run_pipeline(
            design, [], fixture_config(tmp_path), tmp_path / "out",
            backend=backend, snippet_checker=snippet_checker,
        )
        assert result.status == "ok"
        statuses = {s["region_id"]: s["status"] for s in result.snippets}
        assert statuses == {"block-1": "dropped", "block-2": "ok"}
        assert "block-1" not in result.layout_prompt
        # 1 overall + 2 blocks + (3 failed + 1 ok) snippet attempts + 1 assembly
        assert backend.call_count() == 8

    def test_parallel_trace_equals_sequential(self, tmp_path):
        design = self._write_design(tmp_path)
        cfg_seq = fixture_config(tmp_path)
        out_seq = tmp_path / "seq"
        run_pipeline(design, [], cfg_seq, out_seq, backend=script_mock(pipeline_script()))
        import dataclasses

        cfg_par = dataclasses.replace(cfg_seq, parallelism=4)
        out_par = tmp_path / "par"
        run_pipeline(design, [], cfg_par, out_par, backend=script_mock(pipeline_script()))
        assert (out_seq / "trace.json").read_bytes() == (out_par / "trace.json").read_bytes()
