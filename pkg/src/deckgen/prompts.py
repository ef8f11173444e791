"""Prompt templates for the three generation agents.

The templates are plain format strings; every placeholder must be filled at
render time, and the layout template audits itself for leftover markers so a
half-built prompt can never reach the backend.
"""
from __future__ import annotations

DESCRIBER_SYSTEM = (
    "You are a slide design analyst. You identify the visual elements of a "
    "slide and describe them using only the standardized object vocabulary "
    "you are given."
)

CODER_SYSTEM = (
    "You are a python-pptx programmer. You turn one described slide block "
    "into a short code snippet that adds the block's elements to an existing "
    "slide object named `slide`. Return only code."
)

ASSEMBLER_SYSTEM = (
    "You are a python-pptx programmer. You merge block code snippets into "
    "one complete, runnable program that builds the slide and saves it as a "
    ".pptx file. Return only code."
)

OVERALL_DESCRIPTION_TEMPLATE = """The attached image is the full design of one slide.

Identify every visual element and write an overall description of the
slide: background, layout structure, and the role of each element. Name
element types using only this vocabulary:

{vocabulary}

Overall description:"""

BLOCK_DESCRIPTION_TEMPLATE = """The attached image is one block cropped from a slide design ({block_id}).

Describe every element inside this block. Name element types using only
this vocabulary:

{vocabulary}

Block description:"""

SNIPPET_TEMPLATE = """The attached image shows one block of a slide ({block_id}).

Block description:
{description}

Relevant API reference:
{grammar}

Write a python-pptx snippet that recreates this block on an existing slide
object named `slide`. Return only code."""

REFINEMENT_TEMPLATE = """The previous attempt failed. Fix the following error and return the
corrected code only.

Previous code:
{previous_code}

Error:
{error}"""

LAYOUT_TEMPLATE = """Assemble the complete slide program from the pieces below.

Requirements:
1. Each block must appear at exactly its stated position on the slide.
2. The merged program must be free of syntax errors and internal context
   conflicts (one import block, one presentation, one slide, one save).

<Design>
{design}
</Design>

<OverallDescription>
{overall_description}
</OverallDescription>

<CodeSnippets>
{snippets}
</CodeSnippets>

<Grammar>
{grammar}
</Grammar>

The slide is {slide_width:.3f} x {slide_height:.3f} inches. Picture files
available in the working directory: {pictures}.

Write one complete python-pptx program that creates the presentation,
builds this slide, and saves it as output.pptx. Return only code."""

SNIPPET_SECTION_TEMPLATE = """[{block_id}]
<Position*> x={x:.3f} in, y={y:.3f} in, width={w:.3f} in, height={h:.3f} in
{code}"""


def format_vocabulary(entries) -> str:
    return "\n".join(f"- {e.name}: {e.body}" for e in entries)


def format_grammar(scored_entries) -> str:
    if not scored_entries:
        return "(none)"
    return "\n\n".join(e.body for e, _score in scored_entries)
