"""@package context_gathering
@brief Extraction and reorganization prompts, reply parsing and the belief update step
"""

#==========================================================================
# Copyright (c) 2026 Randal Eike
#
# Permission is hereby granted, free of charge, to any person obtaining a
# copy of self software and associated documentation files (the "Software"),
# to deal in the Software without restriction, including without limitation
# the rights to use, copy, modify, merge, publish, distribute, sublicense,
# and/or sell copies of the Software, and to permit persons to whom the
# Software is furnished to do so, subject to the following conditions:
#
# The above copyright notice and self permission notice shall be included
# in all copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND,
# EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF
# MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT.
# IN NO EVENT SHALL THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY
# CLAIM, DAMAGES OR OTHER LIABILITY, WHETHER IN AN ACTION OF CONTRACT,
# TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH THE
# SOFTWARE OR THE USE OR OTHER DEALINGS IN THE SOFTWARE.
#==========================================================================

import logging
import re
from typing import NamedTuple

from context_gathering_grocsoftware.belief_state import BeliefMode, BeliefState
from context_gathering_grocsoftware.belief_state import CapacityConfig, ExtractionResult
from context_gathering_grocsoftware.belief_state import Fact, OpenPredicate
from context_gathering_grocsoftware.belief_state import UNATTRIBUTED_SOURCE
from context_gathering_grocsoftware.belief_state import apply_extraction, enforce_capacity
from context_gathering_grocsoftware.belief_state import needs_reorganization
from context_gathering_grocsoftware.belief_state import render_freeform
from context_gathering_grocsoftware.belief_state import replace_freeform, replace_structured
from context_gathering_grocsoftware.harness_errors import InvalidArgumentError
from context_gathering_grocsoftware.harness_errors import LlmTransportError
from context_gathering_grocsoftware.llm_client import CostBucket, LlmClient
from context_gathering_grocsoftware.llm_client import approx_count_tokens
from context_gathering_grocsoftware import prompt_templates
from context_gathering_grocsoftware.prompt_templates import TemplateLibrary

logger = logging.getLogger(__name__)

## Extraction prompt size the orchestrator aims to stay under
EXTRACTION_TOKEN_TARGET = 500
## Freeform notes longer than this are rewritten
DEFAULT_NOTES_CHAR_CAP = 4000

_SCRATCHPAD_REGX = re.compile(r"<scratchpad>.*?(?:</scratchpad>|\Z)", re.IGNORECASE | re.DOTALL)
_NOTHING_RELEVANT_REGX = re.compile(r"nothing\s+relevant", re.IGNORECASE)
_HEADER_REGX = re.compile(r"^\s*(?:#+\s*)?\**\s*([A-Za-z][A-Za-z ]*?)\s*\**\s*:\s*\**\s*(.*)$")
_BULLET_REGX = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(.*)$")
_SOURCE_REGX = re.compile(r"^(.*?)\s*\(\s*sources?\s*:\s*([^()]*?)\s*\)\s*[.;]?\s*$",
                          re.IGNORECASE)

## Bullet contents that mean "no entry"
_EMPTY_ITEMS = frozenset({"", "none", "none.", "n/a", "nothing", "nothing relevant",
                          "nothing relevant."})

## Section name per recognized header, by parse context
_EXTRACTION_HEADERS = {
    BeliefMode.STRUCTURED: {"new facts": "facts", "resolved questions": "resolved",
                            "new questions": "questions"},
    BeliefMode.FREEFORM: {"notes": "notes", "new notes": "notes", "memories to keep": "memories",
                          "memories": "memories"},
}
_REORGANIZATION_HEADERS = {"facts": "facts", "current facts": "facts", "curated facts": "facts",
                           "established facts": "facts", "new facts": "facts",
                           "open questions": "questions", "questions": "questions",
                           "new questions": "questions", "remaining questions": "questions"}

def strip_scratchpad(reply:str)->str:
    """!
    @brief Remove <scratchpad>...</scratchpad> blocks; an unclosed block runs to the end

    @param reply (string): Raw reply

    @return string
    """
    return _SCRATCHPAD_REGX.sub("", reply)

def split_sections(text:str, headers:dict)->dict:
    """!
    @brief Collect bullet items under known headers

    @param text (string): Reply text with scratchpads removed
    @param headers (dict): lowercase header text to section name

    @return dict section name to list of item strings, in reply order
    """
    sections = {name: [] for name in set(headers.values())}
    current = None
    for line in text.splitlines():
        bullet = _BULLET_REGX.match(line)
        if bullet is None:
            header = _HEADER_REGX.match(line)
            if header is not None:
                name = headers.get(" ".join(header.group(1).lower().split()))
                if name is not None:
                    current = name
                    inline = re.sub(r"^[-*•]\s*", "", header.group(2).strip())
                    if inline.lower() not in _EMPTY_ITEMS:
                        sections[current].append(inline)
                    continue
            if line.strip() and header is not None:
                current = None
            continue
        if current is None:
            continue
        item = bullet.group(1).strip()
        if item.lower() not in _EMPTY_ITEMS:
            sections[current].append(item)
    return sections

def split_source(line:str)->tuple:
    """!
    @brief Split a "(source: X)" suffix off a fact line

    @param line (string): Fact line

    @return (claim, source) tuple, source "" when absent
    """
    match = _SOURCE_REGX.match(line)
    if match is None or not match.group(1).strip():
        return line.strip(), ""
    return match.group(1).strip(), match.group(2).strip()

def _list_facts(b:BeliefState)->str:
    if not b.facts:
        return "(none yet)"
    return "\n".join(f"- {f.claim} (source: {f.source})" for f in b.facts)

def _list_questions(b:BeliefState)->str:
    if not b.open_predicates:
        return "(none)"
    return "\n".join(f"- {p.question}" for p in b.open_predicates)

def _library(library:TemplateLibrary)->TemplateLibrary:
    return library if library is not None else prompt_templates.default_library()

def build_extraction_prompt(mode:BeliefMode, b:BeliefState, observation:str, question:str,
                            library:TemplateLibrary = None)->str:
    """!
    @brief Extraction prompt built from the belief state and one observation only

    @param mode (BeliefMode): Extraction mode, must match b
    @param b (BeliefState): Current state
    @param observation (string): Retrieved passages of this round, non-empty
    @param question (string): Task question
    @param library (TemplateLibrary): Template source, shipped defaults when None

    @return string
    """
    if b.mode != mode:
        raise InvalidArgumentError(f"extraction mode {mode.value} does not match belief mode "
                                   f"{b.mode.value}")
    if not observation or not observation.strip():
        raise InvalidArgumentError("extraction needs a non-empty observation")

    templates = _library(library)
    if mode == BeliefMode.STRUCTURED:
        prompt = templates.render(prompt_templates.EXTRACTION_STRUCTURED, observation=observation,
                                  established_facts=_list_facts(b), question=question,
                                  open_questions=_list_questions(b))
    else:
        prompt = templates.render(prompt_templates.EXTRACTION_FREEFORM, observation=observation,
                                  existing_notes=render_freeform(b), question=question)

    prompt_tokens = approx_count_tokens(prompt)
    if prompt_tokens > EXTRACTION_TOKEN_TARGET:
        logger.warning("extraction prompt is ~%d tokens, above the %d token target",
                       prompt_tokens, EXTRACTION_TOKEN_TARGET)
    return prompt

def parse_extraction_output(mode:BeliefMode, reply:str)->ExtractionResult:
    """!
    @brief Parse an extraction reply; never raises on reply content

    Items under the mode's headers become delta entries.  A reply with no
    items that says "Nothing relevant" outside the scratchpad is a no-op.  A
    reply with neither degrades to a no-op with parse_warning set.

    @param mode (BeliefMode): Expected reply layout
    @param reply (string): Raw LLM reply

    @return ExtractionResult
    """
    text = strip_scratchpad(reply or "")
    sections = split_sections(text, _EXTRACTION_HEADERS[mode])
    has_items = any(sections.values())

    if not has_items:
        if _NOTHING_RELEVANT_REGX.search(text):
            return ExtractionResult(mode=mode, nothing_relevant=True)
        return ExtractionResult(mode=mode, nothing_relevant=True,
                                parse_warning="extraction reply has no recognizable sections")

    if mode == BeliefMode.STRUCTURED:
        return ExtractionResult(mode=mode,
                                new_facts=tuple(split_source(line) for line in sections["facts"]),
                                resolved_questions=tuple(sections["resolved"]),
                                new_questions=tuple(sections["questions"]))
    return ExtractionResult(mode=mode, new_notes=tuple(sections["notes"]),
                            new_memories=tuple(sections["memories"]))

def build_reorganization_prompt(question:str, b:BeliefState, cap:CapacityConfig,
                                library:TemplateLibrary = None)->str:
    """!
    @brief Capacity reorganization prompt

    @param question (string): Task question
    @param b (BeliefState): Structured state to curate
    @param cap (CapacityConfig): Target sizes
    @param library (TemplateLibrary): Template source, shipped defaults when None

    @return string
    """
    if b.mode != BeliefMode.STRUCTURED:
        raise InvalidArgumentError("reorganization requires a structured belief state")
    return _library(library).render(prompt_templates.REORGANIZATION, question=question,
                                    facts="\n" + _list_facts(b),
                                    questions="\n" + _list_questions(b),
                                    k_target=cap.k_target, n_questions=cap.n_questions)

def parse_reorganization_output(reply:str, cap:CapacityConfig)->tuple:
    """!
    @brief Parse curated facts and questions, truncated to the capacity targets

    @param reply (string): Raw LLM reply
    @param cap (CapacityConfig): k_target and n_questions limits

    @return (list of Fact, list of OpenPredicate) - both empty when nothing parsed
    """
    sections = split_sections(strip_scratchpad(reply or ""), _REORGANIZATION_HEADERS)
    facts = []
    seen = set()
    for line in sections["facts"]:
        claim, source = split_source(line)
        if not claim or claim.casefold() in seen:
            continue
        seen.add(claim.casefold())
        facts.append(Fact(claim, source or UNATTRIBUTED_SOURCE))
    questions = [OpenPredicate(q) for q in sections["questions"] if q.strip()]
    if len(facts) > cap.k_target or len(questions) > cap.n_questions:
        logger.debug("reorganization reply overflowed (%d facts, %d questions), truncating",
                     len(facts), len(questions))
    return facts[:cap.k_target], questions[:cap.n_questions]

def build_notes_rewrite_prompt(b:BeliefState, question:str,
                               library:TemplateLibrary = None)->str:
    """!
    @brief Freeform extraction template over the full notes plus the compression instruction

    @param b (BeliefState): Freeform state
    @param question (string): Task question
    @param library (TemplateLibrary): Template source, shipped defaults when None

    @return string
    """
    if b.mode != BeliefMode.FREEFORM:
        raise InvalidArgumentError("notes rewrite requires a freeform belief state")
    templates = _library(library)
    prompt = templates.render(prompt_templates.EXTRACTION_FREEFORM,
                              observation="(no new passages)",
                              existing_notes=render_freeform(b), question=question)
    return prompt + "\n\n" + templates.render(prompt_templates.NOTES_COMPRESSION)

class ExtractionOutcome(NamedTuple):
    """!
    Result of one update-belief step
    """
    ## Updated belief state
    state: BeliefState
    ## Tokens of every orchestrator call made in the step
    token_usage: int
    ## Parser warnings raised during the step
    parse_warnings: tuple = ()
    ## True when a reorganization call ran
    reorganized: bool = False
    ## True when a freeform notes rewrite ran
    notes_rewritten: bool = False

def _reorganize(llm:LlmClient, b:BeliefState, question:str, cap:CapacityConfig,
                library:TemplateLibrary)->tuple:
    response = llm.ask(build_reorganization_prompt(question, b, cap, library),
                       CostBucket.EXTRACTOR)
    facts, questions = parse_reorganization_output(response.content, cap)
    warning = None
    if not facts and not questions:
        warning = "reorganization reply had no parseable items, previous state kept"
        logger.info(warning)
    else:
        b = replace_structured(b, facts, questions)
    return enforce_capacity(b, cap), response.total_tokens(), warning

def _rewrite_notes(llm:LlmClient, b:BeliefState, question:str,
                   library:TemplateLibrary)->tuple:
    response = llm.ask(build_notes_rewrite_prompt(b, question, library), CostBucket.EXTRACTOR)
    sections = split_sections(strip_scratchpad(response.content),
                              _EXTRACTION_HEADERS[BeliefMode.FREEFORM])
    if not sections["notes"]:
        warning = "notes rewrite reply had no notes, previous notes kept"
        logger.info(warning)
        return b, response.total_tokens(), warning
    notes = "\n".join(f"- {n}" for n in sections["notes"])
    memories = tuple(sections["memories"]) if sections["memories"] else b.memories
    return replace_freeform(b, notes, memories), response.total_tokens(), None

def extract_step(llm:LlmClient, b:BeliefState, observation:str, question:str,
                 cap:CapacityConfig, library:TemplateLibrary = None,
                 notes_char_cap:int = DEFAULT_NOTES_CHAR_CAP,
                 round_index:int = None)->ExtractionOutcome:
    """!
    @brief Update-belief step: one extraction call, then at most one capacity call

    Structured states above k_trigger get one reorganization call; freeform
    notes above notes_char_cap get one rewrite call.  All calls are charged
    to the extractor bucket.

    @param llm (LlmClient): Client for the orchestrator calls
    @param b (BeliefState): Current state
    @param observation (string): Retrieved passages of this round
    @param question (string): Task question
    @param cap (CapacityConfig): Capacity limits
    @param library (TemplateLibrary): Template source, shipped defaults when None
    @param notes_char_cap (int): Freeform rewrite threshold in characters
    @param round_index (int): Round number attached to transport errors

    @return ExtractionOutcome
    """
    warnings = []
    tokens = 0
    reorganized = False
    rewritten = False
    try:
        response = llm.ask(build_extraction_prompt(b.mode, b, observation, question, library),
                           CostBucket.EXTRACTOR)
        tokens += response.total_tokens()
        delta = parse_extraction_output(b.mode, response.content)
        if delta.parse_warning:
            logger.info("extraction parse warning: %s", delta.parse_warning)
            warnings.append(delta.parse_warning)
        state = apply_extraction(b, delta)

        if state.mode == BeliefMode.STRUCTURED and needs_reorganization(state, cap):
            logger.debug("belief state holds %d items, reorganizing", state.item_count())
            state, used, warning = _reorganize(llm, state, question, cap, library)
            tokens += used
            reorganized = True
            if warning:
                warnings.append(warning)
        elif state.mode == BeliefMode.FREEFORM and len(state.notes) > notes_char_cap:
            logger.debug("notes hold %d characters, rewriting", len(state.notes))
            state, used, warning = _rewrite_notes(llm, state, question, library)
            tokens += used
            rewritten = True
            if warning:
                warnings.append(warning)
    except LlmTransportError as error:
        if round_index is not None:
            error.with_round(round_index)
        raise

    return ExtractionOutcome(state=state, token_usage=tokens, parse_warnings=tuple(warnings),
                             reorganized=reorganized, notes_rewritten=rewritten)
