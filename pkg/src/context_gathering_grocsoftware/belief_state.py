"""@package context_gathering
@brief Predicate based belief state

Facts and open predicates the orchestrator keeps for one episode, the
capacity rules that bound them and their two textual forms.
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

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Tuple

from context_gathering_grocsoftware.harness_errors import ConfigurationError
from context_gathering_grocsoftware.harness_errors import InvalidArgumentError

## Rendered in place of an empty freeform state
NO_NOTES_MARKER = "(no notes yet)"
## Source recorded for structured facts the extractor did not attribute
UNATTRIBUTED_SOURCE = "unattributed"

STRUCTURED_FACTS_KEY = "established_facts"
STRUCTURED_QUESTIONS_KEY = "open_questions"

class BeliefMode(Enum):
    """!
    Belief state textualization
    """
    STRUCTURED = "Structured"
    FREEFORM = "Freeform"

def normalize_item(text:str)->str:
    """!
    @brief Comparison key for facts and questions: trimmed and case-folded

    @param text (string): Claim or question text

    @return string - normalized key
    """
    return text.strip().casefold()

@dataclass(frozen=True)
class Fact:
    """!
    A confirmed proposition and the passage it came from
    """
    claim: str
    source: str = ""

    def __post_init__(self):
        if not isinstance(self.claim, str) or not self.claim.strip():
            raise InvalidArgumentError("fact claim must be non-empty")
        object.__setattr__(self, "claim", self.claim.strip())
        object.__setattr__(self, "source", (self.source or "").strip())

@dataclass(frozen=True)
class OpenPredicate:
    """!
    An unresolved sub-question
    """
    question: str

    def __post_init__(self):
        if not isinstance(self.question, str) or not self.question.strip():
            raise InvalidArgumentError("open predicate question must be non-empty")
        object.__setattr__(self, "question", self.question.strip())

@dataclass(frozen=True)
class CapacityConfig:
    """!
    Belief state size limits
    """
    k_trigger: int = 10
    k_target: int = 6
    n_questions: int = 6

    def validate(self):
        """!
        @brief Check 0 < k_target <= k_trigger and n_questions > 0

        @return CapacityConfig - self when valid
        """
        if not 0 < self.k_target <= self.k_trigger:
            raise ConfigurationError(f"capacity requires 0 < k_target <= k_trigger, got "
                                     f"k_target={self.k_target} k_trigger={self.k_trigger}")
        if self.n_questions <= 0:
            raise ConfigurationError(f"n_questions must be positive, got {self.n_questions}")
        return self

@dataclass(frozen=True)
class ExtractionResult:
    """!
    Parsed extractor reply, the delta applied to a belief state
    """
    mode: BeliefMode
    nothing_relevant: bool = False
    new_facts: Tuple[Tuple[str, str], ...] = ()
    resolved_questions: Tuple[str, ...] = ()
    new_questions: Tuple[str, ...] = ()
    new_notes: Tuple[str, ...] = ()
    new_memories: Tuple[str, ...] = ()
    parse_warning: str = ""

    def is_empty(self)->bool:
        """!
        @brief True when applying the delta cannot change a state

        @return bool
        """
        return (self.nothing_relevant or
                not (self.new_facts or self.resolved_questions or self.new_questions or
                     self.new_notes or self.new_memories))

@dataclass(frozen=True)
class BeliefState:
    """!
    Orchestrator curated state b_t.  Structured mode uses facts and
    open_predicates, freeform mode uses notes and memories.
    """
    mode: BeliefMode
    original_query: str
    facts: Tuple[Fact, ...] = ()
    open_predicates: Tuple[OpenPredicate, ...] = ()
    notes: str = ""
    memories: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.mode == BeliefMode.STRUCTURED:
            if self.notes or self.memories:
                raise InvalidArgumentError("structured belief state cannot hold notes")
        elif self.facts or self.open_predicates:
            raise InvalidArgumentError("freeform belief state cannot hold facts")

    def item_count(self)->int:
        """!
        @brief Facts plus open predicates

        @return int
        """
        return len(self.facts) + len(self.open_predicates)

def new_belief_state(query:str, mode:BeliefMode)->BeliefState:
    """!
    @brief Initial state b_0 for a task

    @param query (string): Task question
    @param mode (BeliefMode): Textualization to use

    @return BeliefState - structured states start with the query as the only open predicate
    """
    if not isinstance(query, str) or not query.strip():
        raise InvalidArgumentError("belief state query must be non-empty")
    if mode == BeliefMode.STRUCTURED:
        return BeliefState(mode=mode, original_query=query,
                           open_predicates=(OpenPredicate(query),))
    return BeliefState(mode=mode, original_query=query)

def _apply_structured(b:BeliefState, delta:ExtractionResult)->BeliefState:
    """!
    @brief Structured branch of apply_extraction
    """
    facts = list(b.facts)
    seen_claims = {normalize_item(f.claim) for f in facts}
    for claim, source in delta.new_facts:
        if not claim or not claim.strip():
            continue
        key = normalize_item(claim)
        if key in seen_claims:
            continue
        seen_claims.add(key)
        facts.append(Fact(claim, source if source and source.strip() else UNATTRIBUTED_SOURCE))

    resolved = {normalize_item(q) for q in delta.resolved_questions if q.strip()}
    questions = [p for p in b.open_predicates if normalize_item(p.question) not in resolved]
    seen_questions = {normalize_item(p.question) for p in questions}
    for question in delta.new_questions:
        key = normalize_item(question)
        if not key or key in seen_questions:
            continue
        seen_questions.add(key)
        questions.append(OpenPredicate(question))

    return replace(b, facts=tuple(facts), open_predicates=tuple(questions))

def _apply_freeform(b:BeliefState, delta:ExtractionResult)->BeliefState:
    """!
    @brief Freeform branch of apply_extraction
    """
    note_lines = [b.notes] if b.notes else []
    note_lines.extend(f"- {n.strip()}" for n in delta.new_notes if n.strip())
    memories = list(b.memories)
    memories.extend(m.strip() for m in delta.new_memories if m.strip())
    return replace(b, notes="\n".join(note_lines), memories=tuple(memories))

def apply_extraction(b:BeliefState, delta:ExtractionResult)->BeliefState:
    """!
    @brief b_{t+1} = Extract(b_t, o_t), the deterministic half

    New facts are appended in delta order, case-fold duplicates of existing
    claims are dropped, open predicates matching a resolved question are
    removed and new questions are appended.  Freeform deltas append notes
    and memories.

    @param b (BeliefState): Current state
    @param delta (ExtractionResult): Parsed extractor reply

    @return BeliefState - updated state; b itself when the delta is empty
    """
    if b.mode != delta.mode:
        raise InvalidArgumentError(f"extraction mode {delta.mode.value} does not match "
                                   f"belief mode {b.mode.value}")
    if delta.is_empty():
        return b
    if b.mode == BeliefMode.STRUCTURED:
        return _apply_structured(b, delta)
    return _apply_freeform(b, delta)

def needs_reorganization(b:BeliefState, cap:CapacityConfig)->bool:
    """!
    @brief True iff facts plus open predicates exceed k_trigger

    @param b (BeliefState): Structured state
    @param cap (CapacityConfig): Capacity limits

    @return bool
    """
    if b.mode != BeliefMode.STRUCTURED:
        raise InvalidArgumentError("reorganization applies to structured states only")
    return b.item_count() > cap.k_trigger

def enforce_capacity(b:BeliefState, cap:CapacityConfig)->BeliefState:
    """!
    @brief Hard truncation applied after a reorganization

    Facts are cut to k_target, open predicates to n_questions and then to
    whatever room k_trigger leaves after the facts.  List order is kept.

    @param b (BeliefState): Structured state
    @param cap (CapacityConfig): Capacity limits

    @return BeliefState
    """
    if b.mode != BeliefMode.STRUCTURED:
        raise InvalidArgumentError("capacity enforcement applies to structured states only")
    facts = b.facts[:cap.k_target]
    question_room = max(0, min(cap.n_questions, cap.k_trigger - len(facts)))
    questions = b.open_predicates[:question_room]
    if len(facts) == len(b.facts) and len(questions) == len(b.open_predicates):
        return b
    return replace(b, facts=facts, open_predicates=questions)

def replace_structured(b:BeliefState, facts:tuple, open_predicates:tuple)->BeliefState:
    """!
    @brief Swap in a reorganized fact and question list

    @param b (BeliefState): Structured state
    @param facts (tuple of Fact): New facts
    @param open_predicates (tuple of OpenPredicate): New open predicates

    @return BeliefState
    """
    if b.mode != BeliefMode.STRUCTURED:
        raise InvalidArgumentError("replace_structured applies to structured states only")
    return replace(b, facts=tuple(facts), open_predicates=tuple(open_predicates))

def replace_freeform(b:BeliefState, notes:str, memories:tuple)->BeliefState:
    """!
    @brief Swap in rewritten notes and memories

    @param b (BeliefState): Freeform state
    @param notes (string): Rewritten notes
    @param memories (tuple of string): Memories to keep

    @return BeliefState
    """
    if b.mode != BeliefMode.FREEFORM:
        raise InvalidArgumentError("replace_freeform applies to freeform states only")
    return replace(b, notes=notes, memories=tuple(memories))

def render_structured(b:BeliefState)->str:
    """!
    @brief JSON object with established facts and open questions

    Keys and list order are fixed so equal states render identically.

    @param b (BeliefState): Structured state

    @return string
    """
    if b.mode != BeliefMode.STRUCTURED:
        raise InvalidArgumentError("render_structured requires a structured state")
    document = {STRUCTURED_FACTS_KEY: [{"claim": f.claim, "source": f.source} for f in b.facts],
                STRUCTURED_QUESTIONS_KEY: [p.question for p in b.open_predicates]}
    return json.dumps(document, indent=2, ensure_ascii=False)

def parse_structured(text:str, original_query:str)->BeliefState:
    """!
    @brief Inverse of render_structured

    @param text (string): Output of render_structured
    @param original_query (string): Query the state belongs to

    @return BeliefState
    """
    try:
        document = json.loads(text)
        facts = tuple(Fact(entry["claim"], entry.get("source", ""))
                      for entry in document[STRUCTURED_FACTS_KEY])
        questions = tuple(OpenPredicate(q) for q in document[STRUCTURED_QUESTIONS_KEY])
    except (ValueError, KeyError, TypeError) as error:
        raise InvalidArgumentError(f"not a structured belief rendering: {error}") from error
    return BeliefState(mode=BeliefMode.STRUCTURED, original_query=original_query,
                       facts=facts, open_predicates=questions)

def render_freeform(b:BeliefState)->str:
    """!
    @brief Notes followed by a Memories section

    @param b (BeliefState): Freeform state

    @return string - NO_NOTES_MARKER when the state is empty
    """
    if b.mode != BeliefMode.FREEFORM:
        raise InvalidArgumentError("render_freeform requires a freeform state")
    sections = [b.notes if b.notes else NO_NOTES_MARKER]
    if b.memories:
        memory_lines = "\n".join(f"- {m}" for m in b.memories)
        sections.append(f"Memories:\n{memory_lines}")
    return "\n\n".join(sections)

def render_belief(b:BeliefState)->str:
    """!
    @brief Render a state in its own mode

    @param b (BeliefState): Any state

    @return string
    """
    if b.mode == BeliefMode.STRUCTURED:
        return render_structured(b)
    return render_freeform(b)
