"""@package context_gathering
@brief Exhaustion gate: stagnation signals, persistence counting and the LLM gate variants

The programmatic gate never calls a language model.  It combines the
lexical overlap of the current search query with recent queries (action
Jaccard) and the share of never-seen chunks in the observation (unique
passage rate), and fires after p consecutive stagnant rounds.
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
from dataclasses import dataclass, replace
from enum import Enum
from typing import FrozenSet, Optional, Tuple

from context_gathering_grocsoftware.harness_errors import ConfigurationError
from context_gathering_grocsoftware.harness_errors import InvalidStateError
from context_gathering_grocsoftware import prompt_templates
from context_gathering_grocsoftware.prompt_templates import TemplateLibrary
from context_gathering_grocsoftware.retriever import tokenize_text

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 3

class Smoothing(Enum):
    """!
    Signal smoothing
    """
    DISCRETE = "Discrete"
    SMOOTH = "Smooth"

class TriggerMode(Enum):
    """!
    QUERY_AND_FULL looks at the signals only, FULL also requires an unchanged belief state
    """
    QUERY_AND_FULL = "QueryAndFull"
    FULL = "Full"

class LlmGateVariant(Enum):
    """!
    Prompt used by an LLM judged gate
    """
    CONSERVATIVE = "conservative"
    NEUTRAL = "neutral"

class GateVerdict(Enum):
    """!
    LLM gate verdict
    """
    PRODUCTIVE = "PRODUCTIVE"
    QUERY_STALE = "QUERY_STALE"
    EXHAUSTED = "EXHAUSTED"

def _format_number(value:float)->str:
    return f"{value:g}"

@dataclass(frozen=True)
class GateConfig:
    """!
    Programmatic gate parameters
    """
    tau_j: float
    tau_u: float
    persistence: int = 2
    smoothing: Smoothing = Smoothing.DISCRETE
    beta: Optional[float] = None
    window: int = DEFAULT_WINDOW
    trigger_mode: TriggerMode = TriggerMode.QUERY_AND_FULL

    def validate(self):
        """!
        @brief Range check every field

        @return GateConfig - self when valid
        """
        if not 0.0 <= self.tau_j <= 1.0:
            raise ConfigurationError(f"tau_j must be in [0,1], got {self.tau_j}")
        if not 0.0 <= self.tau_u <= 1.0:
            raise ConfigurationError(f"tau_u must be in [0,1], got {self.tau_u}")
        if self.persistence < 1:
            raise ConfigurationError(f"persistence must be at least 1, got {self.persistence}")
        if self.window < 1:
            raise ConfigurationError(f"window must be at least 1, got {self.window}")
        if self.smoothing == Smoothing.SMOOTH:
            if self.beta is None or not 0.0 < self.beta < 1.0:
                raise ConfigurationError(f"smooth gates need beta in (0,1), got {self.beta}")
        elif self.beta is not None:
            raise ConfigurationError("discrete gates take no beta")
        return self

    def compact_name(self)->str:
        """!
        @brief Compact string form, e.g. f_j0.6_u0.3_p2

        @return string
        """
        core = f"j{_format_number(self.tau_j)}_u{_format_number(self.tau_u)}_p{self.persistence}"
        if self.smoothing == Smoothing.SMOOTH:
            name = f"s_b{_format_number(self.beta)}_{core}"
        else:
            name = f"f_{core}"
        if self.window != DEFAULT_WINDOW:
            name += f"_w{self.window}"
        if self.trigger_mode == TriggerMode.FULL:
            name += "_full"
        return name

@dataclass(frozen=True)
class LlmGateConfig:
    """!
    LLM judged gate parameters
    """
    variant: LlmGateVariant
    persistence: int = 1
    window: int = DEFAULT_WINDOW

    def validate(self):
        """!
        @brief Range check every field

        @return LlmGateConfig - self when valid
        """
        if self.persistence < 1:
            raise ConfigurationError(f"persistence must be at least 1, got {self.persistence}")
        if self.window < 1:
            raise ConfigurationError(f"window must be at least 1, got {self.window}")
        return self

    def compact_name(self)->str:
        """!
        @brief Compact string form, e.g. llm_neutral_p1

        @return string
        """
        name = f"llm_{self.variant.value}_p{self.persistence}"
        if self.window != DEFAULT_WINDOW:
            name += f"_w{self.window}"
        return name

_NUMBER = r"([0-9]*\.?[0-9]+)"
_DISCRETE_NAME_REGX = re.compile(rf"^f_j{_NUMBER}_u{_NUMBER}_p(\d+)(?:_w(\d+))?(_full)?$")
_SMOOTH_NAME_REGX = re.compile(rf"^s_b{_NUMBER}_j{_NUMBER}_u{_NUMBER}_p(\d+)(?:_w(\d+))?(_full)?$")
_LLM_NAME_REGX = re.compile(r"^llm_(conservative|neutral)(?:_p(\d+))?(?:_w(\d+))?$")

def parse_gate_name(name:str):
    """!
    @brief Parse a compact gate string

    @param name (string): f_j.._u.._p.., s_b.._j.._u.._p.., or llm_<variant>_p..
                          with optional _w<window> and (programmatic only) _full

    @return GateConfig or LlmGateConfig, validated
    """
    text = name.strip().lower()
    match = _DISCRETE_NAME_REGX.match(text)
    if match:
        tau_j, tau_u, persistence, window, full = match.groups()
        return GateConfig(tau_j=float(tau_j), tau_u=float(tau_u), persistence=int(persistence),
                          window=int(window) if window else DEFAULT_WINDOW,
                          trigger_mode=TriggerMode.FULL if full else
                          TriggerMode.QUERY_AND_FULL).validate()
    match = _SMOOTH_NAME_REGX.match(text)
    if match:
        beta, tau_j, tau_u, persistence, window, full = match.groups()
        return GateConfig(tau_j=float(tau_j), tau_u=float(tau_u), persistence=int(persistence),
                          smoothing=Smoothing.SMOOTH, beta=float(beta),
                          window=int(window) if window else DEFAULT_WINDOW,
                          trigger_mode=TriggerMode.FULL if full else
                          TriggerMode.QUERY_AND_FULL).validate()
    match = _LLM_NAME_REGX.match(text)
    if match:
        variant, persistence, window = match.groups()
        return LlmGateConfig(variant=LlmGateVariant(variant),
                             persistence=int(persistence) if persistence else 1,
                             window=int(window) if window else DEFAULT_WINDOW).validate()
    raise ConfigurationError(f"unrecognized gate string '{name}'")

@dataclass(frozen=True)
class GateState:
    """!
    Per episode gate memory.  Updated functionally, one value per round.
    """
    recent_actions: Tuple[FrozenSet[str], ...] = ()
    seen_chunk_ids: FrozenSet[str] = frozenset()
    consecutive_stagnant: int = 0
    ema_jaccard: Optional[float] = None
    ema_upr: Optional[float] = None
    fired: bool = False
    fire_round: Optional[int] = None
    rounds_seen: int = 0

@dataclass(frozen=True)
class GateDecision:
    """!
    Gate output for one round.  jaccard and upr are the values compared to
    the thresholds (smoothed for smooth gates).
    """
    round_index: int
    jaccard: float
    upr: float
    stagnated: bool
    fire: bool
    raw_jaccard: float = 0.0
    raw_upr: float = 0.0
    verdict: Optional[GateVerdict] = None

    def to_dict(self)->dict:
        """!
        @brief Trace form

        @return dict
        """
        document = {"round": self.round_index, "jaccard": self.jaccard, "upr": self.upr,
                    "raw_jaccard": self.raw_jaccard, "raw_upr": self.raw_upr,
                    "stagnated": self.stagnated, "fire": self.fire}
        if self.verdict is not None:
            document["verdict"] = self.verdict.value
        return document

def tokenize_action(action_query:str)->frozenset:
    """!
    @brief Token set of a search query

    @param action_query (string): Query text

    @return frozenset of string
    """
    return frozenset(tokenize_text(action_query or ""))

def action_jaccard(current:frozenset, recent:list)->float:
    """!
    @brief Highest Jaccard similarity between current and any recent token set

    @param current (frozenset): Current action tokens
    @param recent (list of frozenset): Recent action tokens

    @return float - 0 for an empty window; two empty sets count as identical
    """
    best = 0.0
    for previous in recent:
        union = current | previous
        similarity = 1.0 if not union else len(current & previous) / len(union)
        best = max(best, similarity)
    return best

def unique_passage_rate(observed_ids:list, seen:frozenset)->float:
    """!
    @brief Share of distinct observed chunks not seen before

    @param observed_ids (list of string): Chunk ids of this observation
    @param seen (set of string): Chunk ids of earlier rounds

    @return float - 0 for an empty observation
    """
    distinct = set(observed_ids)
    if not distinct:
        return 0.0
    return len(distinct - set(seen)) / len(distinct)

def _advance(gs:GateState, window:int, action_tokens:frozenset, observed_ids:list,
             stagnated:bool, persistence:int, round_index:int, **ema)->tuple:
    """!
    @brief Shared counter and memory update

    @return (GateState, fire flag)
    """
    consecutive = gs.consecutive_stagnant + 1 if stagnated else 0
    fire = consecutive >= persistence
    recent = (gs.recent_actions + (action_tokens,))[-window:]
    new_state = replace(gs, recent_actions=recent,
                        seen_chunk_ids=gs.seen_chunk_ids | frozenset(observed_ids),
                        consecutive_stagnant=consecutive, fired=fire,
                        fire_round=round_index if fire else None,
                        rounds_seen=gs.rounds_seen + 1, **ema)
    return new_state, fire

def update_gate(gs:GateState, cfg:GateConfig, action_query:str, observed_ids:list,
                belief_changed:bool, round_index:int = None)->tuple:
    """!
    @brief Evaluate one round of the programmatic gate

    Signals are computed against the state before this round's action and
    chunks are added to it.  The opening round has no recent actions and is
    never stagnant.

    @param gs (GateState): State before this round, not yet fired
    @param cfg (GateConfig): Gate parameters
    @param action_query (string): This round's search query
    @param observed_ids (list of string): This round's chunk ids
    @param belief_changed (bool): Whether the belief state changed this round
    @param round_index (int): Round number, defaults to rounds seen + 1

    @return (GateState, GateDecision)
    """
    if gs.fired:
        raise InvalidStateError(f"gate already fired at round {gs.fire_round}")
    if round_index is None:
        round_index = gs.rounds_seen + 1

    action_tokens = tokenize_action(action_query)
    raw_j = action_jaccard(action_tokens, list(gs.recent_actions))
    raw_u = unique_passage_rate(observed_ids, gs.seen_chunk_ids)

    ema = {}
    j_value, u_value = raw_j, raw_u
    if cfg.smoothing == Smoothing.SMOOTH:
        j_value = raw_j if gs.ema_jaccard is None else \
            cfg.beta * gs.ema_jaccard + (1.0 - cfg.beta) * raw_j
        u_value = raw_u if gs.ema_upr is None else \
            cfg.beta * gs.ema_upr + (1.0 - cfg.beta) * raw_u
        ema = {"ema_jaccard": j_value, "ema_upr": u_value}

    stagnated = bool(gs.recent_actions) and j_value >= cfg.tau_j and u_value <= cfg.tau_u
    if cfg.trigger_mode == TriggerMode.FULL and belief_changed:
        stagnated = False

    new_state, fire = _advance(gs, cfg.window, action_tokens, observed_ids, stagnated,
                               cfg.persistence, round_index, **ema)
    if fire:
        logger.info("gate %s fired at round %d (jaccard %.3f, upr %.3f)", cfg.compact_name(),
                    round_index, j_value, u_value)
    return new_state, GateDecision(round_index=round_index, jaccard=j_value, upr=u_value,
                                   stagnated=stagnated, fire=fire, raw_jaccard=raw_j,
                                   raw_upr=raw_u)

def update_llm_gate(gs:GateState, cfg:LlmGateConfig, verdict:GateVerdict, action_query:str,
                    observed_ids:list, round_index:int = None)->tuple:
    """!
    @brief Count an LLM verdict toward persistence; QUERY_STALE and EXHAUSTED both count

    The programmatic signals are still computed and recorded.

    @param gs (GateState): State before this round, not yet fired
    @param cfg (LlmGateConfig): Gate parameters
    @param verdict (GateVerdict): Parsed verdict for this round
    @param action_query (string): This round's search query
    @param observed_ids (list of string): This round's chunk ids
    @param round_index (int): Round number, defaults to rounds seen + 1

    @return (GateState, GateDecision)
    """
    if gs.fired:
        raise InvalidStateError(f"gate already fired at round {gs.fire_round}")
    if round_index is None:
        round_index = gs.rounds_seen + 1
    action_tokens = tokenize_action(action_query)
    raw_j = action_jaccard(action_tokens, list(gs.recent_actions))
    raw_u = unique_passage_rate(observed_ids, gs.seen_chunk_ids)
    stagnated = verdict != GateVerdict.PRODUCTIVE
    new_state, fire = _advance(gs, cfg.window, action_tokens, observed_ids, stagnated,
                               cfg.persistence, round_index)
    if fire:
        logger.info("gate %s fired at round %d (verdict %s)", cfg.compact_name(), round_index,
                    verdict.value)
    return new_state, GateDecision(round_index=round_index, jaccard=raw_j, upr=raw_u,
                                   stagnated=stagnated, fire=fire, raw_jaccard=raw_j,
                                   raw_upr=raw_u, verdict=verdict)

def observe_round(gs:GateState, action_query:str, observed_ids:list,
                  window:int = DEFAULT_WINDOW, round_index:int = None)->tuple:
    """!
    @brief Record the raw signals of a round for an episode that runs without a gate

    @param gs (GateState): Observer state
    @param action_query (string): This round's search query
    @param observed_ids (list of string): This round's chunk ids
    @param window (int): Jaccard window
    @param round_index (int): Round number, defaults to rounds seen + 1

    @return (GateState, GateDecision) - the decision never fires
    """
    if round_index is None:
        round_index = gs.rounds_seen + 1
    action_tokens = tokenize_action(action_query)
    raw_j = action_jaccard(action_tokens, list(gs.recent_actions))
    raw_u = unique_passage_rate(observed_ids, gs.seen_chunk_ids)
    new_state = replace(gs, recent_actions=(gs.recent_actions + (action_tokens,))[-window:],
                        seen_chunk_ids=gs.seen_chunk_ids | frozenset(observed_ids),
                        rounds_seen=gs.rounds_seen + 1)
    return new_state, GateDecision(round_index=round_index, jaccard=raw_j, upr=raw_u,
                                   stagnated=False, fire=False, raw_jaccard=raw_j,
                                   raw_upr=raw_u)

def build_llm_gate_prompt(variant:LlmGateVariant, question:str, state_text:str,
                          recent_rounds:str, window:int,
                          library:TemplateLibrary = None)->str:
    """!
    @brief Fill the conservative or neutral gate prompt

    @param variant (LlmGateVariant): Prompt variant
    @param question (string): Task question
    @param state_text (string): Current belief rendering or trajectory summary
    @param recent_rounds (string): Summary of the last window rounds
    @param window (int): Number of rounds summarized
    @param library (TemplateLibrary): Template source, shipped defaults when None

    @return string
    """
    templates = library if library is not None else prompt_templates.default_library()
    template_id = (prompt_templates.GATE_CONSERVATIVE if variant == LlmGateVariant.CONSERVATIVE
                   else prompt_templates.GATE_NEUTRAL)
    return templates.render(template_id, question=question, current_state=state_text,
                            recent_rounds=recent_rounds, window=window)

_VERDICT_LINE_REGX = re.compile(r"verdict\s*:(.*)$", re.IGNORECASE)
_VERDICT_VALUE_REGX = re.compile(r"^\s*\**\s*(productive|query[_ ]stale|exhausted)\b",
                                 re.IGNORECASE)

def parse_llm_gate_verdict(reply:str)->GateVerdict:
    """!
    @brief First VERDICT line of the reply; anything unparseable is PRODUCTIVE

    @param reply (string): Raw gate reply

    @return GateVerdict
    """
    for line in (reply or "").splitlines():
        line_match = _VERDICT_LINE_REGX.search(line)
        if line_match is None:
            continue
        value = _VERDICT_VALUE_REGX.match(line_match.group(1))
        if value is None:
            return GateVerdict.PRODUCTIVE
        return GateVerdict(value.group(1).upper().replace(" ", "_"))
    return GateVerdict.PRODUCTIVE

def replay_gate(cfg:GateConfig, rounds:list)->Optional[int]:
    """!
    @brief Offline replay of a programmatic gate over recorded rounds

    @param cfg (GateConfig): Gate to replay
    @param rounds (list of (query, chunk ids, belief_changed)): Search rounds in order,
                  each tagged with its round number as a fourth element when available

    @return int round whose signals fired the gate, or None
    """
    gs = GateState()
    for position, entry in enumerate(rounds, start=1):
        query, chunk_ids, belief_changed = entry[0], entry[1], entry[2]
        round_index = entry[3] if len(entry) > 3 else position
        gs, decision = update_gate(gs, cfg, query, chunk_ids, belief_changed, round_index)
        if decision.fire:
            return round_index
    return None
