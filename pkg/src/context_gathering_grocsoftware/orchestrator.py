"""@package context_gathering
@brief Episode state machine: harness step, retrieval, memory update, gate and stopping

One call to run_episode runs one task under one run configuration and
returns its EpisodeTrace.  Episodes share the read only corpus index and
nothing else, so a grid can run them on a thread pool.
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
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Optional

from context_gathering_grocsoftware.belief_state import BeliefMode, CapacityConfig
from context_gathering_grocsoftware.belief_state import new_belief_state, render_belief
from context_gathering_grocsoftware.episode_trace import EpisodeTrace, RoundRecord, StopReason
from context_gathering_grocsoftware.exhaustion_gate import GateConfig, GateState, LlmGateConfig
from context_gathering_grocsoftware.exhaustion_gate import build_llm_gate_prompt
from context_gathering_grocsoftware.exhaustion_gate import observe_round
from context_gathering_grocsoftware.exhaustion_gate import parse_llm_gate_verdict
from context_gathering_grocsoftware.exhaustion_gate import update_gate, update_llm_gate
from context_gathering_grocsoftware.extractor import DEFAULT_NOTES_CHAR_CAP, extract_step
from context_gathering_grocsoftware.harness_adapters import ABSTENTION_MARKER, ActionKind
from context_gathering_grocsoftware.harness_adapters import CoreMemory, HarnessKind
from context_gathering_grocsoftware.harness_adapters import make_adapter
from context_gathering_grocsoftware.harness_errors import ConfigurationError
from context_gathering_grocsoftware.harness_errors import CorpusFormatError
from context_gathering_grocsoftware.harness_errors import InvalidArgumentError
from context_gathering_grocsoftware.harness_errors import LlmTransportError
from context_gathering_grocsoftware.llm_client import CostBucket, LlmClient
from context_gathering_grocsoftware.llm_client import approx_count_tokens, diff_buckets
from context_gathering_grocsoftware import prompt_templates
from context_gathering_grocsoftware.prompt_templates import TemplateLibrary
from context_gathering_grocsoftware.retriever import CorpusIndex, RetrievalConfig, Retriever
from context_gathering_grocsoftware.retriever import format_observation

logger = logging.getLogger(__name__)

DEFAULT_CONTEXT_TOKEN_LIMIT = 4000
NO_PASSAGES = "(none yet)"
## Open question phrases that mark a search dead end written into the state
NO_EVIDENCE_PHRASES = ("no evidence", "not found")

class MemoryCondition(Enum):
    """!
    What the agent sees of earlier rounds
    """
    BASELINE = "Baseline"
    LOBOTOMIZED = "Lobotomized"
    PBBS_STRUCTURED = "PbbsStructured"
    PBBS_FREEFORM = "PbbsFreeform"

    def belief_mode(self)->Optional[BeliefMode]:
        """!
        @return BeliefMode for the belief conditions, None otherwise
        """
        if self == MemoryCondition.PBBS_STRUCTURED:
            return BeliefMode.STRUCTURED
        if self == MemoryCondition.PBBS_FREEFORM:
            return BeliefMode.FREEFORM
        return None

@dataclass(frozen=True)
class Task:
    """!
    One question of the evaluation set
    """
    task_id: str
    question: str
    gold_answer: Optional[str] = None
    answerable: bool = True
    group: Optional[str] = None

    def __post_init__(self):
        if not self.task_id:
            raise InvalidArgumentError("task id must be non-empty")
        if not isinstance(self.question, str) or not self.question.strip():
            raise InvalidArgumentError(f"task {self.task_id} has an empty question")

def read_tasks_jsonl(file_name:str)->list:
    """!
    @brief Read line delimited task records

    @param file_name (string): Task file with task_id, question, gold_answer,
                               answerable and optional group fields

    @return list of Task
    """
    tasks = []
    seen = set()
    with open(file_name, "rt", encoding="utf-8") as task_file:
        for line_number, line in enumerate(task_file, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                group = record.get("group")
                task = Task(task_id=str(record["task_id"]), question=record["question"],
                            gold_answer=record.get("gold_answer"),
                            answerable=bool(record.get("answerable", True)),
                            group=None if group is None else str(group))
            except (ValueError, KeyError, TypeError) as error:
                raise CorpusFormatError(file_name, line_number, f"bad task record: {error}") \
                    from error
            if task.task_id in seen:
                raise CorpusFormatError(file_name, line_number,
                                        f"duplicate task id '{task.task_id}'")
            seen.add(task.task_id)
            tasks.append(task)
    return tasks

@dataclass(frozen=True)
class RunConfig:
    """!
    One experiment variant: harness, memory condition, gate and limits
    """
    harness: HarnessKind
    memory_condition: MemoryCondition
    max_rounds: int
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    capacity: CapacityConfig = field(default_factory=CapacityConfig)
    gate: object = None
    budget_tokens: Optional[int] = None
    context_token_limit: int = DEFAULT_CONTEXT_TOKEN_LIMIT
    objective_lambda: float = 0.0
    notes_char_cap: int = DEFAULT_NOTES_CHAR_CAP
    name: str = ""

    def validate(self):
        """!
        @brief Check every invariant of the variant

        @return RunConfig - self when valid
        """
        if (self.harness == HarnessKind.ITER_RETGEN and
                self.memory_condition == MemoryCondition.LOBOTOMIZED):
            raise ConfigurationError("IterRetGen keeps no agent history and has no "
                                     "Lobotomized condition")
        if self.max_rounds < 1:
            raise ConfigurationError(f"max_rounds must be at least 1, got {self.max_rounds}")
        if self.budget_tokens is not None and self.budget_tokens < 1:
            raise ConfigurationError(f"budget_tokens must be positive, got {self.budget_tokens}")
        if self.context_token_limit < 1:
            raise ConfigurationError("context_token_limit must be positive")
        if self.objective_lambda < 0.0:
            raise ConfigurationError(f"lambda must not be negative, got {self.objective_lambda}")
        if self.notes_char_cap < 1:
            raise ConfigurationError("notes_char_cap must be positive")
        if self.gate is not None and not isinstance(self.gate, (GateConfig, LlmGateConfig)):
            raise ConfigurationError(f"unsupported gate {self.gate!r}")
        if self.gate is not None:
            self.gate.validate()
        self.retrieval.validate()
        self.capacity.validate()
        return self

    def gate_name(self)->Optional[str]:
        """!
        @return string compact gate name or None
        """
        return None if self.gate is None else self.gate.compact_name()

    def summary(self)->dict:
        """!
        @brief Flat description written into traces and summaries

        @return dict
        """
        return {"name": self.name, "harness": self.harness.value,
                "memory_condition": self.memory_condition.value, "max_rounds": self.max_rounds,
                "gate": self.gate_name(), "alpha": self.retrieval.alpha, "k": self.retrieval.k,
                "k_trigger": self.capacity.k_trigger, "k_target": self.capacity.k_target,
                "n_questions": self.capacity.n_questions, "budget_tokens": self.budget_tokens,
                "context_token_limit": self.context_token_limit,
                "lambda": self.objective_lambda}

def make_run_config(harness:HarnessKind, memory_condition:MemoryCondition, name:str = None,
                    max_rounds:int = None, gate = None, alpha:float = None, k:int = None,
                    capacity:CapacityConfig = None, budget_tokens:int = None,
                    context_token_limit:int = DEFAULT_CONTEXT_TOKEN_LIMIT,
                    objective_lambda:float = 0.0,
                    notes_char_cap:int = DEFAULT_NOTES_CHAR_CAP,
                    retrieval:RetrievalConfig = None)->RunConfig:
    """!
    @brief RunConfig with the per harness defaults filled in, validated

    @param harness (HarnessKind): Harness
    @param memory_condition (MemoryCondition): Memory condition
    @param name (string): Variant name, derived from the parts when None
    @param max_rounds (int): Round cap, harness default when None
    @param gate (GateConfig or LlmGateConfig): Gate or None
    @param alpha (float): Lexical weight, harness default when None
    @param k (int): Chunks per retrieval, 5 when None
    @param capacity (CapacityConfig): Belief capacity, defaults when None
    @param budget_tokens (int): Episode token budget or None
    @param context_token_limit (int): Baseline history limit
    @param objective_lambda (float): Token cost weight of the objective
    @param notes_char_cap (int): Freeform rewrite threshold
    @param retrieval (RetrievalConfig): Base retrieval configuration

    @return RunConfig
    """
    adapter = make_adapter(harness)
    base = retrieval if retrieval is not None else RetrievalConfig()
    retrieval_cfg = RetrievalConfig(alpha=adapter.default_alpha if alpha is None else alpha,
                                    k=base.k if k is None else k, bm25_k1=base.bm25_k1,
                                    bm25_b=base.bm25_b, chunk_size=base.chunk_size,
                                    chunk_overlap=base.chunk_overlap)
    if name is None:
        name = f"{harness.value}-{memory_condition.value}"
        if gate is not None:
            name += f"-{gate.compact_name()}"
    return RunConfig(harness=harness, memory_condition=memory_condition,
                     max_rounds=adapter.default_max_rounds if max_rounds is None else max_rounds,
                     retrieval=retrieval_cfg,
                     capacity=capacity if capacity is not None else CapacityConfig(),
                     gate=gate, budget_tokens=budget_tokens,
                     context_token_limit=context_token_limit,
                     objective_lambda=objective_lambda, notes_char_cap=notes_char_cap,
                     name=name).validate()

def render_round(record:RoundRecord)->str:
    """!
    @brief Trajectory text of one round

    @param record (RoundRecord): Round

    @return string
    """
    observation = record.observation_text if record.observation_text else "(no passages)"
    return f"Round {record.round_index}\nAction: {record.action_description}\n" \
           f"Observation:\n{observation}"

def round_token_count(record:RoundRecord)->int:
    """!
    @return int - approximate tokens of the round's trajectory text
    """
    return approx_count_tokens(render_round(record))

def truncate_history(history:list, token_limit:int, counter = round_token_count)->list:
    """!
    @brief Drop whole rounds, oldest first, until the rest fits token_limit

    The newest round is always kept.

    @param history (list of RoundRecord): Rounds in order
    @param token_limit (int): Token limit, positive
    @param counter (callable): Round to token count

    @return list of RoundRecord
    """
    if token_limit <= 0:
        raise InvalidArgumentError(f"token_limit must be positive, got {token_limit}")
    sizes = [counter(record) for record in history]
    start = 0
    total = sum(sizes)
    while total > token_limit and start < len(history) - 1:
        total -= sizes[start]
        start += 1
    return list(history[start:])

def _trajectory_section(history:list, token_limit:int)->str:
    kept = truncate_history(history, token_limit) if history else []
    if not kept:
        return f"Previous rounds:\n{NO_PASSAGES}"
    return "Previous rounds:\n" + "\n\n".join(render_round(r) for r in kept)

def _passages_section(last_observation:str)->str:
    return "Retrieved passages:\n" + (last_observation if last_observation else NO_PASSAGES)

def _belief_section(belief)->str:
    return "Investigation state:\n" + render_belief(belief)

def context_section(cfg:RunConfig, history:list, belief, last_observation:str)->str:
    """!
    @brief The part of the agent prompt that depends on the memory condition

    @param cfg (RunConfig): Variant
    @param history (list of RoundRecord): Earlier rounds, read for Baseline only
    @param belief (BeliefState): Current state, read for the belief conditions only
    @param last_observation (string): Passages of the latest round

    @return string
    """
    condition = cfg.memory_condition
    if condition == MemoryCondition.LOBOTOMIZED:
        return _passages_section(last_observation)
    if condition == MemoryCondition.BASELINE:
        if cfg.harness == HarnessKind.ITER_RETGEN:
            return _passages_section(last_observation)
        return _trajectory_section(history, cfg.context_token_limit)
    return _belief_section(belief) + "\n\n" + _passages_section(last_observation)

def build_agent_context(cfg:RunConfig, task:Task, history:list, belief,
                        last_observation:str, core_memory:CoreMemory = None,
                        library:TemplateLibrary = None)->str:
    """!
    @brief Full agent prompt for the next round

    Baseline gets the question and the truncated trajectory, Lobotomized the
    question and the latest observation, the belief conditions the question,
    the rendered state and the latest observation.

    @param cfg (RunConfig): Variant
    @param task (Task): Task
    @param history (list of RoundRecord): Earlier rounds
    @param belief (BeliefState): Current state or None
    @param last_observation (string): Passages of the latest round
    @param core_memory (CoreMemory): MemGPT memory block
    @param library (TemplateLibrary): Template source, shipped defaults when None

    @return string
    """
    templates = library if library is not None else prompt_templates.default_library()
    adapter = make_adapter(cfg.harness)
    values = {"question": task.question,
              "context": context_section(cfg, history, belief, last_observation)}
    if cfg.harness == HarnessKind.MEMGPT_STYLE:
        values["core_memory"] = (core_memory if core_memory is not None else CoreMemory()).render()
    return templates.render(adapter.template_id, **values)

def force_final_answer(llm:LlmClient, task:Task, cfg:RunConfig, belief, history:list,
                       last_observation:str = "", library:TemplateLibrary = None)->str:
    """!
    @brief One final-answer call over what the condition allows the agent to see

    @param llm (LlmClient): Client, charged to the final answer bucket
    @param task (Task): Task
    @param cfg (RunConfig): Variant
    @param belief (BeliefState): Current state or None
    @param history (list of RoundRecord): Earlier rounds
    @param last_observation (string): Passages of the latest round
    @param library (TemplateLibrary): Template source, shipped defaults when None

    @return string - the reply, or the abstention marker on transport failure
    """
    templates = library if library is not None else prompt_templates.default_library()
    if cfg.memory_condition.belief_mode() is not None:
        context = _belief_section(belief)
    elif cfg.memory_condition == MemoryCondition.LOBOTOMIZED or \
            cfg.harness == HarnessKind.ITER_RETGEN:
        context = _passages_section(last_observation)
    else:
        context = _trajectory_section(history, cfg.context_token_limit)
    prompt = templates.render(prompt_templates.FINAL_ANSWER, question=task.question,
                              context=context)
    try:
        return llm.ask(prompt, CostBucket.FINAL_ANSWER).content.strip()
    except LlmTransportError as error:
        logger.warning("final answer call failed for task %s: %s", task.task_id, error)
        return ABSTENTION_MARKER

def format_recent_rounds(history:list, window:int)->str:
    """!
    @brief Summary of the last window retrieval rounds for the LLM gate

    @param history (list of RoundRecord): Rounds so far
    @param window (int): Rounds to include

    @return string
    """
    lines = []
    for record in [r for r in history if r.retrieval_query() is not None][-window:]:
        chunks = ", ".join(record.observation_chunk_ids) or "no passages"
        lines.append(f"Round {record.round_index}: query \"{record.action_text}\" -> {chunks}")
    return "\n" + "\n".join(lines) if lines else "(none)"

def _utc_now()->str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

class _Episode():
    """!
    Mutable state of one running episode
    """
    def __init__(self, task:Task, cfg:RunConfig, retriever:Retriever, llm:LlmClient,
                 library:TemplateLibrary, clock):
        ## Task
        self.task = task
        ## Variant
        self.cfg = cfg
        ## Bound retriever
        self.retriever = retriever
        ## Client shared by every role of this episode
        self.llm = llm
        ## Template source
        self.library = library
        ## Harness adapter
        self.adapter = make_adapter(cfg.harness)
        mode = cfg.memory_condition.belief_mode()
        ## Belief state, None outside the belief conditions
        self.belief = None if mode is None else new_belief_state(task.question, mode)
        ## Recorded rounds
        self.history = []
        ## Gate or observer state
        self.gate_state = GateState()
        ## Latest observation text
        self.last_observation = ""
        ## MemGPT core memory
        self.core_memory = CoreMemory()
        ## Latest Iter-RetGen candidate answer
        self.candidate_answer = ""
        ## Dead end questions seen in the belief state
        self.no_evidence = set()
        self.start_tokens = llm.ledger.tokens_by_bucket()
        self.trace = EpisodeTrace(task_id=task.task_id, variant=cfg.name,
                                  run_config=cfg.summary(), question=task.question,
                                  gold_answer=task.gold_answer, answerable=task.answerable,
                                  group=task.group, started_at=clock())

    def episode_tokens(self)->int:
        """!
        @return int - tokens spent by this episode so far
        """
        return sum(diff_buckets(self.llm.ledger.tokens_by_bucket(), self.start_tokens).values())

    def agent_prompt(self)->str:
        """!
        @return string - agent prompt for the next round
        """
        return build_agent_context(self.cfg, self.task, self.history, self.belief,
                                   self.last_observation, self.core_memory, self.library)

    def final_answer(self)->str:
        """!
        @return string - forced final answer over the current view
        """
        return force_final_answer(self.llm, self.task, self.cfg, self.belief, self.history,
                                  self.last_observation, self.library)

    def max_rounds_answer(self)->str:
        """!
        @brief Answer when the round cap is reached without a finish action

        @return string
        """
        if self.cfg.harness != HarnessKind.ITER_RETGEN:
            return self.final_answer()
        try:
            return self.adapter.final_generation(self.llm, self.agent_prompt())
        except LlmTransportError as error:
            logger.warning("final generation failed for task %s: %s", self.task.task_id, error)
            return self.candidate_answer if self.candidate_answer else ABSTENTION_MARKER

    def update_memory(self, record:RoundRecord, observation:str, round_index:int)->bool:
        """!
        @brief Belief update for the belief conditions

        @return bool - True when the belief state changed
        """
        if self.belief is None:
            return False
        if not observation:
            record.belief_snapshot = render_belief(self.belief)
            return False
        outcome = extract_step(self.llm, self.belief, observation, self.task.question,
                               self.cfg.capacity, self.library, self.cfg.notes_char_cap,
                               round_index)
        changed = outcome.state != self.belief
        self.belief = outcome.state
        record.parse_warnings.extend(outcome.parse_warnings)
        record.reorganized = outcome.reorganized
        record.notes_rewritten = outcome.notes_rewritten
        record.belief_snapshot = render_belief(self.belief)
        if outcome.reorganized:
            self.trace.reorganizations += 1
        if outcome.notes_rewritten:
            self.trace.notes_rewrites += 1
        for predicate in self.belief.open_predicates:
            text = predicate.question.casefold()
            if any(phrase in text for phrase in NO_EVIDENCE_PHRASES):
                self.no_evidence.add(text)
        return changed

    def evaluate_gate(self, record:RoundRecord, query:str, chunk_ids:list,
                      belief_changed:bool, round_index:int):
        """!
        @brief Gate decision for the round; raw signals are recorded with or without a gate

        @return GateDecision
        """
        gate = self.cfg.gate
        if isinstance(gate, GateConfig):
            self.gate_state, decision = update_gate(self.gate_state, gate, query, chunk_ids,
                                                    belief_changed, round_index)
        elif isinstance(gate, LlmGateConfig):
            state_text = render_belief(self.belief) if self.belief is not None else \
                _passages_section(self.last_observation)
            prompt = build_llm_gate_prompt(gate.variant, self.task.question, state_text,
                                           format_recent_rounds(self.history + [record],
                                                                gate.window),
                                           gate.window, self.library)
            verdict = parse_llm_gate_verdict(self.llm.ask(prompt, CostBucket.GATE).content)
            self.gate_state, decision = update_llm_gate(self.gate_state, gate, verdict, query,
                                                        chunk_ids, round_index)
        else:
            self.gate_state, decision = observe_round(self.gate_state, query, chunk_ids,
                                                      round_index=round_index)
        return decision

    def run_round(self, round_index:int)->bool:
        """!
        @brief One harness step plus retrieval, memory and gate

        @return bool - True when the agent finished
        """
        before = self.llm.ledger.tokens_by_bucket()
        retries_before = self.llm.ledger.total_retries()
        if (self.cfg.harness == HarnessKind.MEMGPT_STYLE and
                self.cfg.memory_condition != MemoryCondition.BASELINE):
            self.core_memory.clear()

        step = self.adapter.step(self.llm, self.agent_prompt(), round_index,
                                 self.task.question, self.core_memory)
        action = step.action
        record = RoundRecord(round_index=round_index, action_kind=action.kind.value,
                             action_text=action.text, tool_name=action.tool_name,
                             action_description=action.describe(),
                             parse_warnings=list(step.parse_warnings),
                             memory_operations=list(step.memory_operations))
        if step.candidate_answer:
            self.candidate_answer = step.candidate_answer

        finished = action.kind == ActionKind.FINISH
        try:
            if finished:
                self.trace.final_answer = action.text
                self.trace.stop_reason = StopReason.AGENT_FINISH
            else:
                query = action.retrieval_query()
                results = self.retriever.retrieve(query)
                observation = format_observation(results)
                chunk_ids = [chunk.chunk_id for chunk, _ in results]
                record.observation_chunk_ids = chunk_ids
                record.observation_text = observation
                record.belief_changed = self.update_memory(record, observation, round_index)
                decision = self.evaluate_gate(record, query, chunk_ids, record.belief_changed,
                                              round_index)
                record.gate_decision = decision.to_dict()
                self.last_observation = observation
                if decision.fire:
                    self.trace.fire_round = round_index
        finally:
            record.tokens_by_bucket = diff_buckets(self.llm.ledger.tokens_by_bucket(), before)
            record.transport_retries = self.llm.ledger.total_retries() - retries_before
            self.history.append(record)
        return finished

    def run(self)->EpisodeTrace:
        """!
        @brief Loop until one stop condition holds

        @return EpisodeTrace
        """
        round_index = 0
        try:
            for round_index in range(1, self.cfg.max_rounds + 2):
                if self.gate_state.fired:
                    self.trace.stop_reason = StopReason.GATE_FIRE
                    self.trace.final_answer = self.final_answer()
                    break
                if round_index > self.cfg.max_rounds:
                    self.trace.stop_reason = StopReason.MAX_ROUNDS
                    self.trace.final_answer = self.max_rounds_answer()
                    break
                if (self.cfg.budget_tokens is not None and
                        self.episode_tokens() >= self.cfg.budget_tokens):
                    logger.info("task %s exhausted its %d token budget", self.task.task_id,
                                self.cfg.budget_tokens)
                    self.trace.stop_reason = StopReason.BUDGET_EXHAUSTED
                    self.trace.final_answer = self.final_answer()
                    break
                if self.run_round(round_index):
                    break
        except LlmTransportError as error:
            error.with_round(round_index)
            logger.error("task %s stopped by transport failure: %s", self.task.task_id, error)
            self.trace.stop_reason = StopReason.TRANSPORT_ERROR
            self.trace.final_answer = ABSTENTION_MARKER
            self.trace.error = str(error)

        self.trace.rounds = self.history
        self.trace.no_evidence_artifacts = len(self.no_evidence)
        self.trace.total_tokens_by_bucket = {
            name: value - self.start_tokens.get(name, 0)
            for name, value in self.llm.ledger.tokens_by_bucket().items()}
        return self.trace

def run_episode(task:Task, cfg:RunConfig, index, llm:LlmClient, embedder = None,
                library:TemplateLibrary = None, clock = _utc_now)->EpisodeTrace:
    """!
    @brief Run one task under one variant

    @param task (Task): Task
    @param cfg (RunConfig): Validated variant
    @param index (CorpusIndex or Retriever): Corpus to search
    @param llm (LlmClient): Client for this episode; its ledger receives every call
    @param embedder (Embedder): Query embedder when index is a bare CorpusIndex
    @param library (TemplateLibrary): Template source, shipped defaults when None
    @param clock (callable): Returns the start timestamp string

    @return EpisodeTrace
    """
    cfg.validate()
    retriever = index
    if isinstance(index, CorpusIndex):
        retriever = Retriever(index, cfg.retrieval, embedder)
    episode = _Episode(task, cfg, retriever, llm, library, clock)
    trace = episode.run()
    logger.info("task %s variant %s: %s after %d rounds, %d tokens", task.task_id, cfg.name,
                trace.stop_reason.value, trace.round_count(), trace.total_tokens())
    return trace
