"""@package context_gathering_unittest
Unittest for the episode orchestrator
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

import os
import random
from unittest.mock import MagicMock

import pytest

from tests.dir_init import TEST_FILE_PATH

from context_gathering_grocsoftware.belief_state import BeliefMode, CapacityConfig, Fact
from context_gathering_grocsoftware.belief_state import new_belief_state, parse_structured
from context_gathering_grocsoftware.belief_state import replace_freeform, replace_structured
from context_gathering_grocsoftware.episode_trace import RoundRecord, StopReason
from context_gathering_grocsoftware.exhaustion_gate import LlmGateConfig, LlmGateVariant
from context_gathering_grocsoftware.exhaustion_gate import parse_gate_name
from context_gathering_grocsoftware.harness_adapters import ABSTENTION_MARKER, HarnessKind
from context_gathering_grocsoftware.llm_client import ChatBackend, ChatResponse, CostBucket
from context_gathering_grocsoftware.llm_client import LlmClient, ScriptedBackend
from context_gathering_grocsoftware.orchestrator import MemoryCondition, RunConfig, Task
from context_gathering_grocsoftware.orchestrator import build_agent_context
from context_gathering_grocsoftware.orchestrator import format_recent_rounds, make_run_config
from context_gathering_grocsoftware.orchestrator import read_tasks_jsonl, run_episode
from context_gathering_grocsoftware.orchestrator import truncate_history
from context_gathering_grocsoftware.retriever import RetrievalConfig, Retriever
from context_gathering_grocsoftware.retriever import ingest_corpus, read_corpus_jsonl
from context_gathering_grocsoftware.harness_errors import ConfigurationError
from context_gathering_grocsoftware.harness_errors import CorpusFormatError
from context_gathering_grocsoftware.harness_errors import InvalidArgumentError
from context_gathering_grocsoftware.harness_errors import LlmTransportError

TASK = Task("q001", "Who directed the 1947 film noir that starred Jane Greer as Kathie Moffat?",
            "Jacques Tourneur", True, "bridge")
def _fixed_clock()->str:
    return "2026-01-01T00:00:00Z"

ALL_HARNESSES = [HarnessKind.IRCOT, HarnessKind.REACT, HarnessKind.ITER_RETGEN,
                 HarnessKind.MEMGPT_STYLE]

def _index():
    documents = read_corpus_jsonl(os.path.join(TEST_FILE_PATH, "corpus.jsonl"))
    return ingest_corpus(documents, RetrievalConfig())

def _config(harness:HarnessKind = HarnessKind.REACT,
            condition:MemoryCondition = MemoryCondition.LOBOTOMIZED, **kwargs)->RunConfig:
    return make_run_config(harness, condition, alpha=1.0, k=3, **kwargs)

class RecordingBackend(ScriptedBackend):
    """!
    Scripted backend that keeps every prompt per bucket
    """
    def __init__(self, fixtures:dict, strict:bool = False):
        super().__init__(fixtures, strict)
        self.prompts = {bucket.value: [] for bucket in CostBucket}

    def complete(self, request):
        self.prompts[request.cost_bucket.value].append(request.prompt_text())
        return super().complete(request)

class FailingFinalBackend(ScriptedBackend):
    """!
    Scripted backend whose final answer calls fail
    """
    def complete(self, request):
        if request.cost_bucket == CostBucket.FINAL_ANSWER:
            raise LlmTransportError("final answer endpoint down", attempts=3)
        return super().complete(request)

class RandomCapacityBackend(ChatBackend):
    """!
    Seeded random agent, extractor and reorganization replies
    """
    WORDS = ["greer", "tourneur", "mitchum", "rko", "paris", "noir", "novel", "remake"]

    def __init__(self, seed:int):
        self.rng = random.Random(seed)

    def _extraction(self)->str:
        facts = [f"- fact {self.rng.randrange(10000)} (source: c{self.rng.randrange(9)})"
                 for _ in range(self.rng.randint(0, 5))]
        questions = [f"- question {self.rng.randrange(10000)}?"
                     for _ in range(self.rng.randint(0, 4))]
        return "New facts:\n" + "\n".join(facts) + "\n\nNew questions:\n" + "\n".join(questions)

    def _reorganization(self)->str:
        facts = [f"- curated {i} (source: c{i})" for i in range(self.rng.randint(0, 12))]
        questions = [f"- open {i}?" for i in range(self.rng.randint(0, 10))]
        return "Facts:\n" + "\n".join(facts) + "\n\nOpen questions:\n" + "\n".join(questions)

    def complete(self, request):
        prompt = request.prompt_text()
        if request.cost_bucket == CostBucket.AGENT:
            reply = f"Action: Search[{' '.join(self.rng.sample(self.WORDS, 2))}]"
        elif request.cost_bucket == CostBucket.EXTRACTOR:
            reply = self._reorganization() if "curating" in prompt else self._extraction()
        else:
            reply = "Jacques Tourneur"
        return ChatResponse(content=reply, prompt_tokens=10, completion_tokens=5)

def test001_read_tasks():
    """!
    @brief Task fixture loads with groups and unanswerable flags
    """
    tasks = read_tasks_jsonl(os.path.join(TEST_FILE_PATH, "tasks.jsonl"))
    assert [t.task_id for t in tasks] == ["q001", "q002", "q003"]
    assert tasks[0].gold_answer == "Jacques Tourneur"
    assert tasks[2].gold_answer is None
    assert not tasks[2].answerable
    assert tasks[2].group == "unanswerable"

def test002_read_tasks_errors(tmp_path):
    """!
    @brief Duplicate ids and empty questions are format errors
    """
    task_file = tmp_path / "tasks.jsonl"
    task_file.write_text('{"task_id": "a", "question": "q?"}\n{"task_id": "a", "question": "r?"}\n',
                         encoding="utf-8")
    with pytest.raises(CorpusFormatError) as error_info:
        read_tasks_jsonl(str(task_file))
    assert error_info.value.line_number == 2
    task_file.write_text('{"task_id": "a", "question": "  "}\n', encoding="utf-8")
    with pytest.raises(CorpusFormatError):
        read_tasks_jsonl(str(task_file))

class TestClass01RunConfig:
    """!
    @brief Variant construction and validation
    """
    def test001_defaults(self):
        """!
        @brief Harness defaults fill the round cap, alpha and name
        """
        cfg = make_run_config(HarnessKind.IRCOT, MemoryCondition.BASELINE)
        assert cfg.max_rounds == 10
        assert cfg.retrieval.alpha == 0.9
        assert cfg.name == "IRCoT-Baseline"
        gated = make_run_config(HarnessKind.REACT, MemoryCondition.PBBS_STRUCTURED,
                                gate=parse_gate_name("f_j0.6_u0.3_p2"))
        assert gated.name == "ReAct-PbbsStructured-f_j0.6_u0.3_p2"
        assert gated.summary()["gate"] == "f_j0.6_u0.3_p2"
        assert gated.summary()["k_trigger"] == 10

    def test002_iterretgen_has_no_lobotomized(self):
        """!
        @brief IterRetGen with Lobotomized is rejected
        """
        with pytest.raises(ConfigurationError):
            make_run_config(HarnessKind.ITER_RETGEN, MemoryCondition.LOBOTOMIZED)

    def test003_invalid_limits(self):
        """!
        @brief Limits are range checked
        """
        with pytest.raises(ConfigurationError):
            _config(max_rounds=0)
        with pytest.raises(ConfigurationError):
            _config(budget_tokens=0)
        with pytest.raises(ConfigurationError):
            _config(objective_lambda=-0.1)
        with pytest.raises(ConfigurationError):
            _config(capacity=CapacityConfig(k_trigger=3, k_target=6))
        with pytest.raises(ConfigurationError):
            RunConfig(HarnessKind.REACT, MemoryCondition.BASELINE, 5, gate="f_j0.6").validate()

    def test004_belief_modes(self):
        """!
        @brief Only the belief conditions carry a belief mode
        """
        assert MemoryCondition.PBBS_STRUCTURED.belief_mode() == BeliefMode.STRUCTURED
        assert MemoryCondition.PBBS_FREEFORM.belief_mode() == BeliefMode.FREEFORM
        assert MemoryCondition.BASELINE.belief_mode() is None
        assert MemoryCondition.LOBOTOMIZED.belief_mode() is None

class TestClass02Context:
    """!
    @brief What each memory condition lets the agent see
    """
    @staticmethod
    def _history()->list:
        return [RoundRecord(round_index=1, action_kind="Search", action_text="OLDQUERY",
                            action_description="Search[OLDQUERY]",
                            observation_text="[d#0] OLDPASSAGE"),
                RoundRecord(round_index=2, action_kind="Search", action_text="NEWQUERY",
                            action_description="Search[NEWQUERY]",
                            observation_text="[d#1] NEWPASSAGE")]

    @staticmethod
    def _belief(condition:MemoryCondition):
        mode = condition.belief_mode()
        if mode is None:
            return None
        belief = new_belief_state(TASK.question, mode)
        if mode == BeliefMode.STRUCTURED:
            return replace_structured(belief, (Fact("BELIEFFACT", "d#0"),), ())
        return replace_freeform(belief, "- BELIEFFACT", ())

    def test001_condition_isolation(self):
        """!
        @brief Every harness and condition sees exactly its allowed inputs
        """
        expected = {MemoryCondition.BASELINE: {"OLDPASSAGE", "OLDQUERY", "NEWPASSAGE"},
                    MemoryCondition.LOBOTOMIZED: {"NEWPASSAGE"},
                    MemoryCondition.PBBS_STRUCTURED: {"NEWPASSAGE", "BELIEFFACT"},
                    MemoryCondition.PBBS_FREEFORM: {"NEWPASSAGE", "BELIEFFACT"}}
        markers = {"OLDPASSAGE", "OLDQUERY", "NEWPASSAGE", "BELIEFFACT"}
        for harness in ALL_HARNESSES:
            for condition, visible in expected.items():
                if harness == HarnessKind.ITER_RETGEN:
                    if condition == MemoryCondition.LOBOTOMIZED:
                        continue
                    if condition == MemoryCondition.BASELINE:
                        visible = {"NEWPASSAGE"}
                cfg = make_run_config(harness, condition)
                prompt = build_agent_context(cfg, TASK, self._history(), self._belief(condition),
                                             "[d#1] NEWPASSAGE")
                assert TASK.question in prompt
                for marker in markers:
                    assert (marker in prompt) == (marker in visible), \
                        f"{harness.value}/{condition.value}: {marker}"

    def test002_truncate_history(self):
        """!
        @brief Oldest rounds drop first and the newest always stays
        """
        history = [RoundRecord(round_index=i, action_kind="Search", action_text=f"q{i}")
                   for i in range(1, 6)]
        kept = truncate_history(history, 25, counter=lambda r: 10)
        assert [r.round_index for r in kept] == [4, 5]
        assert [r.round_index for r in truncate_history(history, 5, counter=lambda r: 10)] == [5]
        assert len(truncate_history(history, 1000)) == 5
        with pytest.raises(InvalidArgumentError):
            truncate_history(history, 0)

    def test003_baseline_truncation_in_prompt(self):
        """!
        @brief A small context limit drops the old round from the Baseline prompt
        """
        cfg = make_run_config(HarnessKind.REACT, MemoryCondition.BASELINE, context_token_limit=5)
        prompt = build_agent_context(cfg, TASK, self._history(), None, "[d#1] NEWPASSAGE")
        assert "OLDPASSAGE" not in prompt
        assert "NEWPASSAGE" in prompt

    def test004_recent_rounds(self):
        """!
        @brief LLM gate summary lists the last search rounds
        """
        history = self._history()
        history[0].observation_chunk_ids = ["d#0"]
        text = format_recent_rounds(history, 1)
        assert "NEWQUERY" in text
        assert "OLDQUERY" not in text
        assert "no passages" in text
        assert format_recent_rounds([], 3) == "(none)"

class TestClass03Episodes:
    """!
    @brief Whole episodes over the fixture corpus
    """
    def test001_agent_finish(self):
        """!
        @brief Search then finish stops with the agent's answer
        """
        backend = ScriptedBackend({"agent": ["Action: Search[Jane Greer Kathie Moffat]",
                                             "Action: Finish[Jacques Tourneur]"]})
        trace = run_episode(TASK, _config(), _index(), LlmClient(backend), clock=_fixed_clock)
        assert trace.stop_reason == StopReason.AGENT_FINISH
        assert trace.final_answer == "Jacques Tourneur"
        assert trace.round_count() == 2
        assert trace.rounds[0].observation_chunk_ids
        assert trace.rounds[0].observation_chunk_ids[0].startswith("jane_greer#")
        assert trace.rounds[1].observation_chunk_ids == []
        assert trace.total_tokens_by_bucket["extractor"] == 0
        assert trace.total_tokens_by_bucket["gate"] == 0
        assert trace.total_tokens() == sum(sum(r.tokens_by_bucket.values()) for r in trace.rounds)
        assert trace.started_at == "2026-01-01T00:00:00Z"
        assert trace.run_config["name"] == "ReAct-Lobotomized"

    def test002_round_caps(self):
        """!
        @brief Each harness stops at its default round cap
        """
        scripts = {
            HarnessKind.IRCOT: ({"agent": [f"Tourneur made film number {i}." for i in range(10)],
                                 "final_answer": ["Jacques Tourneur"]}, 10),
            HarnessKind.REACT: ({"agent": [f"Action: Search[film {i}]" for i in range(7)],
                                 "final_answer": ["Jacques Tourneur"]}, 7),
            HarnessKind.MEMGPT_STYLE: ({"agent": [f"search(\"film {i}\")" for i in range(12)],
                                        "final_answer": ["Jacques Tourneur"]}, 12),
            HarnessKind.ITER_RETGEN: ({"agent": ["Greer starred in Out of the Past."] * 3 +
                                                ["So the answer is Jacques Tourneur."]}, 4),
        }
        for harness, (fixtures, rounds) in scripts.items():
            condition = (MemoryCondition.BASELINE if harness == HarnessKind.ITER_RETGEN
                         else MemoryCondition.LOBOTOMIZED)
            backend = ScriptedBackend(fixtures)
            llm = LlmClient(backend)
            trace = run_episode(TASK, _config(harness, condition), _index(), llm,
                                clock=_fixed_clock)
            assert trace.stop_reason == StopReason.MAX_ROUNDS, harness.value
            assert trace.round_count() == rounds, harness.value
            assert trace.final_answer == "Jacques Tourneur", harness.value
            assert trace.total_tokens_by_bucket["gate"] == 0
            assert all(v == 0 for v in backend.remaining().values()), harness.value
        assert llm.ledger.calls(CostBucket.FINAL_ANSWER) == 0

    def test003_condition_isolation_in_episode(self):
        """!
        @brief The second agent prompt only shows what the condition allows
        """
        agent = ["Action: Search[Jane Greer actress]", "Action: Search[Tourneur birthplace]",
                 "Action: Finish[Paris]"]
        extractor = ["New facts:\n- Jane Greer played Kathie Moffat (source: jane_greer#0)"] * 2
        seen = {}
        for condition in MemoryCondition:
            backend = RecordingBackend({"agent": list(agent), "extractor": list(extractor)})
            trace = run_episode(TASK, _config(condition=condition), _index(),
                                LlmClient(backend), clock=_fixed_clock)
            assert trace.stop_reason == StopReason.AGENT_FINISH
            seen[condition] = backend.prompts["agent"][1]
            extractor_calls = len(backend.prompts["extractor"])
            assert extractor_calls == (2 if condition.belief_mode() is not None else 0)
        assert "Search[Jane Greer actress]" in seen[MemoryCondition.BASELINE]
        for condition in (MemoryCondition.LOBOTOMIZED, MemoryCondition.PBBS_STRUCTURED,
                          MemoryCondition.PBBS_FREEFORM):
            assert "Search[Jane Greer actress]" not in seen[condition]
        assert "Jane Greer played Kathie Moffat" in seen[MemoryCondition.PBBS_STRUCTURED]
        assert "Investigation state" not in seen[MemoryCondition.LOBOTOMIZED]

    def test004_memgpt_core_memory_scope(self):
        """!
        @brief Core memory survives rounds only under Baseline
        """
        agent = ["core_memory_append(\"NOTE_FROM_ROUND_ONE\")\nsearch(\"Jane Greer\")",
                 "finish(\"Jacques Tourneur\")"]
        for condition, persists in ((MemoryCondition.BASELINE, True),
                                    (MemoryCondition.LOBOTOMIZED, False)):
            backend = RecordingBackend({"agent": list(agent)})
            trace = run_episode(TASK, _config(HarnessKind.MEMGPT_STYLE, condition), _index(),
                                LlmClient(backend), clock=_fixed_clock)
            assert trace.rounds[0].memory_operations
            assert ("NOTE_FROM_ROUND_ONE" in backend.prompts["agent"][1]) == persists

    def test005_structured_belief_update(self):
        """!
        @brief Belief snapshots, change flags and dead end questions are recorded
        """
        backend = ScriptedBackend({
            "agent": ["Action: Search[Jane Greer Kathie Moffat]",
                      "Action: Finish[Jacques Tourneur]"],
            "extractor": ["New facts:\n- Jane Greer played Kathie Moffat in Out of the Past "
                          "(source: jane_greer#0)\n\nNew questions:\n"
                          "- Director of Out of the Past not found yet?"]})
        trace = run_episode(TASK, _config(condition=MemoryCondition.PBBS_STRUCTURED), _index(),
                            LlmClient(backend), clock=_fixed_clock)
        first = trace.rounds[0]
        assert first.belief_changed
        belief = parse_structured(first.belief_snapshot, TASK.question)
        assert belief.facts[0].source == "jane_greer#0"
        assert trace.total_tokens_by_bucket["extractor"] > 0
        assert trace.no_evidence_artifacts == 1

    def test006_gate_fire_saves_tokens(self):
        """!
        @brief A repeated query fires the gate and costs less than the ungated twin
        """
        fixtures = {"agent": ["Action: Search[Jane Greer film]"] * 7,
                    "final_answer": ["Jacques Tourneur"]}
        gated = run_episode(TASK, _config(gate=parse_gate_name("f_j0.6_u0.3_p2")), _index(),
                            LlmClient(ScriptedBackend(dict(fixtures))), clock=_fixed_clock)
        ungated = run_episode(TASK, _config(), _index(),
                              LlmClient(ScriptedBackend(dict(fixtures))), clock=_fixed_clock)
        assert gated.stop_reason == StopReason.GATE_FIRE
        assert gated.fire_round == 3
        assert gated.round_count() == 3
        assert gated.final_answer == "Jacques Tourneur"
        assert gated.total_tokens_by_bucket["gate"] == 0
        assert gated.rounds[2].gate_decision["fire"]
        assert ungated.stop_reason == StopReason.MAX_ROUNDS
        assert ungated.fire_round is None
        assert ungated.rounds[1].gate_decision["jaccard"] == 1.0
        assert not ungated.rounds[1].gate_decision["fire"]
        assert 1.0 - gated.total_tokens() / ungated.total_tokens() > 0.0

    def test007_llm_gate(self):
        """!
        @brief The LLM gate is charged to the gate bucket and fires on EXHAUSTED
        """
        backend = RecordingBackend({"agent": ["Action: Search[Jane Greer]"],
                                    "gate": ["Reasoning.\nVERDICT: EXHAUSTED"],
                                    "final_answer": ["Jacques Tourneur"]})
        cfg = _config(gate=LlmGateConfig(LlmGateVariant.NEUTRAL))
        trace = run_episode(TASK, cfg, _index(), LlmClient(backend), clock=_fixed_clock)
        assert trace.stop_reason == StopReason.GATE_FIRE
        assert trace.fire_round == 1
        assert trace.total_tokens_by_bucket["gate"] > 0
        assert trace.rounds[0].gate_decision["verdict"] == "EXHAUSTED"
        assert "Jane Greer" in backend.prompts["gate"][0]

    def test008_budget(self):
        """!
        @brief A spent budget stops the episode before the next round
        """
        backend = ScriptedBackend({"agent": ["Action: Search[Jane Greer]"] * 3,
                                   "final_answer": ["Jacques Tourneur"]})
        trace = run_episode(TASK, _config(budget_tokens=1), _index(), LlmClient(backend),
                            clock=_fixed_clock)
        assert trace.stop_reason == StopReason.BUDGET_EXHAUSTED
        assert trace.round_count() == 1
        assert trace.final_answer == "Jacques Tourneur"

    def test009_transport_error(self):
        """!
        @brief A failed agent call ends the episode with an abstention
        """
        backend = MagicMock(spec=ChatBackend)
        backend.complete.side_effect = LlmTransportError("endpoint down", attempts=3)
        trace = run_episode(TASK, _config(), _index(), LlmClient(backend), clock=_fixed_clock)
        assert trace.stop_reason == StopReason.TRANSPORT_ERROR
        assert trace.final_answer == ABSTENTION_MARKER
        assert trace.error == "round 1: endpoint down"
        assert trace.round_count() == 0

    def test010_failed_final_answer_abstains(self):
        """!
        @brief A failed final answer call yields the abstention marker
        """
        backend = FailingFinalBackend({"agent": ["Action: Search[Jane Greer]"] * 2})
        trace = run_episode(TASK, _config(max_rounds=2), _index(), LlmClient(backend),
                            clock=_fixed_clock)
        assert trace.stop_reason == StopReason.MAX_ROUNDS
        assert trace.final_answer == ABSTENTION_MARKER

    def test011_shared_retriever(self):
        """!
        @brief A prebuilt retriever is used as is
        """
        cfg = _config()
        retriever = Retriever(_index(), cfg.retrieval)
        backend = ScriptedBackend({"agent": ["Action: Finish[Paris]"]})
        trace = run_episode(TASK, cfg, retriever, LlmClient(backend), clock=_fixed_clock)
        assert trace.final_answer == "Paris"
        assert trace.round_count() == 1

def test003_random_capacity_episodes():
    """!
    @brief No structured state ever holds more than k_trigger items after a round
    """
    cfg = _config(condition=MemoryCondition.PBBS_STRUCTURED)
    retriever = Retriever(_index(), cfg.retrieval)
    reorganized = 0
    for seed in range(500):
        llm = LlmClient(RandomCapacityBackend(seed))
        trace = run_episode(TASK, cfg, retriever, llm, clock=_fixed_clock)
        assert trace.stop_reason == StopReason.MAX_ROUNDS
        for record in trace.rounds:
            belief = parse_structured(record.belief_snapshot, TASK.question)
            assert belief.item_count() <= cfg.capacity.k_trigger
        reorganized += trace.reorganizations
    assert reorganized > 0
