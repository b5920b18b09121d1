"""@package context_gathering_unittest
Unittest for the exhaustion gate
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
import random

import pytest

from context_gathering_grocsoftware.exhaustion_gate import GateConfig, GateState
from context_gathering_grocsoftware.exhaustion_gate import GateVerdict, LlmGateConfig
from context_gathering_grocsoftware.exhaustion_gate import LlmGateVariant, Smoothing
from context_gathering_grocsoftware.exhaustion_gate import TriggerMode, action_jaccard
from context_gathering_grocsoftware.exhaustion_gate import build_llm_gate_prompt
from context_gathering_grocsoftware.exhaustion_gate import observe_round, parse_gate_name
from context_gathering_grocsoftware.exhaustion_gate import parse_llm_gate_verdict
from context_gathering_grocsoftware.exhaustion_gate import replay_gate, tokenize_action
from context_gathering_grocsoftware.exhaustion_gate import unique_passage_rate
from context_gathering_grocsoftware.exhaustion_gate import update_gate, update_llm_gate
from context_gathering_grocsoftware.harness_errors import ConfigurationError
from context_gathering_grocsoftware.harness_errors import InvalidStateError

## Six search rounds: (query, chunk ids, belief changed)
SIX_ROUNDS = [("jane greer film director", ["c1", "c2", "c3"], True),
              ("jane greer film director 1947", ["c1", "c2", "c4"], True),
              ("jane greer film director", ["c1", "c2", "c3"], False),
              ("jane greer film director", ["c1", "c2", "c4"], True),
              ("tourneur birth year", ["c5", "c6", "c1"], True),
              ("tourneur birth year", ["c5", "c6", "c1"], False)]

SWEEP_NAMES = ["f_j0.5_u0.3_p2", "f_j0.6_u0.3_p2", "f_j0.7_u0.3_p2", "f_j0.6_u0.2_p2",
               "f_j0.6_u0.4_p2", "f_j0.6_u0.3_p1", "f_j0.6_u0.3_p3",
               "s_b0.3_j0.5_u0.3_p2", "s_b0.3_j0.6_u0.3_p2", "s_b0.3_j0.7_u0.3_p2",
               "s_b0.5_j0.5_u0.3_p2", "s_b0.5_j0.6_u0.3_p2", "s_b0.5_j0.7_u0.3_p2",
               "s_b0.7_j0.5_u0.3_p2", "s_b0.7_j0.6_u0.3_p2", "s_b0.7_j0.7_u0.3_p2",
               "f_j0.6_u0.3_p2_full", "f_j0.6_u0.3_p2_w1"]

def oracle_jaccard(current:set, recent:list)->float:
    """!
    @brief Brute force maximum Jaccard similarity
    """
    values = []
    for previous in recent:
        union = current | previous
        values.append(1.0 if len(union) == 0 else len(current & previous) / len(union))
    return max(values) if values else 0.0

def oracle_upr(observed:list, seen:set)->float:
    """!
    @brief Brute force unique passage rate
    """
    distinct = set(observed)
    if len(distinct) == 0:
        return 0.0
    return len([c for c in distinct if c not in seen]) / len(distinct)

def oracle_fire_round(cfg:GateConfig, rounds:list):
    """!
    @brief Reference gate written from the stopping rule alone
    """
    history = []
    seen = set()
    count = 0
    ema_j = None
    ema_u = None
    for round_index, (query, ids, belief_changed) in enumerate(rounds, start=1):
        tokens = set(query.split())
        recent = history[-cfg.window:]
        j_value = oracle_jaccard(tokens, recent)
        u_value = oracle_upr(ids, seen)
        if cfg.smoothing == Smoothing.SMOOTH:
            ema_j = j_value if ema_j is None else cfg.beta * ema_j + (1.0 - cfg.beta) * j_value
            ema_u = u_value if ema_u is None else cfg.beta * ema_u + (1.0 - cfg.beta) * u_value
            j_value, u_value = ema_j, ema_u
        stagnant = len(recent) > 0 and j_value >= cfg.tau_j and u_value <= cfg.tau_u
        if cfg.trigger_mode == TriggerMode.FULL and belief_changed:
            stagnant = False
        count = count + 1 if stagnant else 0
        if count >= cfg.persistence:
            return round_index
        history.append(tokens)
        seen.update(ids)
    return None

class TestClass01Config:
    """!
    @brief Gate configuration and compact names
    """
    def test001_compact_names_round_trip(self):
        """!
        @brief Every sweep name parses back to itself
        """
        for name in SWEEP_NAMES:
            assert parse_gate_name(name).compact_name() == name

    def test002_parse_fields(self):
        """!
        @brief Parsed fields match the string
        """
        cfg = parse_gate_name("s_b0.5_j0.6_u0.3_p2_w5_full")
        assert cfg == GateConfig(tau_j=0.6, tau_u=0.3, persistence=2, smoothing=Smoothing.SMOOTH,
                                 beta=0.5, window=5, trigger_mode=TriggerMode.FULL)
        llm = parse_gate_name("llm_conservative_p2")
        assert llm == LlmGateConfig(LlmGateVariant.CONSERVATIVE, persistence=2)
        assert parse_gate_name("llm_neutral").compact_name() == "llm_neutral_p1"

    def test003_invalid_configs(self):
        """!
        @brief Out of range values and unknown strings are configuration errors
        """
        with pytest.raises(ConfigurationError):
            parse_gate_name("f_j1.01_u0.3_p2")
        with pytest.raises(ConfigurationError):
            parse_gate_name("f_j0.6_u0.3_p0")
        with pytest.raises(ConfigurationError):
            parse_gate_name("s_b1.0_j0.6_u0.3_p2")
        with pytest.raises(ConfigurationError):
            parse_gate_name("gate_please")
        with pytest.raises(ConfigurationError):
            GateConfig(tau_j=0.6, tau_u=0.3, beta=0.5).validate()
        with pytest.raises(ConfigurationError):
            GateConfig(tau_j=0.6, tau_u=0.3, window=0).validate()
        with pytest.raises(ConfigurationError):
            LlmGateConfig(LlmGateVariant.NEUTRAL, persistence=0).validate()

class TestClass02Signals:
    """!
    @brief Jaccard and unique passage rate
    """
    def test001_jaccard_edges(self):
        """!
        @brief Empty window gives 0, two empty sets count as identical
        """
        assert action_jaccard(frozenset({"a"}), []) == 0.0
        assert action_jaccard(frozenset(), [frozenset()]) == 1.0
        assert action_jaccard(frozenset({"a", "b"}), [frozenset({"b", "c"}),
                                                      frozenset({"a", "b"})]) == 1.0
        assert action_jaccard(frozenset({"a", "b"}), [frozenset({"b", "c"})]) == 1.0 / 3.0

    def test002_upr_edges(self):
        """!
        @brief Empty observation gives 0, duplicates count once
        """
        assert unique_passage_rate([], frozenset({"x"})) == 0.0
        assert unique_passage_rate(["a", "a", "b"], frozenset({"b"})) == 0.5
        assert unique_passage_rate(["a"], frozenset()) == 1.0

    def test003_tokenize_action(self):
        """!
        @brief Queries are lowercased word sets
        """
        assert tokenize_action("Jane GREER, jane?") == frozenset({"jane", "greer"})
        assert tokenize_action("") == frozenset()

    def test004_randomized_oracle(self):
        """!
        @brief 1000 random instances match brute force set arithmetic exactly
        """
        rng = random.Random(20260401)
        vocabulary = [f"w{i}" for i in range(12)]
        chunk_pool = [f"c{i}" for i in range(20)]
        for _ in range(1000):
            current = set(rng.sample(vocabulary, rng.randint(0, 5)))
            recent = [set(rng.sample(vocabulary, rng.randint(0, 5)))
                      for _ in range(rng.randint(0, 4))]
            seen = set(rng.sample(chunk_pool, rng.randint(0, 10)))
            observed = [rng.choice(chunk_pool) for _ in range(rng.randint(0, 6))]
            assert action_jaccard(frozenset(current), [frozenset(r) for r in recent]) == \
                oracle_jaccard(current, recent)
            assert unique_passage_rate(observed, frozenset(seen)) == oracle_upr(observed, seen)

class TestClass03UpdateGate:
    """!
    @brief Stopping decisions
    """
    def test001_global_best_config_sequence(self):
        """!
        @brief f_j0.6_u0.3_p2 fires on the fourth round of the hand built sequence
        """
        cfg = parse_gate_name("f_j0.6_u0.3_p2")
        state = GateState()
        decisions = []
        for query, ids, changed in SIX_ROUNDS[:4]:
            state, decision = update_gate(state, cfg, query, ids, changed)
            decisions.append(decision)
        assert [d.stagnated for d in decisions] == [False, False, True, True]
        assert [d.fire for d in decisions] == [False, False, False, True]
        assert decisions[1].jaccard == 0.8
        assert decisions[2].upr == 0.0
        assert state.fired
        assert state.fire_round == 4

    def test002_sweep_matches_oracle(self):
        """!
        @brief Discrete, smooth, window and trigger variants agree with the reference gate
        """
        for name in SWEEP_NAMES:
            cfg = parse_gate_name(name)
            assert replay_gate(cfg, SIX_ROUNDS) == oracle_fire_round(cfg, SIX_ROUNDS), name

    def test003_randomized_sequences_match_oracle(self):
        """!
        @brief Random episodes agree with the reference gate for every sweep config
        """
        rng = random.Random(7)
        words = ["greer", "film", "director", "tourneur", "birth", "year", "noir"]
        configs = [parse_gate_name(name) for name in SWEEP_NAMES]
        for _ in range(200):
            rounds = []
            for _ in range(rng.randint(1, 8)):
                query = " ".join(rng.sample(words, rng.randint(1, 4)))
                ids = [f"c{rng.randint(0, 9)}" for _ in range(rng.randint(0, 4))]
                rounds.append((query, ids, rng.random() < 0.5))
            for cfg in configs:
                assert replay_gate(cfg, rounds) == oracle_fire_round(cfg, rounds)

    def test004_first_round_never_stagnant(self):
        """!
        @brief Without recent actions there is no stagnation even with zero UPR
        """
        cfg = parse_gate_name("f_j0.0_u1.0_p1")
        _, decision = update_gate(GateState(), cfg, "x", [], False)
        assert not decision.stagnated
        assert not decision.fire

    def test005_update_after_fire(self, caplog):
        """!
        @brief A fired gate cannot be updated and the fire is logged
        """
        cfg = parse_gate_name("f_j0.5_u0.5_p1")
        state = GateState()
        with caplog.at_level(logging.INFO, logger="context_gathering_grocsoftware"):
            state, _ = update_gate(state, cfg, "a b", ["c1"], False)
            state, decision = update_gate(state, cfg, "a b", ["c1"], False)
        assert decision.fire
        assert "fired at round 2" in caplog.text
        with pytest.raises(InvalidStateError):
            update_gate(state, cfg, "a b", ["c1"], False)

    def test006_persistence_resets(self):
        """!
        @brief A productive round resets the stagnation counter
        """
        cfg = parse_gate_name("f_j0.6_u0.3_p2")
        rounds = [("a b", ["c1"], False), ("a b", ["c1"], False), ("a b", ["c2"], False),
                  ("a b", ["c2"], False), ("a b", ["c2"], False)]
        assert replay_gate(cfg, rounds) == 5

    def test007_full_mode_belief_changed(self):
        """!
        @brief Full trigger mode never fires while the belief keeps changing
        """
        rounds = [("a b", ["c1"], True)] * 6
        assert replay_gate(parse_gate_name("f_j0.6_u0.3_p2_full"), rounds) is None
        assert replay_gate(parse_gate_name("f_j0.6_u0.3_p2"), rounds) == 3

    def test008_query_and_full_equals_full_when_belief_static(self):
        """!
        @brief Trigger modes agree when the belief never changes
        """
        rounds = [(q, ids, False) for q, ids, _ in SIX_ROUNDS]
        assert replay_gate(parse_gate_name("f_j0.6_u0.3_p2"), rounds) == \
            replay_gate(parse_gate_name("f_j0.6_u0.3_p2_full"), rounds)

    def test009_replay_uses_recorded_round_numbers(self):
        """!
        @brief A fourth tuple element replaces the position as round number
        """
        rounds = [("a", ["c1"], False, 2), ("a", ["c1"], False, 3), ("a", ["c1"], False, 5)]
        assert replay_gate(parse_gate_name("f_j0.6_u0.3_p2"), rounds) == 5

    def test010_smooth_initialization(self):
        """!
        @brief The moving averages start at the first sample
        """
        cfg = parse_gate_name("s_b0.5_j0.6_u0.3_p1")
        state, decision = update_gate(GateState(), cfg, "a b", ["c1", "c2"], False)
        assert decision.upr == 1.0
        assert state.ema_upr == 1.0
        _, decision = update_gate(state, cfg, "a b", ["c1", "c2"], False)
        assert decision.raw_upr == 0.0
        assert decision.upr == 0.5
        assert decision.jaccard == 0.5 * 0.0 + 0.5 * 1.0

class TestClass04LlmGate:
    """!
    @brief LLM judged gate helpers
    """
    def test001_parse_verdict(self):
        """!
        @brief Verdict lines are found, anything else is productive
        """
        assert parse_llm_gate_verdict("Reasoning...\nVERDICT: EXHAUSTED") == GateVerdict.EXHAUSTED
        assert parse_llm_gate_verdict("verdict: **query stale**") == GateVerdict.QUERY_STALE
        assert parse_llm_gate_verdict("I think we should stop") == GateVerdict.PRODUCTIVE
        assert parse_llm_gate_verdict("") == GateVerdict.PRODUCTIVE

    def test002_first_verdict_line_decides(self):
        """!
        @brief Only the first VERDICT line counts and an unreadable one stays productive
        """
        assert parse_llm_gate_verdict("VERDICT: unsure\nVERDICT: EXHAUSTED") == \
            GateVerdict.PRODUCTIVE
        assert parse_llm_gate_verdict("VERDICT:\nREASON: nothing new") == GateVerdict.PRODUCTIVE
        assert parse_llm_gate_verdict("VERDICT: QUERY_STALE\nVERDICT: EXHAUSTED") == \
            GateVerdict.QUERY_STALE
        assert parse_llm_gate_verdict("My verdict is clear.\nVERDICT: EXHAUSTED") == \
            GateVerdict.EXHAUSTED

    def test003_persistence(self):
        """!
        @brief Stale and exhausted verdicts both count toward persistence
        """
        cfg = LlmGateConfig(LlmGateVariant.NEUTRAL, persistence=2)
        state, first = update_llm_gate(GateState(), cfg, GateVerdict.QUERY_STALE, "a", ["c1"])
        assert first.stagnated and not first.fire
        state, second = update_llm_gate(state, cfg, GateVerdict.EXHAUSTED, "a", ["c1"])
        assert second.fire
        assert second.to_dict()["verdict"] == "EXHAUSTED"
        assert second.raw_upr == 0.0
        with pytest.raises(InvalidStateError):
            update_llm_gate(state, cfg, GateVerdict.PRODUCTIVE, "a", ["c1"])

    def test004_prompt_variants(self):
        """!
        @brief Both prompt variants carry the question and the window
        """
        for variant in LlmGateVariant:
            prompt = build_llm_gate_prompt(variant, "Who?", "state", "round summary", 3)
            assert "Who?" in prompt
            assert "round summary" in prompt
        assert build_llm_gate_prompt(LlmGateVariant.CONSERVATIVE, "q", "s", "r", 3) != \
            build_llm_gate_prompt(LlmGateVariant.NEUTRAL, "q", "s", "r", 3)

    def test005_observer_never_fires(self):
        """!
        @brief The observer records signals of a gateless episode
        """
        state = GateState()
        for query, ids, _ in SIX_ROUNDS:
            state, decision = observe_round(state, query, ids)
            assert not decision.fire
        assert state.rounds_seen == 6
        assert len(state.recent_actions) == 3
        assert decision.raw_jaccard == 1.0

    def test006_echoed_prompt_stays_productive(self):
        """!
        @brief The format line names no concrete verdict, so an echoed prompt keeps the gate open
        """
        for variant in LlmGateVariant:
            prompt = build_llm_gate_prompt(variant, "Who?", "state", "round summary", 3)
            verdict_lines = [line for line in prompt.splitlines()
                             if line.upper().startswith("VERDICT")]
            assert verdict_lines == ["VERDICT: <one of PRODUCTIVE, QUERY_STALE, EXHAUSTED>"]
            assert parse_llm_gate_verdict(prompt + "\nVERDICT: EXHAUSTED") == \
                GateVerdict.PRODUCTIVE
