"""@package context_gathering
@brief Episode trace records and their JSON-lines file form

A trace file holds one header record, one record per round and one footer
record, each a JSON object with sorted keys on its own line.
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
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from context_gathering_grocsoftware.harness_errors import CorpusFormatError

TRACE_FORMAT_VERSION = 1
## Timestamp written when timestamps are normalized for byte comparison
NORMALIZED_TIMESTAMP = "1970-01-01T00:00:00Z"

class StopReason(Enum):
    """!
    Why an episode ended; exactly one per episode
    """
    AGENT_FINISH = "AgentFinish"
    GATE_FIRE = "GateFire"
    MAX_ROUNDS = "MaxRounds"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    TRANSPORT_ERROR = "TransportError"

@dataclass
class RoundRecord:
    """!
    Everything that happened in one round
    """
    round_index: int
    action_kind: str
    action_text: str
    tool_name: str = ""
    action_description: str = ""
    observation_chunk_ids: list = field(default_factory=list)
    observation_text: str = ""
    belief_snapshot: str = ""
    belief_changed: bool = False
    gate_decision: Optional[dict] = None
    tokens_by_bucket: dict = field(default_factory=dict)
    parse_warnings: list = field(default_factory=list)
    memory_operations: list = field(default_factory=list)
    reorganized: bool = False
    notes_rewritten: bool = False
    transport_retries: int = 0

    def to_dict(self)->dict:
        """!
        @return dict - trace line form
        """
        return {"record": "round", "round": self.round_index, "action_kind": self.action_kind,
                "action_text": self.action_text, "tool_name": self.tool_name,
                "action": self.action_description,
                "observation_chunk_ids": list(self.observation_chunk_ids),
                "observation_text": self.observation_text,
                "belief_snapshot": self.belief_snapshot, "belief_changed": self.belief_changed,
                "gate_decision": self.gate_decision,
                "tokens_by_bucket": dict(sorted(self.tokens_by_bucket.items())),
                "parse_warnings": list(self.parse_warnings),
                "memory_operations": list(self.memory_operations),
                "reorganized": self.reorganized, "notes_rewritten": self.notes_rewritten,
                "transport_retries": self.transport_retries}

    @classmethod
    def from_dict(cls, document:dict):
        """!
        @brief Rebuild from a trace line

        @param document (dict): Parsed round line

        @return RoundRecord
        """
        return cls(round_index=document["round"], action_kind=document["action_kind"],
                   action_text=document.get("action_text", ""),
                   tool_name=document.get("tool_name", ""),
                   action_description=document.get("action", ""),
                   observation_chunk_ids=list(document.get("observation_chunk_ids", [])),
                   observation_text=document.get("observation_text", ""),
                   belief_snapshot=document.get("belief_snapshot", ""),
                   belief_changed=bool(document.get("belief_changed", False)),
                   gate_decision=document.get("gate_decision"),
                   tokens_by_bucket=dict(document.get("tokens_by_bucket", {})),
                   parse_warnings=list(document.get("parse_warnings", [])),
                   memory_operations=list(document.get("memory_operations", [])),
                   reorganized=bool(document.get("reorganized", False)),
                   notes_rewritten=bool(document.get("notes_rewritten", False)),
                   transport_retries=int(document.get("transport_retries", 0)))

    def retrieval_query(self)->Optional[str]:
        """!
        @return string query of a retrieval round, None for a finish round
        """
        if self.action_kind == "Search" or (self.action_kind == "ToolCall" and
                                            self.tool_name == "search"):
            return self.action_text
        return None

@dataclass
class EpisodeTrace:
    """!
    Complete record of one episode
    """
    task_id: str
    variant: str
    run_config: dict
    question: str
    gold_answer: Optional[str] = None
    answerable: bool = True
    group: Optional[str] = None
    rounds: list = field(default_factory=list)
    final_answer: str = ""
    stop_reason: Optional[StopReason] = None
    fire_round: Optional[int] = None
    total_tokens_by_bucket: dict = field(default_factory=dict)
    reorganizations: int = 0
    notes_rewrites: int = 0
    no_evidence_artifacts: int = 0
    error: Optional[str] = None
    started_at: str = NORMALIZED_TIMESTAMP
    scores: Optional[dict] = None
    objective_value: Optional[float] = None

    def total_tokens(self)->int:
        """!
        @return int - tokens over every bucket
        """
        return sum(self.total_tokens_by_bucket.values())

    def round_count(self)->int:
        """!
        @return int - number of recorded rounds
        """
        return len(self.rounds)

    def parse_warning_count(self)->int:
        """!
        @return int - parse warnings over every round
        """
        return sum(len(r.parse_warnings) for r in self.rounds)

    def header(self, normalize_timestamps:bool = False)->dict:
        """!
        @return dict - header line form
        """
        return {"record": "header", "version": TRACE_FORMAT_VERSION, "task_id": self.task_id,
                "variant": self.variant, "run_config": self.run_config,
                "question": self.question, "gold_answer": self.gold_answer,
                "answerable": self.answerable, "group": self.group,
                "started_at": NORMALIZED_TIMESTAMP if normalize_timestamps else self.started_at}

    def footer(self)->dict:
        """!
        @return dict - footer line form
        """
        return {"record": "footer", "final_answer": self.final_answer,
                "stop_reason": None if self.stop_reason is None else self.stop_reason.value,
                "fire_round": self.fire_round,
                "rounds": self.round_count(),
                "total_tokens_by_bucket": dict(sorted(self.total_tokens_by_bucket.items())),
                "total_tokens": self.total_tokens(), "reorganizations": self.reorganizations,
                "notes_rewrites": self.notes_rewrites,
                "no_evidence_artifacts": self.no_evidence_artifacts,
                "parse_warnings": self.parse_warning_count(), "error": self.error,
                "scores": self.scores, "objective_value": self.objective_value}

def _dump(document:dict)->str:
    return json.dumps(document, sort_keys=True, ensure_ascii=False)

def trace_lines(trace:EpisodeTrace, normalize_timestamps:bool = False)->list:
    """!
    @brief Serialized trace lines

    @param trace (EpisodeTrace): Trace to serialize
    @param normalize_timestamps (bool): Replace wall clock values with a fixed value

    @return list of string
    """
    lines = [_dump(trace.header(normalize_timestamps))]
    lines.extend(_dump(r.to_dict()) for r in trace.rounds)
    lines.append(_dump(trace.footer()))
    return lines

def write_trace(trace:EpisodeTrace, file_name:str, normalize_timestamps:bool = False):
    """!
    @brief Write a trace as JSON lines, creating parent directories

    @param trace (EpisodeTrace): Trace to write
    @param file_name (string): Output path
    @param normalize_timestamps (bool): Replace wall clock values with a fixed value
    """
    directory = os.path.dirname(file_name)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(file_name, "wt", encoding="utf-8") as trace_file:
        for line in trace_lines(trace, normalize_timestamps):
            trace_file.write(line)
            trace_file.write("\n")

def read_trace(file_name:str)->EpisodeTrace:
    """!
    @brief Read a trace written by write_trace

    @param file_name (string): Trace path

    @return EpisodeTrace
    """
    header = None
    footer = None
    rounds = []
    with open(file_name, "rt", encoding="utf-8") as trace_file:
        for line_number, line in enumerate(trace_file, start=1):
            if not line.strip():
                continue
            try:
                document = json.loads(line)
                kind = document["record"]
                if kind == "header":
                    header = document
                elif kind == "round":
                    rounds.append(RoundRecord.from_dict(document))
                elif kind == "footer":
                    footer = document
                else:
                    raise KeyError(kind)
            except (ValueError, KeyError, TypeError) as error:
                raise CorpusFormatError(file_name, line_number, f"bad trace record: {error}") \
                    from error
    if header is None or footer is None:
        raise CorpusFormatError(file_name, 0, "trace lacks a header or footer record")

    stop_reason = footer.get("stop_reason")
    return EpisodeTrace(task_id=header["task_id"], variant=header["variant"],
                        run_config=header.get("run_config", {}), question=header["question"],
                        gold_answer=header.get("gold_answer"),
                        answerable=header.get("answerable", True), group=header.get("group"),
                        rounds=rounds, final_answer=footer.get("final_answer", ""),
                        stop_reason=None if stop_reason is None else StopReason(stop_reason),
                        fire_round=footer.get("fire_round"),
                        total_tokens_by_bucket=dict(footer.get("total_tokens_by_bucket", {})),
                        reorganizations=footer.get("reorganizations", 0),
                        notes_rewrites=footer.get("notes_rewrites", 0),
                        no_evidence_artifacts=footer.get("no_evidence_artifacts", 0),
                        error=footer.get("error"),
                        started_at=header.get("started_at", NORMALIZED_TIMESTAMP),
                        scores=footer.get("scores"),
                        objective_value=footer.get("objective_value"))
