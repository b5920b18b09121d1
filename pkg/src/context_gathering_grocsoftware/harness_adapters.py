"""@package context_gathering
@brief Agent harness adapters: IRCoT, ReAct, Iter-RetGen and a MemGPT style tool protocol

Each adapter turns one agent LLM reply into an action.  The orchestrator
owns everything else (retrieval, memory, gate, stopping).
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

import ast
import logging
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

from context_gathering_grocsoftware.llm_client import CostBucket, LlmClient
from context_gathering_grocsoftware import prompt_templates

logger = logging.getLogger(__name__)

## Answer used for explicit abstention
ABSTENTION_MARKER = "UNANSWERABLE"
## Inner agent calls allowed for memory-only MemGPT replies
MEMGPT_INNER_STEPS = 3

class HarnessKind(Enum):
    """!
    Agent interaction protocol
    """
    IRCOT = "IRCoT"
    REACT = "ReAct"
    ITER_RETGEN = "IterRetGen"
    MEMGPT_STYLE = "MemGptStyle"

class ActionKind(Enum):
    """!
    Kind of agent action
    """
    SEARCH = "Search"
    FINISH = "Finish"
    TOOL_CALL = "ToolCall"

@dataclass(frozen=True)
class AgentAction:
    """!
    One agent action.  text is the query for Search, the answer for Finish
    and the first argument for ToolCall.
    """
    kind: ActionKind
    text: str
    tool_name: str = ""
    tool_args: Tuple[str, ...] = ()

    @classmethod
    def search(cls, query:str):
        """!
        @return AgentAction - Search(query)
        """
        return cls(ActionKind.SEARCH, query)

    @classmethod
    def finish(cls, answer:str):
        """!
        @return AgentAction - Finish(answer)
        """
        return cls(ActionKind.FINISH, answer)

    def retrieval_query(self)->str:
        """!
        @brief Query to run against the corpus, None when the action retrieves nothing

        @return string or None
        """
        if self.kind == ActionKind.SEARCH:
            return self.text
        if self.kind == ActionKind.TOOL_CALL and self.tool_name == "search":
            return self.text
        return None

    def describe(self)->str:
        """!
        @brief Short text form used in trajectories and traces

        @return string
        """
        if self.kind == ActionKind.TOOL_CALL:
            arguments = ", ".join(repr(a) for a in self.tool_args)
            return f"{self.tool_name}({arguments})"
        return f"{self.kind.value}[{self.text}]"

@dataclass(frozen=True)
class StepResult:
    """!
    Parsed action plus what happened while producing it
    """
    action: AgentAction
    parse_warnings: Tuple[str, ...] = ()
    memory_operations: Tuple[str, ...] = ()
    candidate_answer: str = ""
    agent_reply: str = ""

class CoreMemory():
    """!
    Agent managed memory block of the MemGPT style harness
    """
    def __init__(self):
        ## Memory lines in insertion order
        self.lines = []

    def clear(self):
        """!
        @brief Drop every line
        """
        self.lines = []

    def append(self, text:str):
        """!
        @brief core_memory_append

        @param text (string): Line to add
        """
        if text.strip():
            self.lines.append(text.strip())

    def replace(self, old:str, new:str)->bool:
        """!
        @brief core_memory_replace on the first line containing old

        @param old (string): Text to find
        @param new (string): Replacement text

        @return bool - False when old was not found
        """
        for position, line in enumerate(self.lines):
            if old and old in line:
                self.lines[position] = line.replace(old, new, 1)
                return True
        return False

    def render(self)->str:
        """!
        @return string - memory lines, "(empty)" when there are none
        """
        if not self.lines:
            return "(empty)"
        return "\n".join(f"- {line}" for line in self.lines)

_ANSWER_REGX = re.compile(r"so the answer is\s*:?\s*(.+)", re.IGNORECASE)

def extract_answer(text:str)->str:
    """!
    @brief Answer from a "So the answer is X." sentence

    @param text (string): Generation

    @return string or None when the pattern is absent
    """
    match = _ANSWER_REGX.search(text or "")
    if match is None:
        return None
    answer = match.group(1).strip().splitlines()[0].strip()
    return answer.rstrip(".").strip().strip("\"'").strip()

class HarnessAdapter(ABC):
    """!
    Reply parsing for one harness
    """
    kind = None
    template_id = ""
    default_max_rounds = 10
    default_alpha = 0.5
    format_reminder = ""

    @abstractmethod
    def parse(self, reply:str):
        """!
        @brief Action encoded in a reply

        @param reply (string): Raw agent reply

        @return AgentAction or None when the reply is unparseable
        """

    def step(self, llm:LlmClient, prompt:str, round_index:int, question:str,
             core_memory:CoreMemory = None)->StepResult:
        """!
        @brief Call the agent, reprompting once on an unparseable reply

        @param llm (LlmClient): Agent client
        @param prompt (string): Full agent prompt for this round
        @param round_index (int): Round number
        @param question (string): Task question
        @param core_memory (CoreMemory): MemGPT memory block, unused elsewhere

        @return StepResult
        """
        del round_index, question, core_memory
        reply = llm.ask(prompt, CostBucket.AGENT).content
        action = self.parse(reply)
        if action is not None:
            return StepResult(action=action, agent_reply=reply)

        logger.info("%s reply unparseable, reprompting", self.kind.value)
        retry_reply = llm.ask(prompt + "\n\n" + self.format_reminder, CostBucket.AGENT).content
        action = self.parse(retry_reply)
        if action is not None:
            return StepResult(action=action, agent_reply=retry_reply,
                              parse_warnings=("agent reply unparseable, reprompted",))
        warning = "agent reply unparseable after reprompt, raw text used as answer"
        logger.info(warning)
        return StepResult(action=AgentAction.finish(retry_reply.strip()),
                          parse_warnings=(warning,), agent_reply=retry_reply)

class IrcotAdapter(HarnessAdapter):
    """!
    One reasoning sentence per round; the sentence is the next query
    """
    kind = HarnessKind.IRCOT
    template_id = prompt_templates.HARNESS_IRCOT
    default_max_rounds = 10
    default_alpha = 0.9
    format_reminder = ("Reply with exactly one sentence of reasoning, or finish with "
                       "\"So the answer is <answer>.\"")

    def parse(self, reply:str):
        answer = extract_answer(reply)
        if answer is not None:
            return AgentAction.finish(answer)
        text = " ".join((reply or "").split())
        if not text:
            return None
        sentence = re.split(r"(?<=[.!?])\s", text, maxsplit=1)[0]
        return AgentAction.search(sentence)

class ReactAdapter(HarnessAdapter):
    """!
    Thought / Action blocks with Search[...] and Finish[...]
    """
    kind = HarnessKind.REACT
    template_id = prompt_templates.HARNESS_REACT
    default_max_rounds = 7
    format_reminder = ("Your reply must contain a line \"Action: Search[<query>]\" or "
                       "\"Action: Finish[<answer>]\".")
    ## Argument runs to the last closing bracket on the Action line
    _ACTION_REGX = re.compile(r"Action\s*:\s*(Search|Finish)\s*\[(.*)\]", re.IGNORECASE)

    def parse(self, reply:str):
        match = self._ACTION_REGX.search(reply or "")
        if match is None:
            return None
        verb = match.group(1).lower()
        argument = " ".join(match.group(2).split())
        if verb == "finish":
            return AgentAction.finish(argument)
        if not argument:
            return None
        return AgentAction.search(argument)

class IterRetGenAdapter(HarnessAdapter):
    """!
    Fixed rounds: the first query is the question, later queries are the previous generation
    """
    kind = HarnessKind.ITER_RETGEN
    template_id = prompt_templates.HARNESS_ITER_RETGEN
    default_max_rounds = 4
    format_reminder = "Write a short explanation that ends with \"So the answer is <answer>.\""

    def parse(self, reply:str):
        text = (reply or "").strip()
        if not text:
            return None
        return AgentAction.search(text)

    def step(self, llm:LlmClient, prompt:str, round_index:int, question:str,
             core_memory:CoreMemory = None)->StepResult:
        if round_index == 1:
            return StepResult(action=AgentAction.search(question))
        reply = llm.ask(prompt, CostBucket.AGENT).content
        warnings = ()
        if not reply.strip():
            reply = llm.ask(prompt + "\n\n" + self.format_reminder, CostBucket.AGENT).content
            warnings = ("empty generation, reprompted",)
        if not reply.strip():
            warnings = ("empty generation after reprompt, question reused as query",)
            logger.info(warnings[0])
            return StepResult(action=AgentAction.search(question), parse_warnings=warnings)
        candidate = extract_answer(reply)
        return StepResult(action=AgentAction.search(reply.strip()), parse_warnings=warnings,
                          candidate_answer=candidate if candidate is not None else reply.strip(),
                          agent_reply=reply)

    def final_generation(self, llm:LlmClient, prompt:str)->str:
        """!
        @brief Answer from one last generation over the final context

        @param llm (LlmClient): Agent client
        @param prompt (string): Agent prompt built from the last observation

        @return string
        """
        reply = llm.ask(prompt, CostBucket.AGENT).content
        answer = extract_answer(reply)
        return answer if answer is not None else reply.strip()

class MemGptAdapter(HarnessAdapter):
    """!
    Text tool protocol: search, core_memory_append, core_memory_replace, finish
    """
    kind = HarnessKind.MEMGPT_STYLE
    template_id = prompt_templates.HARNESS_MEMGPT
    default_max_rounds = 12
    format_reminder = ("Reply with tool calls only, one per line, for example "
                       "search(\"query\") or finish(\"answer\").")
    _CALL_REGX = re.compile(r"\b(search|core_memory_append|core_memory_replace|finish)\s*"
                            r"\((.*)\)\s*$", re.IGNORECASE)

    @classmethod
    def parse_calls(cls, reply:str)->tuple:
        """!
        @brief Tool calls in reply order

        @param reply (string): Raw agent reply

        @return (list of (name, args tuple), list of warnings)
        """
        calls = []
        warnings = []
        for line in (reply or "").splitlines():
            match = cls._CALL_REGX.search(line.strip())
            if match is None:
                continue
            name = match.group(1).lower()
            try:
                arguments = ast.literal_eval(f"({match.group(2)},)")
                arguments = tuple(str(a) for a in arguments)
            except (ValueError, SyntaxError):
                warnings.append(f"malformed arguments in {name} call")
                continue
            expected = 2 if name == "core_memory_replace" else 1
            if len(arguments) != expected:
                warnings.append(f"{name} expects {expected} argument(s), got {len(arguments)}")
                continue
            calls.append((name, arguments))
        return calls, warnings

    def parse(self, reply:str):
        calls, _ = self.parse_calls(reply)
        for name, arguments in calls:
            if name == "finish":
                return AgentAction.finish(arguments[0])
            if name == "search" and arguments[0].strip():
                return AgentAction(ActionKind.TOOL_CALL, arguments[0].strip(), "search", arguments)
        return None

    def _apply_memory(self, calls:list, core_memory:CoreMemory, operations:list,
                      warnings:list):
        for name, arguments in calls:
            if name in ("search", "finish"):
                break
            if name == "core_memory_append":
                core_memory.append(arguments[0])
                operations.append(f"core_memory_append({arguments[0]!r})")
            elif core_memory.replace(arguments[0], arguments[1]):
                operations.append(f"core_memory_replace({arguments[0]!r}, {arguments[1]!r})")
            else:
                warnings.append(f"core_memory_replace target not found: {arguments[0]!r}")

    def step(self, llm:LlmClient, prompt:str, round_index:int, question:str,
             core_memory:CoreMemory = None)->StepResult:
        if core_memory is None:
            core_memory = CoreMemory()
        operations = []
        warnings = []
        conversation = prompt
        reprompted = False
        reply = ""
        for _ in range(MEMGPT_INNER_STEPS):
            reply = llm.ask(conversation, CostBucket.AGENT).content
            calls, call_warnings = self.parse_calls(reply)
            warnings.extend(call_warnings)
            self._apply_memory(calls, core_memory, operations, warnings)
            action = self.parse(reply)
            if action is not None:
                return StepResult(action=action, parse_warnings=tuple(warnings),
                                  memory_operations=tuple(operations), agent_reply=reply)
            if calls:
                conversation = (f"{prompt}\n\nYour previous reply:\n{reply}\n\nCore memory "
                                f"is now:\n{core_memory.render()}\n\nContinue with a search or "
                                "finish call.")
            elif not reprompted:
                reprompted = True
                warnings.append("agent reply unparseable, reprompted")
                conversation = prompt + "\n\n" + self.format_reminder
            else:
                break
        warning = "no search or finish call, raw text used as answer"
        logger.info(warning)
        warnings.append(warning)
        return StepResult(action=AgentAction.finish(reply.strip()), parse_warnings=tuple(warnings),
                          memory_operations=tuple(operations), agent_reply=reply)

_ADAPTERS = {HarnessKind.IRCOT: IrcotAdapter, HarnessKind.REACT: ReactAdapter,
             HarnessKind.ITER_RETGEN: IterRetGenAdapter, HarnessKind.MEMGPT_STYLE: MemGptAdapter}

def make_adapter(harness:HarnessKind)->HarnessAdapter:
    """!
    @brief Adapter instance for a harness

    @param harness (HarnessKind): Harness

    @return HarnessAdapter
    """
    return _ADAPTERS[harness]()

def harness_step(harness:HarnessKind, context:str, llm:LlmClient, round_index:int = 2,
                 question:str = "", core_memory:CoreMemory = None)->AgentAction:
    """!
    @brief Produce the next agent action for a harness

    @param harness (HarnessKind): Harness
    @param context (string): Full agent prompt
    @param llm (LlmClient): Agent client
    @param round_index (int): Round number, Iter-RetGen skips the LLM in round 1
    @param question (string): Task question
    @param core_memory (CoreMemory): MemGPT memory block

    @return AgentAction
    """
    return make_adapter(harness).step(llm, context, round_index, question, core_memory).action
