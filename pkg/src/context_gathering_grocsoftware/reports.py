"""@package context_gathering
@brief Experiment grid files, run summaries, offline gate sweeps and run comparisons

Everything here is deterministic: equal inputs give byte identical output
files.
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

import itertools
import json
import logging
import os
import random
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from context_gathering_grocsoftware.belief_state import CapacityConfig
from context_gathering_grocsoftware.episode_trace import StopReason
from context_gathering_grocsoftware.exhaustion_gate import GateConfig, parse_gate_name
from context_gathering_grocsoftware.exhaustion_gate import replay_gate
from context_gathering_grocsoftware.harness_adapters import HarnessKind
from context_gathering_grocsoftware.harness_errors import ConfigurationError
from context_gathering_grocsoftware.harness_errors import CorpusFormatError
from context_gathering_grocsoftware.harness_errors import InvalidArgumentError
from context_gathering_grocsoftware.metrics_stats import DEFAULT_ALPHA, apply_holm
from context_gathering_grocsoftware.metrics_stats import paired_t_test
from context_gathering_grocsoftware.orchestrator import DEFAULT_CONTEXT_TOKEN_LIMIT
from context_gathering_grocsoftware.orchestrator import MemoryCondition, make_run_config
from context_gathering_grocsoftware.extractor import DEFAULT_NOTES_CHAR_CAP

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
SUMMARY_TABLE_FILE = "summary.tsv"
SCORES_DIR = "scores"
TRACES_DIR = "traces"
SCORE_METRICS = ("token_f1", "exact_match", "rouge1_f", "judge_score", "success")

STATUS_COMPLETED = "completed"
STATUS_TRANSPORT_ERROR = "transport_error"
STATUS_FAILED = "failed"

def _lookup_enum(enum_type, text:str, what:str):
    for member in enum_type:
        if member.value.lower() == str(text).strip().lower():
            return member
    choices = ", ".join(m.value for m in enum_type)
    raise ConfigurationError(f"unknown {what} '{text}', expected one of {choices}")

def parse_harness(text:str)->HarnessKind:
    """!
    @return HarnessKind - matched case-insensitively
    """
    return _lookup_enum(HarnessKind, text, "harness")

def parse_condition(text:str)->MemoryCondition:
    """!
    @return MemoryCondition - matched case-insensitively
    """
    return _lookup_enum(MemoryCondition, text, "memory condition")

_VARIANT_KEYS = frozenset({"name", "harness", "memory_condition", "condition", "gate",
                           "max_rounds", "alpha", "k", "k_target", "k_trigger", "n_questions",
                           "budget_tokens", "context_token_limit", "notes_char_cap"})

def variant_from_document(document:dict, defaults:dict = None, objective_lambda:float = 0.0):
    """!
    @brief Build one RunConfig from a grid variant document

    @param document (dict): Variant keys
    @param defaults (dict): Keys shared by every variant, overridden by document
    @param objective_lambda (float): Token cost weight of the objective

    @return RunConfig
    """
    merged = dict(defaults or {})
    merged.update(document)
    unknown = set(merged) - _VARIANT_KEYS
    if unknown:
        raise ConfigurationError(f"unknown variant keys {sorted(unknown)}")
    if "harness" not in merged:
        raise ConfigurationError("variant lacks a harness")
    condition = merged.get("memory_condition", merged.get("condition"))
    if condition is None:
        raise ConfigurationError("variant lacks a memory_condition")
    gate = merged.get("gate")
    capacity = CapacityConfig(k_trigger=merged.get("k_trigger", 10),
                              k_target=merged.get("k_target", 6),
                              n_questions=merged.get("n_questions", 6))
    return make_run_config(parse_harness(merged["harness"]), parse_condition(condition),
                           name=merged.get("name"), max_rounds=merged.get("max_rounds"),
                           gate=None if gate in (None, "", "none") else parse_gate_name(gate),
                           alpha=merged.get("alpha"), k=merged.get("k"), capacity=capacity,
                           budget_tokens=merged.get("budget_tokens"),
                           context_token_limit=merged.get("context_token_limit",
                                                          DEFAULT_CONTEXT_TOKEN_LIMIT),
                           objective_lambda=objective_lambda,
                           notes_char_cap=merged.get("notes_char_cap", DEFAULT_NOTES_CHAR_CAP))

@dataclass
class ExperimentGrid:
    """!
    One experiment: tasks, index, variants and run settings
    """
    tasks_path: str
    corpus_index_path: str
    output_dir: str
    variants: list = field(default_factory=list)
    parallelism: int = 1
    seed: int = 0
    sample_size: Optional[int] = None
    model_id: str = "gpt-4o-mini"
    judge: bool = False
    judge_model_id: Optional[str] = None
    objective_lambda: float = 0.0
    normalize_timestamps: bool = False

    def validate(self):
        """!
        @brief Check the grid invariants; creates the output directory

        @return ExperimentGrid - self when valid
        """
        if not self.variants:
            raise ConfigurationError("grid defines no variants")
        names = [v.name for v in self.variants]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ConfigurationError(f"duplicate variant names {duplicates}")
        if self.parallelism < 1:
            raise ConfigurationError(f"parallelism must be at least 1, got {self.parallelism}")
        if self.sample_size is not None and self.sample_size < 1:
            raise ConfigurationError("sample_size must be positive")
        if self.objective_lambda < 0.0:
            raise ConfigurationError("lambda must not be negative")
        try:
            os.makedirs(self.output_dir, exist_ok=True)
        except OSError as error:
            raise ConfigurationError(f"output directory {self.output_dir} cannot be created: "
                                     f"{error}") from error
        if not os.access(self.output_dir, os.W_OK):
            raise ConfigurationError(f"output directory {self.output_dir} is not writable")
        return self

def _expand_grid(block:dict, defaults:dict, objective_lambda:float)->list:
    variants = []
    gates = block.get("gates", [None])
    for harness, condition, gate in itertools.product(block.get("harnesses", []),
                                                       block.get("conditions", []), gates):
        document = {"harness": harness, "memory_condition": condition, "gate": gate}
        try:
            variants.append(variant_from_document(document, defaults, objective_lambda))
        except ConfigurationError as error:
            logger.warning("grid combination %s/%s/%s skipped: %s", harness, condition, gate,
                           error)
    return variants

def load_grid(file_name:str)->ExperimentGrid:
    """!
    @brief Read and validate a grid file; relative paths resolve against its directory

    @param file_name (string): Grid JSON path

    @return ExperimentGrid
    """
    try:
        with open(file_name, "rt", encoding="utf-8") as grid_file:
            document = json.load(grid_file)
    except ValueError as error:
        raise ConfigurationError(f"{file_name}: grid file is not JSON: {error}") from error
    if not isinstance(document, dict):
        raise ConfigurationError(f"{file_name}: grid file must hold a JSON object")
    base_dir = os.path.dirname(os.path.abspath(file_name))

    def _path(key:str)->str:
        if key not in document:
            raise ConfigurationError(f"{file_name}: missing key '{key}'")
        value = document[key]
        return value if os.path.isabs(value) else os.path.join(base_dir, value)

    objective_lambda = float(document.get("lambda", 0.0))
    defaults = document.get("defaults", {})
    variants = [variant_from_document(v, defaults, objective_lambda)
                for v in document.get("variants", [])]
    if "grid" in document:
        variants.extend(_expand_grid(document["grid"], defaults, objective_lambda))

    return ExperimentGrid(tasks_path=_path("tasks"), corpus_index_path=_path("corpus_index"),
                          output_dir=_path("output_dir"), variants=variants,
                          parallelism=int(document.get("parallelism", 1)),
                          seed=int(document.get("seed", 0)),
                          sample_size=document.get("sample_size"),
                          model_id=document.get("model_id", "gpt-4o-mini"),
                          judge=bool(document.get("judge", False)),
                          judge_model_id=document.get("judge_model_id"),
                          objective_lambda=objective_lambda,
                          normalize_timestamps=bool(document.get("normalize_timestamps",
                                                                 False))).validate()

def select_tasks(tasks:list, sample_size:Optional[int], seed:int)->list:
    """!
    @brief Seeded subsample that keeps the file order

    @param tasks (list of Task): All tasks
    @param sample_size (int): Tasks to keep, None for all
    @param seed (int): Sampling seed

    @return list of Task
    """
    if sample_size is None or sample_size >= len(tasks):
        return list(tasks)
    chosen = set(random.Random(seed).sample(range(len(tasks)), sample_size))
    return [task for position, task in enumerate(tasks) if position in chosen]

@dataclass
class EpisodeOutcome:
    """!
    Terminal state of one launched episode
    """
    variant: str
    task_id: str
    status: str
    trace: object = None
    score: object = None
    error: Optional[str] = None

    def to_dict(self)->dict:
        """!
        @return dict - summary row
        """
        document = {"variant": self.variant, "task_id": self.task_id, "status": self.status,
                    "error": self.error, "stop_reason": None, "total_tokens": None,
                    "rounds": None}
        if self.trace is not None:
            document["stop_reason"] = (None if self.trace.stop_reason is None
                                       else self.trace.stop_reason.value)
            document["total_tokens"] = self.trace.total_tokens()
            document["rounds"] = self.trace.round_count()
        return document

def _mean(values:list)->Optional[float]:
    return float(np.mean(values)) if values else None

def _twin_key(summary:dict)->tuple:
    return tuple(sorted((k, v) for k, v in summary.items() if k not in ("name", "gate")))

def summarize_variant(config, outcomes:list)->dict:
    """!
    @brief Aggregate row for one variant

    @param config (RunConfig): Variant
    @param outcomes (list of EpisodeOutcome): Its episodes

    @return dict
    """
    scored = [o for o in outcomes if o.trace is not None and o.score is not None]
    traces = [o.trace for o in scored]
    buckets = {}
    for trace in traces:
        for name, value in trace.total_tokens_by_bucket.items():
            buckets[name] = buckets.get(name, 0) + value
    stop_reasons = {reason.value: sum(1 for t in traces if t.stop_reason == reason)
                    for reason in StopReason}
    fired = [t.fire_round for t in traces if t.fire_round is not None]
    reorganized = [t.reorganizations for t in traces if t.reorganizations > 0]
    judged = [o.score.judge_score for o in scored if o.score.judge_score is not None]
    groups = {}
    for outcome in scored:
        if outcome.trace.group is not None:
            groups.setdefault(outcome.trace.group, []).append(outcome.score.success())

    return {"variant": config.name, "harness": config.harness.value,
            "memory_condition": config.memory_condition.value, "gate": config.gate_name(),
            "episodes": len(outcomes), "scored": len(scored),
            "failed": sum(1 for o in outcomes if o.status != STATUS_COMPLETED),
            "mean_token_f1": _mean([o.score.token_f1 for o in scored]),
            "mean_exact_match": _mean([o.score.exact_match for o in scored]),
            "mean_rouge1_f": _mean([o.score.rouge1_f for o in scored]),
            "mean_judge_score": _mean(judged),
            "mean_success": _mean([o.score.success() for o in scored]),
            "mean_objective": _mean([t.objective_value for t in traces
                                     if t.objective_value is not None]),
            "abstention_rate": _mean([float(o.score.abstained) for o in scored]),
            "tokens_by_bucket": dict(sorted(buckets.items())),
            "total_tokens": sum(buckets.values()),
            "mean_tokens": _mean([t.total_tokens() for t in traces]),
            "mean_rounds": _mean([t.round_count() for t in traces]),
            "stop_reasons": stop_reasons,
            "gate_fire_rate": (len(fired) / len(traces)) if traces else None,
            "mean_fire_round": _mean(fired),
            "reorganized_share": (len(reorganized) / len(traces)) if traces else None,
            "mean_reorganizations": _mean(reorganized),
            "no_evidence_share": _mean([float(t.no_evidence_artifacts > 0) for t in traces]),
            "group_means": {g: _mean(v) for g, v in sorted(groups.items())},
            "twin": None, "savings_vs_twin": None, "gate_effect_std": None}

def attach_twin_savings(rows:list, configs:list, outcomes_by_variant:dict):
    """!
    @brief Fill savings and gate effect spread for gated variants with a no-gate twin

    savings = 1 - gated tokens / ungated tokens over tasks scored in both.

    @param rows (list of dict): summarize_variant rows, updated in place
    @param configs (list of RunConfig): Variants in row order
    @param outcomes_by_variant (dict): variant name to list of EpisodeOutcome
    """
    ungated = {_twin_key(c.summary()): c for c in configs if c.gate is None}
    for row, config in zip(rows, configs):
        if config.gate is None:
            continue
        twin = ungated.get(_twin_key(config.summary()))
        if twin is None:
            continue

        def _scored(name):
            return {o.task_id: o for o in outcomes_by_variant[name]
                    if o.trace is not None and o.score is not None}

        gated = _scored(config.name)
        baseline = _scored(twin.name)
        common = sorted(set(gated) & set(baseline))
        row["twin"] = twin.name
        if not common:
            continue
        gated_tokens = sum(gated[t].trace.total_tokens() for t in common)
        ungated_tokens = sum(baseline[t].trace.total_tokens() for t in common)
        if ungated_tokens > 0:
            row["savings_vs_twin"] = 1.0 - gated_tokens / ungated_tokens
        effects = [gated[t].score.success() - baseline[t].score.success() for t in common]
        row["gate_effect_std"] = float(np.std(effects, ddof=1)) if len(effects) > 1 else 0.0

def _format_cell(value)->str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)

def write_tsv(file_name:str, columns:list, rows:list):
    """!
    @brief Tab separated table with a header line

    @param file_name (string): Output path
    @param columns (list of string): Column names, also the row dict keys
    @param rows (list of dict): Rows
    """
    directory = os.path.dirname(file_name)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(file_name, "wt", encoding="utf-8") as table_file:
        table_file.write("\t".join(columns) + "\n")
        for row in rows:
            table_file.write("\t".join(_format_cell(row.get(c)) for c in columns) + "\n")

def write_json(file_name:str, document):
    """!
    @brief Indented JSON with sorted keys

    @param file_name (string): Output path
    @param document: JSON serializable value
    """
    with open(file_name, "wt", encoding="utf-8") as json_file:
        json_file.write(json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False))
        json_file.write("\n")

SCORE_COLUMNS = ["task_id", "token_f1", "exact_match", "rouge1_f", "judge_score", "abstained",
                 "success", "total_tokens", "rounds", "stop_reason", "objective", "group"]
SUMMARY_COLUMNS = ["variant", "harness", "memory_condition", "gate", "episodes", "failed",
                   "mean_token_f1", "mean_exact_match", "mean_rouge1_f", "mean_judge_score",
                   "mean_success", "mean_objective", "total_tokens", "mean_tokens",
                   "mean_rounds", "gate_fire_rate", "mean_fire_round", "twin",
                   "savings_vs_twin", "gate_effect_std", "reorganized_share",
                   "no_evidence_share"]

def score_rows(outcomes:list)->list:
    """!
    @brief Per task score rows for a variant, sorted by task id

    @param outcomes (list of EpisodeOutcome): Episodes of one variant

    @return list of dict
    """
    rows = []
    for outcome in sorted(outcomes, key=lambda o: o.task_id):
        if outcome.trace is None or outcome.score is None:
            continue
        row = {"task_id": outcome.task_id}
        row.update(outcome.score.to_dict())
        row["success"] = outcome.score.success()
        row["total_tokens"] = outcome.trace.total_tokens()
        row["rounds"] = outcome.trace.round_count()
        row["stop_reason"] = outcome.trace.stop_reason.value
        row["objective"] = outcome.trace.objective_value
        row["group"] = outcome.trace.group
        rows.append(row)
    return rows

def write_run_outputs(output_dir:str, configs:list, outcomes_by_variant:dict)->dict:
    """!
    @brief Score tables and run summary files

    @param output_dir (string): Run directory
    @param configs (list of RunConfig): Variants in grid order
    @param outcomes_by_variant (dict): variant name to list of EpisodeOutcome

    @return dict - the summary document
    """
    rows = [summarize_variant(c, outcomes_by_variant[c.name]) for c in configs]
    attach_twin_savings(rows, configs, outcomes_by_variant)
    for config in configs:
        write_tsv(os.path.join(output_dir, SCORES_DIR, f"{config.name}.tsv"), SCORE_COLUMNS,
                  score_rows(outcomes_by_variant[config.name]))
    episodes = sorted((o.to_dict() for outcomes in outcomes_by_variant.values()
                       for o in outcomes), key=lambda d: (d["variant"], d["task_id"]))
    summary = {"variants": rows, "episodes": episodes,
               "configs": {c.name: c.summary() for c in configs}}
    write_json(os.path.join(output_dir, SUMMARY_FILE), summary)
    write_tsv(os.path.join(output_dir, SUMMARY_TABLE_FILE), SUMMARY_COLUMNS, rows)
    return summary

def load_replay_rounds(file_name:str)->Optional[list]:
    """!
    @brief Gate replay input from a trace file

    @param file_name (string): Trace path

    @return list of (query, chunk ids, belief_changed, round) for retrieval rounds,
            None when the trace lacks signal fields
    """
    rounds = []
    with open(file_name, "rt", encoding="utf-8") as trace_file:
        for line in trace_file:
            if not line.strip():
                continue
            try:
                document = json.loads(line)
            except ValueError:
                return None
            if document.get("record") != "round":
                continue
            if document.get("action_kind") == "Finish":
                continue
            if not {"action_text", "observation_chunk_ids", "round"} <= set(document):
                return None
            rounds.append((document["action_text"], list(document["observation_chunk_ids"]),
                           bool(document.get("belief_changed", False)), int(document["round"])))
    return rounds

def _read_header(file_name:str)->dict:
    with open(file_name, "rt", encoding="utf-8") as trace_file:
        first = trace_file.readline()
    try:
        document = json.loads(first)
    except ValueError as error:
        raise CorpusFormatError(file_name, 1, "trace header is not JSON") from error
    return document

def sweep_gate(traces_dir:str, configs:list)->dict:
    """!
    @brief Replay programmatic gate configurations over recorded traces, LLM free

    A cell is one recorded variant.  The distance of two configurations is the
    mean absolute difference of their per cell fire rates in percentage points.

    @param traces_dir (string): Directory searched recursively for *.jsonl traces
    @param configs (list of GateConfig): Configurations to replay

    @return dict with "configs" rows and "distances" rows
    """
    for config in configs:
        if not isinstance(config, GateConfig):
            raise ConfigurationError("only programmatic gates can be replayed offline")
        config.validate()

    replays = []
    for root, _, files in sorted(os.walk(traces_dir)):
        for name in sorted(files):
            if not name.endswith(".jsonl"):
                continue
            path = os.path.join(root, name)
            rounds = load_replay_rounds(path)
            if rounds is None:
                logger.warning("trace %s lacks gate signal fields, skipped", path)
                continue
            header = _read_header(path)
            replays.append((header.get("variant", ""), header.get("task_id", name), rounds))

    fire_rounds = {}
    for config in configs:
        fire_rounds[config.compact_name()] = [(variant, replay_gate(config, rounds))
                                              for variant, _, rounds in replays]

    rows = []
    cell_rates = {}
    for config in configs:
        name = config.compact_name()
        results = fire_rounds[name]
        fired = [r for _, r in results if r is not None]
        cells = {}
        for variant, fire_round in results:
            cells.setdefault(variant, []).append(fire_round is not None)
        cell_rates[name] = {v: float(np.mean(flags)) for v, flags in cells.items()}
        rows.append({"config": name, "traces": len(results), "fires": len(fired),
                     "fire_rate": (len(fired) / len(results)) if results else None,
                     "mean_fire_round": _mean(fired),
                     "median_fire_round": float(np.median(fired)) if fired else None})

    distances = []
    names = [c.compact_name() for c in configs]
    for first, second in itertools.combinations(names, 2):
        cells = sorted(set(cell_rates[first]) | set(cell_rates[second]))
        gaps = [abs(cell_rates[first].get(c, 0.0) - cell_rates[second].get(c, 0.0)) * 100.0
                for c in cells]
        distances.append({"config_a": first, "config_b": second,
                          "mean_abs_diff_pp": _mean(gaps) if gaps else 0.0,
                          "identical_cells": sum(1 for g in gaps if g == 0.0),
                          "cells": len(gaps)})
    return {"traces": len(replays), "configs": rows, "distances": distances}

SWEEP_COLUMNS = ["config", "traces", "fires", "fire_rate", "mean_fire_round",
                 "median_fire_round"]
DISTANCE_COLUMNS = ["config_a", "config_b", "mean_abs_diff_pp", "identical_cells", "cells"]

def read_score_table(file_name:str)->dict:
    """!
    @brief Per task metric values from a score table

    @param file_name (string): scores/<variant>.tsv path

    @return dict task_id to dict of metric to float or None
    """
    scores = {}
    with open(file_name, "rt", encoding="utf-8") as table_file:
        columns = table_file.readline().rstrip("\n").split("\t")
        for line_number, line in enumerate(table_file, start=2):
            if not line.strip():
                continue
            cells = dict(zip(columns, line.rstrip("\n").split("\t")))
            if "task_id" not in cells:
                raise CorpusFormatError(file_name, line_number, "score row lacks a task id")
            row = {m: float(cells[m]) if cells.get(m) else None
                   for m in SCORE_METRICS + ("total_tokens",) if m in cells}
            scores[cells["task_id"]] = row
    return scores

def collect_entries(run_dirs:list)->list:
    """!
    @brief (label, score table) for every variant of every run directory

    @param run_dirs (list of string): Run output directories

    @return list of (string, dict) in argument then file name order
    """
    entries = []
    for run_dir in run_dirs:
        scores_dir = os.path.join(run_dir, SCORES_DIR)
        if not os.path.isdir(scores_dir):
            raise ConfigurationError(f"{run_dir} holds no {SCORES_DIR} directory")
        label_prefix = os.path.basename(os.path.normpath(run_dir))
        for name in sorted(os.listdir(scores_dir)):
            if name.endswith(".tsv"):
                entries.append((f"{label_prefix}/{name[:-4]}",
                                read_score_table(os.path.join(scores_dir, name))))
    return entries

def compare_entries(entries:list, metric:str = "success", baseline:str = None,
                    alpha:float = DEFAULT_ALPHA)->list:
    """!
    @brief Paired comparisons with Holm adjustment over the whole family

    @param entries (list of (label, scores)): From collect_entries
    @param metric (string): Score column to compare
    @param baseline (string): Label compared against every other entry, or None for all pairs
    @param alpha (float): Family-wise error rate

    @return list of dict rows, delta in percentage points (second minus first)
    """
    if metric not in SCORE_METRICS:
        raise ConfigurationError(f"unknown metric '{metric}'")
    if len(entries) < 2:
        raise InvalidArgumentError("a comparison needs at least two runs or variants")
    reference_label, reference = entries[0]
    for label, scores in entries[1:]:
        if set(scores) != set(reference):
            missing = sorted(set(reference) - set(scores))
            extra = sorted(set(scores) - set(reference))
            raise InvalidArgumentError(f"task sets differ between {reference_label} and {label}: "
                                       f"missing {missing}, extra {extra}")

    labels = [label for label, _ in entries]
    if baseline is not None:
        if baseline not in labels:
            raise ConfigurationError(f"baseline '{baseline}' is not among {labels}")
        pairs = [(baseline, label) for label in labels if label != baseline]
    else:
        pairs = list(itertools.combinations(labels, 2))

    lookup = dict(entries)
    task_ids = sorted(reference)
    rows = []
    tests = []
    for first, second in pairs:
        a_values = [lookup[first][t].get(metric) for t in task_ids]
        b_values = [lookup[second][t].get(metric) for t in task_ids]
        if any(v is None for v in a_values + b_values):
            raise InvalidArgumentError(f"metric {metric} is missing for some tasks of "
                                       f"{first} or {second}")
        tests.append(paired_t_test(b_values, a_values, alpha))
        rows.append({"entry_a": first, "entry_b": second, "n": len(task_ids),
                     "mean_a": float(np.mean(a_values)), "mean_b": float(np.mean(b_values))})
    for row, result in zip(rows, apply_holm(tests, alpha)):
        row.update({"delta_pp": result.mean_diff * 100.0, "t": result.t_statistic,
                    "p": result.p_value, "p_holm": result.adjusted_p,
                    "significant": result.significant})
    return rows

REPORT_COLUMNS = ["entry_a", "entry_b", "n", "mean_a", "mean_b", "delta_pp", "t", "p",
                  "p_holm", "significant"]
PARETO_COLUMNS = ["entry", "n", "quality", "mean_tokens"]

def pareto_rows(entries:list, metric:str = "success")->list:
    """!
    @brief (quality, tokens) point per entry for external frontier plots

    @param entries (list of (label, scores)): From collect_entries
    @param metric (string): Quality column

    @return list of dict
    """
    rows = []
    for label, scores in entries:
        quality = [s[metric] for s in scores.values() if s.get(metric) is not None]
        tokens = [s["total_tokens"] for s in scores.values() if s.get("total_tokens") is not None]
        rows.append({"entry": label, "n": len(scores), "quality": _mean(quality),
                     "mean_tokens": _mean(tokens)})
    return rows

## Discrete and smooth configurations replayed when a sweep names none
DEFAULT_SWEEP_CONFIGS = ("f_j0.5_u0.3_p2", "f_j0.6_u0.3_p2", "f_j0.7_u0.3_p2", "f_j0.6_u0.2_p2",
                         "f_j0.6_u0.4_p2", "f_j0.6_u0.3_p1", "f_j0.6_u0.3_p3",
                         "s_b0.3_j0.5_u0.3_p2", "s_b0.3_j0.6_u0.3_p2", "s_b0.3_j0.7_u0.3_p2",
                         "s_b0.5_j0.5_u0.3_p2", "s_b0.5_j0.6_u0.3_p2", "s_b0.5_j0.7_u0.3_p2",
                         "s_b0.7_j0.5_u0.3_p2", "s_b0.7_j0.6_u0.3_p2", "s_b0.7_j0.7_u0.3_p2")
