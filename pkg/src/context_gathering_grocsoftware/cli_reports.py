"""@package context_gathering
@brief Command line entry point: ingest, run, sweep-gate and report

Exit codes: 0 success, 1 when some episodes failed, 2 on configuration errors.
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

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed

from tqdm import tqdm

from context_gathering_grocsoftware import reports
from context_gathering_grocsoftware.episode_trace import StopReason, write_trace
from context_gathering_grocsoftware.exhaustion_gate import parse_gate_name
from context_gathering_grocsoftware.harness_adapters import ABSTENTION_MARKER
from context_gathering_grocsoftware.harness_errors import ConfigurationError
from context_gathering_grocsoftware.harness_errors import CorpusFormatError, HarnessError
from context_gathering_grocsoftware.harness_errors import InvalidArgumentError
from context_gathering_grocsoftware.harness_errors import LlmTransportError
from context_gathering_grocsoftware.harness_logging import configure_logging
from context_gathering_grocsoftware.llm_client import DEFAULT_API_KEY_ENV, BackendSettings
from context_gathering_grocsoftware.llm_client import LlmClient, OpenAiChatBackend
from context_gathering_grocsoftware.llm_client import ScriptedBackend, TokenLedger
from context_gathering_grocsoftware.llm_client import load_fixture_file, make_embedder
from context_gathering_grocsoftware.llm_client import select_fixtures
from context_gathering_grocsoftware.metrics_stats import cgdp_objective, rubric_judge
from context_gathering_grocsoftware.metrics_stats import score_lexical
from context_gathering_grocsoftware.orchestrator import read_tasks_jsonl, run_episode
from context_gathering_grocsoftware.retriever import RetrievalConfig, Retriever
from context_gathering_grocsoftware.retriever import ingest_corpus, load_index
from context_gathering_grocsoftware.retriever import read_corpus_jsonl, save_index

logger = logging.getLogger(__name__)

EXIT_SUCCESS = 0
EXIT_PARTIAL_FAILURE = 1
EXIT_CONFIGURATION = 2

def _error(message:str):
    print(f"ERROR: {message}", file=sys.stderr)

def _backend_settings(args)->BackendSettings:
    fixture_sets = {}
    for file_name in getattr(args, "fixtures", None) or []:
        fixture_sets.update(load_fixture_file(file_name))
    return BackendSettings(api_key_env=args.api_key_env,
                           base_url=args.base_url or os.environ.get("OPENAI_BASE_URL"),
                           fixture_sets=fixture_sets,
                           strict_fixtures=getattr(args, "strict_fixtures", False))

def cmd_ingest(args)->int:
    """!
    @brief Chunk a corpus file and write its index

    @param args (argparse.Namespace): corpus, out, chunk_size, chunk_overlap, bm25_k1,
                                      bm25_b, embedder

    @return int - exit code
    """
    documents = read_corpus_jsonl(args.corpus)
    if not documents:
        raise CorpusFormatError(args.corpus, 0, "no documents")
    cfg = RetrievalConfig(bm25_k1=args.bm25_k1, bm25_b=args.bm25_b, chunk_size=args.chunk_size,
                          chunk_overlap=args.chunk_overlap).validate()
    settings = _backend_settings(args)
    embedder = make_embedder(args.embedder, settings.api_key_env, settings.base_url)
    index = ingest_corpus(documents, cfg, embedder)
    save_index(index, args.out)
    print(f"{len(documents)} documents, {len(index)} chunks written to {args.out}")
    return EXIT_SUCCESS

class GridRunner():
    """!
    Runs every (variant, task) episode of a grid and scores it
    """
    def __init__(self, grid:reports.ExperimentGrid, settings:BackendSettings):
        """!
        @brief Constructor; loads tasks and the index and checks every variant against them

        @param grid (ExperimentGrid): Validated grid
        @param settings (BackendSettings): Backend selection
        """
        ## Grid being run
        self.grid = grid
        ## Backend selection
        self.settings = settings
        ## Sampled tasks in file order
        self.tasks = reports.select_tasks(read_tasks_jsonl(grid.tasks_path), grid.sample_size,
                                          grid.seed)
        if not self.tasks:
            raise ConfigurationError(f"{grid.tasks_path} holds no tasks")
        ## Shared read only index
        self.index = load_index(grid.corpus_index_path)
        ## Query embedder matching the index
        self.embedder = make_embedder(self.index.embedder_name, settings.api_key_env,
                                      settings.base_url)
        for variant in grid.variants:
            Retriever(self.index, variant.retrieval, self.embedder)
        self._shared_backend = None
        if not settings.scripted():
            self._shared_backend = OpenAiChatBackend(api_key_env=settings.api_key_env,
                                                     base_url=settings.base_url,
                                                     attempts=settings.attempts,
                                                     backoff_base=settings.backoff_base)

    def backend_for(self, variant_name:str, task_id:str):
        """!
        @return ChatBackend - scripted replies for the episode or the shared HTTP backend
        """
        if self._shared_backend is not None:
            return self._shared_backend
        return ScriptedBackend(select_fixtures(self.settings.fixture_sets, variant_name,
                                               task_id), self.settings.strict_fixtures)

    def trace_path(self, variant_name:str, task_id:str)->str:
        """!
        @return string - trace file of one episode
        """
        return os.path.join(self.grid.output_dir, reports.TRACES_DIR, variant_name,
                            f"{task_id}.jsonl")

    def run_one(self, cfg, task)->reports.EpisodeOutcome:
        """!
        @brief Run, score and persist one episode; failures become a failed outcome

        @param cfg (RunConfig): Variant
        @param task (Task): Task

        @return EpisodeOutcome
        """
        try:
            backend = self.backend_for(cfg.name, task.task_id)
            llm = LlmClient(backend, self.grid.model_id)
            trace = run_episode(task, cfg, self.index, llm, self.embedder)
            score = score_lexical(task.task_id, trace.final_answer, task.gold_answer,
                                  ABSTENTION_MARKER)
            if self.grid.judge:
                judge_llm = LlmClient(backend, self.grid.judge_model_id or self.grid.model_id,
                                      TokenLedger())
                try:
                    judged = rubric_judge(judge_llm, task.question, task.gold_answer,
                                          trace.final_answer, task.answerable)
                    score = dataclasses.replace(score, judge_score=judged)
                except LlmTransportError as error:
                    logger.warning("judge failed for %s/%s: %s", cfg.name, task.task_id, error)
            trace.scores = score.to_dict()
            trace.objective_value = cgdp_objective(score.success(), trace.total_tokens(),
                                                   cfg.objective_lambda)
            write_trace(trace, self.trace_path(cfg.name, task.task_id),
                        self.grid.normalize_timestamps)
        except (HarnessError, OSError) as error:
            logger.error("episode %s/%s failed: %s", cfg.name, task.task_id, error)
            return reports.EpisodeOutcome(cfg.name, task.task_id, reports.STATUS_FAILED,
                                          error=str(error))
        status = reports.STATUS_COMPLETED
        if trace.stop_reason == StopReason.TRANSPORT_ERROR:
            status = reports.STATUS_TRANSPORT_ERROR
        return reports.EpisodeOutcome(cfg.name, task.task_id, status, trace, score,
                                      error=trace.error)

    def run(self)->dict:
        """!
        @brief Run the whole grid

        @return dict variant name to list of EpisodeOutcome in task order
        """
        jobs = [(cfg, task) for cfg in self.grid.variants for task in self.tasks]
        outcomes = {cfg.name: {} for cfg in self.grid.variants}
        with ThreadPoolExecutor(max_workers=self.grid.parallelism) as pool:
            futures = {pool.submit(self.run_one, cfg, task): (cfg, task) for cfg, task in jobs}
            for future in tqdm(as_completed(futures), total=len(futures), desc="episodes",
                               unit="ep", disable=None):
                cfg, task = futures[future]
                outcomes[cfg.name][task.task_id] = future.result()
        return {name: [by_task[t.task_id] for t in self.tasks]
                for name, by_task in outcomes.items()}

def cmd_run(args)->int:
    """!
    @brief Run an experiment grid and write traces, score tables and the summary

    @param args (argparse.Namespace): grid plus backend and override flags

    @return int - exit code
    """
    grid = reports.load_grid(args.grid)
    if args.parallelism is not None:
        grid.parallelism = args.parallelism
    if args.seed is not None:
        grid.seed = args.seed
    if args.normalize_timestamps:
        grid.normalize_timestamps = True
    grid.validate()

    runner = GridRunner(grid, _backend_settings(args))
    outcomes = runner.run()
    summary = reports.write_run_outputs(grid.output_dir, grid.variants, outcomes)
    for row in summary["variants"]:
        print(f"{row['variant']}: success {row['mean_success']}, tokens {row['total_tokens']}, "
              f"fire rate {row['gate_fire_rate']}, savings {row['savings_vs_twin']}")

    failed = [e for e in summary["episodes"] if e["status"] != reports.STATUS_COMPLETED]
    if failed:
        _error(f"{len(failed)} of {len(summary['episodes'])} episodes did not complete")
        return EXIT_PARTIAL_FAILURE
    return EXIT_SUCCESS

def cmd_sweep_gate(args)->int:
    """!
    @brief Replay gate configurations over recorded traces

    @param args (argparse.Namespace): traces_dir, configs, out

    @return int - exit code
    """
    names = args.configs if args.configs else list(reports.DEFAULT_SWEEP_CONFIGS)
    configs = [parse_gate_name(name) for name in names]
    result = reports.sweep_gate(args.traces_dir, configs)
    os.makedirs(args.out, exist_ok=True)
    reports.write_tsv(os.path.join(args.out, "sweep.tsv"), reports.SWEEP_COLUMNS,
                      result["configs"])
    reports.write_tsv(os.path.join(args.out, "sweep_distance.tsv"), reports.DISTANCE_COLUMNS,
                      result["distances"])
    reports.write_json(os.path.join(args.out, "sweep.json"), result)
    print(f"{len(configs)} configurations replayed over {result['traces']} traces")
    return EXIT_SUCCESS

def cmd_report(args)->int:
    """!
    @brief Paired comparison table over run directories

    @param args (argparse.Namespace): run_dirs, metric, baseline, alpha, out

    @return int - exit code
    """
    entries = reports.collect_entries(args.run_dirs)
    rows = reports.compare_entries(entries, args.metric, args.baseline, args.alpha)
    os.makedirs(args.out, exist_ok=True)
    reports.write_tsv(os.path.join(args.out, "report.tsv"), reports.REPORT_COLUMNS, rows)
    reports.write_tsv(os.path.join(args.out, "pareto.tsv"), reports.PARETO_COLUMNS,
                      reports.pareto_rows(entries, args.metric))
    for row in rows:
        marker = "*" if row["significant"] else ""
        print(f"{row['entry_b']} vs {row['entry_a']}: {row['delta_pp']:+.1f}pp "
              f"p_holm={row['p_holm']:.4f}{marker}")
    return EXIT_SUCCESS

def _add_backend_flags(parser:argparse.ArgumentParser):
    parser.add_argument("--base-url", default=None,
                        help="OpenAI compatible endpoint, defaults to $OPENAI_BASE_URL")
    parser.add_argument("--api-key-env", default=DEFAULT_API_KEY_ENV,
                        help="environment variable holding the API key")

def build_parser()->argparse.ArgumentParser:
    """!
    @brief Argument parser with one sub command per verb

    @return argparse.ArgumentParser
    """
    parser = argparse.ArgumentParser(prog="cgdp-harness",
                                     description="Belief state and exhaustion gate experiments "
                                                 "for iterative retrieval agents")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more output, repeat for debug and trace")
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", help="chunk a corpus and write its index")
    ingest.add_argument("corpus", help="JSON lines corpus with doc_id and text")
    ingest.add_argument("out", help="index file to write")
    ingest.add_argument("--chunk-size", type=int, default=RetrievalConfig.chunk_size)
    ingest.add_argument("--chunk-overlap", type=int, default=RetrievalConfig.chunk_overlap)
    ingest.add_argument("--bm25-k1", type=float, default=RetrievalConfig.bm25_k1)
    ingest.add_argument("--bm25-b", type=float, default=RetrievalConfig.bm25_b)
    ingest.add_argument("--embedder", default="hashing:256",
                        help="hashing:<dim>[:<seed>], openai:<model> or none")
    _add_backend_flags(ingest)
    ingest.set_defaults(func=cmd_ingest)

    run = sub.add_parser("run", help="run an experiment grid")
    run.add_argument("grid", help="grid JSON file")
    run.add_argument("--parallelism", type=int, default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--fixtures", action="append", default=[],
                     help="scripted reply file, replaces the HTTP backend")
    run.add_argument("--strict-fixtures", action="store_true",
                     help="fail when a scripted prompt lacks its expected text")
    run.add_argument("--normalize-timestamps", action="store_true")
    _add_backend_flags(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep-gate", help="replay gate configurations over traces")
    sweep.add_argument("traces_dir")
    sweep.add_argument("--config", dest="configs", action="append", default=[],
                       help="compact gate string, repeatable")
    sweep.add_argument("--out", default=".")
    sweep.set_defaults(func=cmd_sweep_gate)

    report = sub.add_parser("report", help="paired comparison of runs")
    report.add_argument("run_dirs", nargs="+")
    report.add_argument("--metric", default="success", choices=reports.SCORE_METRICS)
    report.add_argument("--baseline", default=None,
                        help="entry label (run/variant) compared against all others")
    report.add_argument("--alpha", type=float, default=0.05)
    report.add_argument("--out", default=".")
    report.set_defaults(func=cmd_report)
    return parser

def main(argv:list = None)->int:
    """!
    @brief Parse arguments and dispatch the verb

    @param argv (list of string): Arguments, sys.argv when None

    @return int - exit code
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.func(args)
    except (ConfigurationError, InvalidArgumentError, CorpusFormatError) as error:
        _error(str(error))
        return EXIT_CONFIGURATION
    except OSError as error:
        _error(str(error))
        return EXIT_CONFIGURATION

if __name__ == "__main__":
    sys.exit(main())
