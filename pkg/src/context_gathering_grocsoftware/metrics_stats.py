"""@package context_gathering
@brief Answer scoring, the cost weighted objective and paired significance tests
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
import math
import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from context_gathering_grocsoftware.harness_adapters import ABSTENTION_MARKER
from context_gathering_grocsoftware.harness_errors import InvalidArgumentError
from context_gathering_grocsoftware.llm_client import CostBucket, LlmClient
from context_gathering_grocsoftware import prompt_templates
from context_gathering_grocsoftware.prompt_templates import TemplateLibrary

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05

_ARTICLES_REGX = re.compile(r"\b(a|an|the)\b")
_PUNCTUATION = frozenset(string.punctuation)

def normalize_answer(text:str)->str:
    """!
    @brief Casefold, strip punctuation, drop articles and collapse whitespace

    @param text (string): Answer text

    @return string
    """
    lowered = (text or "").casefold()
    without_punctuation = "".join(ch for ch in lowered if ch not in _PUNCTUATION)
    without_articles = _ARTICLES_REGX.sub(" ", without_punctuation)
    return " ".join(without_articles.split())

def _overlap_f1(pred_tokens:list, gold_tokens:list)->float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2.0 * precision * recall / (precision + recall)

def token_f1(pred:str, gold:str)->float:
    """!
    @brief F1 over normalized token multisets

    @param pred (string): Predicted answer
    @param gold (string): Reference answer

    @return float - 1 when both are empty, 0 when exactly one is
    """
    return _overlap_f1(normalize_answer(pred).split(), normalize_answer(gold).split())

def exact_match(pred:str, gold:str)->int:
    """!
    @return int - 1 iff the normalized strings are equal
    """
    return int(normalize_answer(pred) == normalize_answer(gold))

def rouge1_f(pred:str, gold:str)->float:
    """!
    @brief Unigram overlap F-measure with clipped counts

    With the shared normalization this equals token_f1.

    @param pred (string): Predicted answer
    @param gold (string): Reference answer

    @return float
    """
    pred_counts = Counter(normalize_answer(pred).split())
    gold_counts = Counter(normalize_answer(gold).split())
    pred_total = sum(pred_counts.values())
    gold_total = sum(gold_counts.values())
    if pred_total == 0 and gold_total == 0:
        return 1.0
    if pred_total == 0 or gold_total == 0:
        return 0.0
    clipped = sum(min(count, gold_counts[token]) for token, count in pred_counts.items())
    if clipped == 0:
        return 0.0
    precision = clipped / pred_total
    recall = clipped / gold_total
    return 2.0 * precision * recall / (precision + recall)

def is_abstention(pred:str, marker:str = ABSTENTION_MARKER)->bool:
    """!
    @return bool - True when the answer contains the abstention marker, any case
    """
    return bool(marker) and marker.casefold() in (pred or "").casefold()

@dataclass(frozen=True)
class ScoreRecord:
    """!
    Scores of one final answer
    """
    task_id: str
    token_f1: float
    exact_match: int
    rouge1_f: float
    judge_score: Optional[float] = None
    abstained: bool = False

    def __post_init__(self):
        for name in ("token_f1", "rouge1_f"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidArgumentError(f"{name} must be in [0,1], got {value}")
        if self.exact_match not in (0, 1):
            raise InvalidArgumentError("exact_match must be 0 or 1")
        if self.judge_score is not None and not 0.0 <= self.judge_score <= 1.0:
            raise InvalidArgumentError(f"judge_score must be in [0,1], got {self.judge_score}")

    def success(self)->float:
        """!
        @return float - judge score when present, token F1 otherwise
        """
        return self.token_f1 if self.judge_score is None else self.judge_score

    def to_dict(self)->dict:
        """!
        @return dict
        """
        return {"token_f1": self.token_f1, "exact_match": self.exact_match,
                "rouge1_f": self.rouge1_f, "judge_score": self.judge_score,
                "abstained": self.abstained}

def score_lexical(task_id:str, pred:str, gold:Optional[str],
                  marker:str = ABSTENTION_MARKER)->ScoreRecord:
    """!
    @brief Lexical scores; abstentions score 0 against a non-empty reference

    @param task_id (string): Task id
    @param pred (string): Final answer
    @param gold (string): Reference answer, None for unanswerable tasks
    @param marker (string): Abstention marker

    @return ScoreRecord without a judge score
    """
    reference = gold if gold is not None else ""
    return ScoreRecord(task_id=task_id, token_f1=token_f1(pred, reference),
                       exact_match=exact_match(pred, reference),
                       rouge1_f=rouge1_f(pred, reference),
                       abstained=is_abstention(pred, marker))

_SCORE_REGX = re.compile(r"\bSCORE\s*:\s*(\d+(?:\.\d+)?)", re.IGNORECASE)
_SUBSCORE_REGX = {name: re.compile(rf"\b{name}\s*:\s*(\d+(?:\.\d+)?)", re.IGNORECASE)
                  for name in ("CORRECTNESS", "COMPLETENESS", "IRRELEVANCE")}

def parse_judge_reply(reply:str)->Optional[float]:
    """!
    @brief Judge score in [0,1] from "SCORE: NN", else from the three subscores

    @param reply (string): Raw judge reply

    @return float or None when nothing valid is found
    """
    match = _SCORE_REGX.search(reply or "")
    if match is not None:
        value = float(match.group(1))
        if 0.0 <= value <= 100.0:
            return value / 100.0
        return None
    subscores = {}
    for name, regx in _SUBSCORE_REGX.items():
        found = regx.search(reply or "")
        if found is None:
            return None
        subscores[name] = float(found.group(1))
    if any(not 0.0 <= value <= 10.0 for value in subscores.values()):
        return None
    return (subscores["CORRECTNESS"] + subscores["COMPLETENESS"] +
            (10.0 - subscores["IRRELEVANCE"])) / 30.0

UNANSWERABLE_REFERENCE = "The question cannot be answered from the document collection."

def rubric_judge(llm:LlmClient, question:str, gold:Optional[str], pred:str, answerable:bool,
                 marker:str = ABSTENTION_MARKER,
                 library:TemplateLibrary = None)->Optional[float]:
    """!
    @brief Rubric judge score in [0,1]

    A correct abstention on an unanswerable task scores 1 without a call.

    @param llm (LlmClient): Judge client, charged to the judge bucket
    @param question (string): Task question
    @param gold (string): Reference answer or None
    @param pred (string): Final answer
    @param answerable (bool): False for unanswerable tasks
    @param marker (string): Abstention marker
    @param library (TemplateLibrary): Template source, shipped defaults when None

    @return float or None when the judge reply cannot be parsed
    """
    if not answerable and is_abstention(pred, marker):
        return 1.0
    templates = library if library is not None else prompt_templates.default_library()
    reference = gold if gold else UNANSWERABLE_REFERENCE
    prompt = templates.render(prompt_templates.JUDGE_RUBRIC, question=question, gold=reference,
                              prediction=pred)
    score = parse_judge_reply(llm.ask(prompt, CostBucket.JUDGE).content)
    if score is None:
        logger.warning("judge reply for question '%s' could not be parsed, score left empty",
                       question)
    return score

def cgdp_objective(success:float, total_tokens:int, objective_lambda:float)->float:
    """!
    @brief success - lambda * total_tokens

    @param success (float): Success score in [0,1]
    @param total_tokens (int): Tokens spent on the episode
    @param objective_lambda (float): Cost weight, not negative

    @return float
    """
    if objective_lambda < 0.0:
        raise InvalidArgumentError(f"lambda must not be negative, got {objective_lambda}")
    return success - objective_lambda * total_tokens

@dataclass(frozen=True)
class PairedTestResult:
    """!
    Two sided paired t test outcome
    """
    mean_diff: float
    t_statistic: float
    p_value: float
    n: int
    adjusted_p: Optional[float] = None
    significant: bool = False
    degenerate: bool = False

def paired_t_test(a:list, b:list, alpha:float = DEFAULT_ALPHA)->PairedTestResult:
    """!
    @brief Two sided paired t test on d = a - b

    p = I_{df/(df+t^2)}(df/2, 1/2) with df = n - 1.  Zero variance
    differences are flagged degenerate: p = 1 for a zero mean, else p = 0.

    @param a (list of float): First sample
    @param b (list of float): Second sample, same length
    @param alpha (float): Unadjusted significance level

    @return PairedTestResult
    """
    if len(a) != len(b):
        raise InvalidArgumentError(f"paired samples differ in length ({len(a)} vs {len(b)})")
    if len(a) < 2:
        raise InvalidArgumentError("paired t test needs at least two pairs")

    differences = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    n = int(differences.size)
    mean = float(differences.mean())
    deviation = float(differences.std(ddof=1))
    if deviation == 0.0:
        if mean == 0.0:
            return PairedTestResult(mean_diff=0.0, t_statistic=0.0, p_value=1.0, n=n,
                                    degenerate=True)
        return PairedTestResult(mean_diff=mean, t_statistic=math.copysign(math.inf, mean),
                                p_value=0.0, n=n, significant=True, degenerate=True)

    t_statistic = mean / (deviation / math.sqrt(n))
    dof = n - 1
    p_value = float(special.betainc(dof / 2.0, 0.5, dof / (dof + t_statistic * t_statistic)))
    p_value = min(1.0, max(0.0, p_value))
    return PairedTestResult(mean_diff=mean, t_statistic=t_statistic, p_value=p_value, n=n,
                            significant=p_value <= alpha)

def holm_bonferroni(p_values:list, alpha:float = DEFAULT_ALPHA)->list:
    """!
    @brief Holm step-down adjustment

    @param p_values (list of float): Raw p-values in [0,1]
    @param alpha (float): Family-wise error rate

    @return list of (adjusted_p, significant) in input order
    """
    values = np.asarray(p_values, dtype=np.float64)
    if values.size == 0:
        return []
    if np.any((values < 0.0) | (values > 1.0)) or np.any(np.isnan(values)):
        raise InvalidArgumentError("p-values must lie in [0,1]")
    count = values.size
    order = np.argsort(values, kind="stable")
    multipliers = count - np.arange(count)
    adjusted_sorted = np.minimum(1.0, np.maximum.accumulate(multipliers * values[order]))
    adjusted = np.empty(count, dtype=np.float64)
    adjusted[order] = adjusted_sorted
    return [(float(p), bool(p <= alpha)) for p in adjusted]

def apply_holm(results:list, alpha:float = DEFAULT_ALPHA)->list:
    """!
    @brief Attach Holm adjusted p-values to a family of test results

    @param results (list of PairedTestResult): Family of comparisons
    @param alpha (float): Family-wise error rate

    @return list of PairedTestResult
    """
    adjusted = holm_bonferroni([r.p_value for r in results], alpha)
    return [PairedTestResult(mean_diff=r.mean_diff, t_statistic=r.t_statistic,
                             p_value=r.p_value, n=r.n, adjusted_p=adjusted_p,
                             significant=significant, degenerate=r.degenerate)
            for r, (adjusted_p, significant) in zip(results, adjusted)]
