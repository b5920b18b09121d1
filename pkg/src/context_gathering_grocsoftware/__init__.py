"""@package context_gathering
@brief Belief state and exhaustion gate orchestration for iterative retrieval agents
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

__version__ = '0.1.0'

__all__ = ["harness_errors", "harness_logging", "belief_state", "prompt_templates", "extractor",
           "exhaustion_gate", "retriever", "llm_client", "harness_adapters", "episode_trace",
           "orchestrator", "metrics_stats", "reports", "cli_reports"]

from . import harness_errors
from . import harness_logging
from . import belief_state
from . import prompt_templates
from . import extractor
from . import exhaustion_gate
from . import retriever
from . import llm_client
from . import harness_adapters
from . import episode_trace
from . import orchestrator
from . import metrics_stats
from . import reports
from . import cli_reports
