"""@package context_gathering
@brief Prompt template loading and placeholder substitution

Templates are plain text files keyed by id (the file stem).  The defaults
ship in the package templates directory and a user directory may override
any of them.
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
import os
import re
from importlib import resources

from context_gathering_grocsoftware.harness_errors import ConfigurationError
from context_gathering_grocsoftware.harness_errors import InvalidArgumentError

logger = logging.getLogger(__name__)

PLACEHOLDER_REGX = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")

EXTRACTION_STRUCTURED = "extraction_structured"
EXTRACTION_FREEFORM = "extraction_freeform"
NOTES_COMPRESSION = "notes_compression"
REORGANIZATION = "reorganization"
GATE_CONSERVATIVE = "gate_conservative"
GATE_NEUTRAL = "gate_neutral"
HARNESS_IRCOT = "harness_ircot"
HARNESS_REACT = "harness_react"
HARNESS_ITER_RETGEN = "harness_iter_retgen"
HARNESS_MEMGPT = "harness_memgpt"
FINAL_ANSWER = "final_answer"
JUDGE_RUBRIC = "judge_rubric"

## Placeholders each template id is allowed to use
DECLARED_PLACEHOLDERS = {
    EXTRACTION_STRUCTURED: frozenset({"observation", "established_facts", "question",
                                      "open_questions"}),
    EXTRACTION_FREEFORM: frozenset({"observation", "existing_notes", "question"}),
    NOTES_COMPRESSION: frozenset(),
    REORGANIZATION: frozenset({"question", "facts", "questions", "k_target", "n_questions"}),
    GATE_CONSERVATIVE: frozenset({"question", "current_state", "recent_rounds", "window"}),
    GATE_NEUTRAL: frozenset({"question", "current_state", "recent_rounds", "window"}),
    HARNESS_IRCOT: frozenset({"question", "context"}),
    HARNESS_REACT: frozenset({"question", "context"}),
    HARNESS_ITER_RETGEN: frozenset({"question", "context"}),
    HARNESS_MEMGPT: frozenset({"question", "context", "core_memory"}),
    FINAL_ANSWER: frozenset({"question", "context"}),
    JUDGE_RUBRIC: frozenset({"question", "gold", "prediction"}),
}

class PromptTemplate():
    """!
    A template body with named {placeholder} slots
    """
    def __init__(self, template_id:str, body:str, placeholders:frozenset):
        """!
        @brief Constructor

        @param template_id (string): Template id
        @param body (string): Template text
        @param placeholders (frozenset): Names the body may reference
        """
        undeclared = set(PLACEHOLDER_REGX.findall(body)) - set(placeholders)
        if undeclared:
            raise ConfigurationError(f"template '{template_id}' uses undeclared placeholders "
                                     f"{sorted(undeclared)}")
        ## Template id
        self.template_id = template_id
        ## Template text
        self.body = body
        ## Declared placeholder names
        self.placeholders = frozenset(placeholders)

    def used_placeholders(self)->set:
        """!
        @brief Placeholder names that actually occur in the body

        @return set of string
        """
        return set(PLACEHOLDER_REGX.findall(self.body))

    def substitute(self, **values)->str:
        """!
        @brief Replace every placeholder in one pass

        Substituted values are never re-scanned, so braces inside an
        observation survive untouched.

        @param values: placeholder name to value

        @return string - filled template
        """
        missing = self.used_placeholders() - set(values)
        if missing:
            raise InvalidArgumentError(f"template '{self.template_id}' is missing values for "
                                       f"{sorted(missing)}")

        def _fill(match):
            return str(values[match.group(1)])

        return PLACEHOLDER_REGX.sub(_fill, self.body)

def residual_placeholders(text:str, template:PromptTemplate)->list:
    """!
    @brief Declared placeholders still present in a filled prompt

    @param text (string): Filled prompt
    @param template (PromptTemplate): Template it came from

    @return list of string - empty when substitution was complete
    """
    return [name for name in PLACEHOLDER_REGX.findall(text) if name in template.placeholders]

class TemplateLibrary():
    """!
    Template store keyed by id: package defaults plus optional overrides
    """
    def __init__(self, override_dir:str = None):
        """!
        @brief Constructor

        @param override_dir (string): Directory of <id>.txt files that replace
                                      the shipped defaults, or None
        """
        ## Loaded templates by id
        self._templates = {}
        self._load_defaults()
        if override_dir is not None:
            self._load_overrides(override_dir)

    def _load_defaults(self):
        """!
        @brief Read the shipped template files
        """
        template_root = resources.files("context_gathering_grocsoftware").joinpath("templates")
        for template_id, placeholders in DECLARED_PLACEHOLDERS.items():
            body = template_root.joinpath(template_id + ".txt").read_text(encoding="utf-8")
            self._templates[template_id] = PromptTemplate(template_id, body, placeholders)

    def _load_overrides(self, override_dir:str):
        """!
        @brief Replace defaults with same-named files from override_dir
        """
        if not os.path.isdir(override_dir):
            raise ConfigurationError(f"template directory {override_dir} does not exist")
        for file_name in sorted(os.listdir(override_dir)):
            template_id, extension = os.path.splitext(file_name)
            if extension != ".txt":
                continue
            if template_id not in DECLARED_PLACEHOLDERS:
                logger.warning("ignoring unknown template file %s", file_name)
                continue
            with open(os.path.join(override_dir, file_name), "rt", encoding="utf-8") as tfile:
                body = tfile.read()
            self._templates[template_id] = PromptTemplate(template_id, body,
                                                          DECLARED_PLACEHOLDERS[template_id])
            logger.info("template %s overridden from %s", template_id, override_dir)

    def get(self, template_id:str)->PromptTemplate:
        """!
        @brief Look up a template

        @param template_id (string): Template id

        @return PromptTemplate
        """
        try:
            return self._templates[template_id]
        except KeyError as error:
            raise InvalidArgumentError(f"unknown template id '{template_id}'") from error

    def render(self, template_id:str, **values)->str:
        """!
        @brief Fill a template by id

        @param template_id (string): Template id
        @param values: placeholder name to value

        @return string
        """
        return self.get(template_id).substitute(**values)

_DEFAULT_LIBRARY = None

def default_library()->TemplateLibrary:
    """!
    @brief Shared library holding the shipped templates

    @return TemplateLibrary
    """
    global _DEFAULT_LIBRARY # pylint: disable=global-statement
    if _DEFAULT_LIBRARY is None:
        _DEFAULT_LIBRARY = TemplateLibrary()
    return _DEFAULT_LIBRARY
