"""@package context_gathering
@brief Exception hierarchy shared by every harness module
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

class HarnessError(Exception):
    """!
    @brief Base class of all context gathering harness errors
    """

class InvalidArgumentError(HarnessError, ValueError):
    """!
    @brief An operation was called with an argument outside its contract
    """

class InvalidStateError(HarnessError, RuntimeError):
    """!
    @brief An operation was called on an object in the wrong state
    """

class ConfigurationError(HarnessError, ValueError):
    """!
    @brief A run, gate, retrieval or grid configuration failed validation
    """

class CorpusFormatError(HarnessError, ValueError):
    """!
    @brief Corpus, task or index file could not be read
    """
    def __init__(self, file_name:str, line_number:int, reason:str):
        """!
        @brief Constructor

        @param file_name (string): Name of the offending file
        @param line_number (int): 1 based line number or 0 if the error is not line specific
        @param reason (string): Description of the problem
        """
        ## Name of the offending file
        self.file_name = file_name
        ## Offending line number, 0 if not line specific
        self.line_number = line_number
        if line_number > 0:
            super().__init__(f"{file_name}:{line_number}: {reason}")
        else:
            super().__init__(f"{file_name}: {reason}")

class LlmTransportError(HarnessError, RuntimeError):
    """!
    @brief An LLM or embedding request failed after all retry attempts
    """
    def __init__(self, message:str, attempts:int = 1, round_index:int = None):
        """!
        @brief Constructor

        @param message (string): Failure description
        @param attempts (int): Number of attempts made before giving up
        @param round_index (int): Episode round the request belonged to or None
        """
        super().__init__(message)
        ## Number of attempts made before giving up
        self.attempts = attempts
        ## Episode round index attached by the orchestrator
        self.round_index = round_index

    def with_round(self, round_index:int):
        """!
        @brief Attach the round context to the error

        @param round_index (int): Episode round index

        @return LlmTransportError - self, for re-raise chaining
        """
        self.round_index = round_index
        return self

    def __str__(self)->str:
        base = super().__str__()
        if self.round_index is None:
            return base
        return f"round {self.round_index}: {base}"

class FixtureExhaustedError(HarnessError, LookupError):
    """!
    @brief The scripted backend has no reply left for a bucket
    """
    def __init__(self, bucket:str, sequence:int):
        """!
        @brief Constructor

        @param bucket (string): Cost bucket name that ran dry
        @param sequence (int): 1 based sequence number of the missing reply
        """
        ## Cost bucket name that ran dry
        self.bucket = bucket
        ## Sequence number of the missing reply
        self.sequence = sequence
        super().__init__(f"no scripted reply #{sequence} for bucket '{bucket}'")
