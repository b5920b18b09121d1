"""@package context_gathering
Logging setup and debug level ladder for the harness tools
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

DBG_MSG_NONE = 0
DBG_MSG_MINIMAL = 1
DBG_MSG_VERBOSE = 2
DBG_MSG_VERYVERBOSE = 3

## Finer than DEBUG, used for full prompt dumps
TRACE = 5
logging.addLevelName(TRACE, "TRACE")

_LEVEL_MAP = {DBG_MSG_NONE: logging.WARNING,
              DBG_MSG_MINIMAL: logging.INFO,
              DBG_MSG_VERBOSE: logging.DEBUG,
              DBG_MSG_VERYVERBOSE: TRACE}

PACKAGE_LOGGER = "context_gathering_grocsoftware"

def debug_level_to_logging(debug_level:int)->int:
    """!
    Convert a debug ladder level to a logging module level.  Levels above
    DBG_MSG_VERYVERBOSE saturate.

    @param debug_level (int): DBG_MSG_NONE | DBG_MSG_MINIMAL | DBG_MSG_VERBOSE | DBG_MSG_VERYVERBOSE

    @return int - logging level
    """
    clamped = min(max(debug_level, DBG_MSG_NONE), DBG_MSG_VERYVERBOSE)
    return _LEVEL_MAP[clamped]

def configure_logging(debug_level:int = DBG_MSG_NONE, stream = None)->logging.Logger:
    """!
    @brief Attach a stderr handler to the package logger at the requested level

    @param debug_level (int): Debug ladder level
    @param stream (file): Output stream or None for stderr

    @return logging.Logger - the configured package logger
    """
    package_logger = logging.getLogger(PACKAGE_LOGGER)
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)

    handler = logging.StreamHandler(stream)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(name)s: %(message)s"))
    package_logger.addHandler(handler)
    package_logger.setLevel(debug_level_to_logging(debug_level))
    return package_logger
