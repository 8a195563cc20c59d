"""Action space: search, page reading, image acquisition, chart execution.

Every tool has a live adapter and a fixture mock behind the same small
interface; ``ToolRuntime.dispatch`` is the single entry point agents use.
"""

from .adapters import FixtureAdapters, LiveAdapters
from .base import TOOL_NAMES, TOOL_SCHEMAS, ToolRuntime
from .charts import MockChartRunner, SubprocessChartRunner
from .web import PageDocument, SearchResult, html_to_markdown

__all__ = [
    "FixtureAdapters",
    "LiveAdapters",
    "MockChartRunner",
    "PageDocument",
    "SearchResult",
    "SubprocessChartRunner",
    "TOOL_NAMES",
    "TOOL_SCHEMAS",
    "ToolRuntime",
    "html_to_markdown",
]
