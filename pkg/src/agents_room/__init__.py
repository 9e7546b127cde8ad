"""Multi-agent story writing with a shared scratchpad, plus the evaluation
tools to compare the resulting systems."""

from .scratchpad import (
    AgentLabel,
    Scratchpad,
    ScratchpadEntry,
    parse_scratchpad,
    render_scratchpad,
    scratchpad_append,
    scratchpad_init,
)
from .prompts import AGENTS, AgentKind, AgentSpec, identifiers_phrase, render_agent_prompt
from .orchestrator import OrchestratorConfig, RunTrace, Variant, next_agent, run

__all__ = [
    "AGENTS",
    "AgentKind",
    "AgentLabel",
    "AgentSpec",
    "OrchestratorConfig",
    "RunTrace",
    "Scratchpad",
    "ScratchpadEntry",
    "Variant",
    "identifiers_phrase",
    "next_agent",
    "parse_scratchpad",
    "render_agent_prompt",
    "render_scratchpad",
    "run",
    "scratchpad_append",
    "scratchpad_init",
]

__version__ = "0.1.0"
