"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`AgentsRoomError`; input-validation errors additionally derive from
``ValueError`` so callers that only know the builtin still catch them.
"""

from __future__ import annotations


class AgentsRoomError(Exception):
    """Base class for all package errors."""


# scratchpad


class ScratchpadError(AgentsRoomError, ValueError):
    pass


class EmptyTask(ScratchpadError):
    pass


class EmptyEntry(ScratchpadError):
    pass


class DuplicateLabel(ScratchpadError):
    pass


class HeaderCollision(ScratchpadError):
    """Entry text contains a line equal to a canonical section header."""


class EmptyScratchpad(ScratchpadError):
    pass


class UnknownHeader(ScratchpadError):
    pass


class MissingTask(ScratchpadError):
    pass


# prompts / orchestration


class AgentAlreadyRan(AgentsRoomError, ValueError):
    pass


class UnknownAgent(AgentsRoomError, KeyError):
    pass


class TemplateError(AgentsRoomError):
    pass


class ForeignEntry(AgentsRoomError, ValueError):
    """Scratchpad holds a label the variant never schedules."""


class RoutingError(AgentsRoomError):
    pass


class StepFailed(AgentsRoomError):
    """A backend call failed mid-run; ``partial`` holds the trace so far."""

    def __init__(self, message: str, *, step: int, label: str, partial=None):
        super().__init__(message)
        self.step = step
        self.label = label
        self.partial = partial


# backends


class BackendError(AgentsRoomError):
    pass


class BackendUnavailable(BackendError):
    pass


class AuthMissing(BackendError):
    pass


class EmptyPrompt(BackendError, ValueError):
    pass


class InputTooLong(BackendError, ValueError):
    pass


class ScriptMissing(BackendError):
    """Scripted mock has no response for the agent being exercised."""


class ConfigError(AgentsRoomError):
    pass


# synthetic data


class SynthDataError(AgentsRoomError, ValueError):
    pass


class NotAPlanningAgent(SynthDataError):
    pass


class MissingSection(SynthDataError):
    pass


class AnchorNotFound(SynthDataError):
    pass


class NonMonotonicAnchors(SynthDataError):
    pass


class IncompletePlans(SynthDataError):
    pass


# metrics


class EmptyStory(AgentsRoomError, ValueError):
    pass


class EmptyInput(AgentsRoomError, ValueError):
    pass


class TooFewStories(AgentsRoomError, ValueError):
    pass


# judging and ranking


class MalformedVerdict(AgentsRoomError, ValueError):
    pass


class TooFewSystems(AgentsRoomError, ValueError):
    pass


class UnknownSystem(AgentsRoomError, KeyError):
    pass


class PairMismatch(AgentsRoomError, ValueError):
    pass


class NotConverged(AgentsRoomError):
    pass


class DisconnectedGraph(AgentsRoomError, ValueError):
    pass


class RaggedTable(AgentsRoomError, ValueError):
    pass


class LengthMismatch(AgentsRoomError, ValueError):
    pass


class InsufficientCapacity(AgentsRoomError, ValueError):
    pass


# dataset


class DatasetError(AgentsRoomError, ValueError):
    pass


class MalformedRecord(DatasetError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class MissingField(MalformedRecord):
    pass


class UnknownSplit(MalformedRecord):
    pass


class EmptyDataset(DatasetError):
    pass
