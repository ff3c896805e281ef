"""Exception hierarchy shared across the package."""


class FeedmaskError(Exception):
    """Base class for all package errors."""


# gateway

class GatewayError(FeedmaskError):
    """Base for chat/embedding backend failures."""


class TransportError(GatewayError):
    """Network failure that survived the retry budget."""


class NoScriptError(GatewayError):
    """Scripted stub has no entry for the requested key."""


class SchemaViolationError(GatewayError):
    """All structured-output attempts were malformed.

    Carries every raw model output so the failure is auditable.
    """

    def __init__(self, schema_ref: str, raw_outputs: list[str]):
        super().__init__(f"no valid {schema_ref!r} payload after {len(raw_outputs)} attempts")
        self.schema_ref = schema_ref
        self.raw_outputs = raw_outputs


class EmptyTextError(GatewayError):
    """embed() called with blank text."""


# preference graph

class GraphError(FeedmaskError):
    pass


class EmptyLabelError(GraphError):
    pass


class SelfEdgeError(GraphError):
    pass


class UnknownFeatureError(GraphError):
    pass


class SurvivorAbsorbedError(GraphError):
    pass


# profile pipeline

class ExtractionEmptyError(FeedmaskError):
    """Summary step produced no pos or no neg features."""


class UserMismatchError(FeedmaskError):
    """Impression belongs to a different user than this profile."""


# content filter

class DecisionUnavailableError(FeedmaskError):
    """Gateway failed all attempts for a rule match; caller fails open."""


# conversations

class SessionClosedError(FeedmaskError):
    pass


class NoSnapshotError(FeedmaskError):
    pass


# rule actions

class StaleActionError(FeedmaskError):
    """Target rule changed or vanished between proposal and confirmation."""


class ActionResolvedError(FeedmaskError):
    """The action was already confirmed or rejected."""


# event store

class SchemaInvalidError(FeedmaskError):
    pass


class CorruptLogError(FeedmaskError):
    """Non-tail corruption in the event log; refuse to start."""


class StorageFullError(FeedmaskError):
    pass


# eval harness

class MissingFileError(FeedmaskError):
    pass


class DanglingItemRefError(FeedmaskError):
    """Behavior rows reference news ids absent from the news table."""

    def __init__(self, ids: list[str]):
        preview = ", ".join(sorted(ids)[:10])
        super().__init__(f"{len(ids)} unresolved item ids: {preview}")
        self.ids = sorted(ids)


class UnknownMethodError(FeedmaskError):
    pass
