"""Exception hierarchy shared by all pipeline stages."""


class VinesenseError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(VinesenseError):
    """Input data violates a schema or a domain invariant."""


class ConfigurationError(VinesenseError):
    """A required configuration entry is missing or inconsistent."""


class KnowledgeError(VinesenseError):
    """Knowledge base is malformed (cycles, dangling references, bad rules)."""


class PipelineError(VinesenseError):
    """A pipeline stage cannot run (missing/stale artifact, empty input)."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage
