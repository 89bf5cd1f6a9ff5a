"""Shared exception types."""


class ContractViolation(ValueError):
    """An operation was called with arguments outside its stated domain."""


class SchemaError(ValueError):
    """A serialized artifact (checkpoint, config) does not match its schema."""


class ConfigError(ValueError):
    """An experiment configuration is structurally invalid."""
