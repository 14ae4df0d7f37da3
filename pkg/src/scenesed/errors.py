"""Shared error base so the CLI can catch everything this package raises."""


class SceneSedError(Exception):
    """Base class for all errors raised by scenesed."""
