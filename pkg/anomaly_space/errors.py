#!/usr/bin/env python3
"""
Exception hierarchy shared by every stage of the diagnosis pipeline.

The CLI maps ValidationError to exit code 2 and every other
FaultDiagnosisError to exit code 1.
"""


class FaultDiagnosisError(Exception):
    """Base class for all errors raised by the anomaly_space package."""


class ValidationError(FaultDiagnosisError, ValueError):
    """An input violates a documented precondition."""


class DataFormatError(FaultDiagnosisError):
    """A file could not be parsed into the documented format."""


class ModelFormatError(DataFormatError):
    """A model file has the wrong magic, an unsupported version or bad content."""


class StageError(FaultDiagnosisError):
    """A pipeline stage failed; the message is tagged with the stage name."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")
