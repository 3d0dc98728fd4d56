"""Sensory time-cue guided cross-modal embedding learning."""

__version__ = "0.1.0"
