"""Fixed-text keystroke-dynamics benchmark toolkit for the CMU dataset."""

__version__ = "0.1.0"
