"""Conjugacies between one-step maps near transcritical and pitchfork points."""
__version__ = "0.1.0"
