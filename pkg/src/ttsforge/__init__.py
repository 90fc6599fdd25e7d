"""Corpus filtering, evaluation metrics, toy-scale model math and loss checks for TTS work."""

__version__ = "0.1.0"
