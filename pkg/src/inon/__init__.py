"""Toolkit for training and evaluating in/on placement classifiers from
paired egocentric scene captures and per-object embeddings."""

__version__ = "0.1.0"
