"""Embedding extraction for the object catalog.

Reads the dataset manifest for its objects and referring expressions,
encodes the five canonical view images of every object with a frozen
convolutional backbone, looks up word vectors for every expression token,
and writes the lot into the binary embedding store that the detection
toolkit ingests.  This package never imports that toolkit; the store file
format (docs/formats.md at the repository root) is the whole interface.
"""

from .catalog import Catalog, CatalogError, load_catalog, parse_catalog, tokenize
from .extract import ExtractError, ExtractJob, ExtractReport, run
from .images import FEATURE_DIM, VIEWS, MissingViewError, ViewEncoder, check_views, view_path
from .store import ObjectEntry, write_store
from .words import WordVectorError, load_word_vectors

__all__ = [
    "Catalog",
    "CatalogError",
    "ExtractError",
    "ExtractJob",
    "ExtractReport",
    "FEATURE_DIM",
    "MissingViewError",
    "ObjectEntry",
    "VIEWS",
    "ViewEncoder",
    "WordVectorError",
    "check_views",
    "load_catalog",
    "load_word_vectors",
    "parse_catalog",
    "run",
    "tokenize",
    "view_path",
    "write_store",
]
