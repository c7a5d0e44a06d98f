"""Object catalog side of the dataset manifest.

The manifest is a line-oriented text file.  It also carries pair records
for the detection task; those are irrelevant to embedding extraction and
are skipped here.  The lines that matter:

    version 1
    object <id> fold=<train|dev|test> container=<0|1>
    expr <object-id> <free text ...>

Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass


class CatalogError(ValueError):
    """Manifest text that cannot be read as an object catalog."""


@dataclass(frozen=True)
class Catalog:
    """Object ids in manifest order, each with its referring expressions."""

    objects: tuple[str, ...]
    expressions: dict[str, tuple[str, ...]]

    def tokens(self) -> set[str]:
        """Every distinct token across all expressions."""
        vocab: set[str] = set()
        for exprs in self.expressions.values():
            for expr in exprs:
                vocab.update(tokenize(expr))
        return vocab


def tokenize(expression: str) -> list[str]:
    return expression.lower().split()


def parse_catalog(text: str) -> Catalog:
    """Parse manifest text. Pure: no filesystem access.

    Every object must carry at least one referring expression, since an
    object with none can never be embedded.
    """
    objects: list[str] = []
    expressions: dict[str, list[str]] = {}
    saw_version = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        kind = tokens[0]
        if kind == "version":
            if len(tokens) != 2 or tokens[1] != "1":
                raise CatalogError(f"line {line_no}: unsupported manifest version")
            saw_version = True
        elif kind == "object":
            if not saw_version:
                raise CatalogError(f"line {line_no}: version line must come first")
            if len(tokens) < 2:
                raise CatalogError(f"line {line_no}: object line needs an id")
            oid = tokens[1]
            if oid in expressions:
                raise CatalogError(f"line {line_no}: duplicate object {oid!r}")
            objects.append(oid)
            expressions[oid] = []
        elif kind == "expr":
            if len(tokens) < 3:
                raise CatalogError(f"line {line_no}: expr needs an object id and text")
            oid = tokens[1]
            if oid not in expressions:
                raise CatalogError(f"line {line_no}: expr for unknown object {oid!r}")
            expressions[oid].append(" ".join(tokens[2:]))
        elif kind == "pair":
            continue
        else:
            raise CatalogError(f"line {line_no}: unknown record kind {kind!r}")
    if not objects:
        raise CatalogError("manifest lists no objects")
    bare = [oid for oid in objects if not expressions[oid]]
    if bare:
        raise CatalogError(
            "objects without referring expressions: " + ", ".join(bare))
    return Catalog(tuple(objects), {k: tuple(v) for k, v in expressions.items()})


def load_catalog(path) -> Catalog:
    with open(path, encoding="utf-8") as f:
        return parse_catalog(f.read())
