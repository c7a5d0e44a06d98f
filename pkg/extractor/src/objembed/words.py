"""Word vectors in the common plain-text format.

One token per line followed by its coordinates, whitespace separated:

    mug 0.1132 -0.2449 0.0871 ...

The dimensionality is whatever the first line says it is; every later
line has to agree.
"""

from __future__ import annotations

import numpy as np


class WordVectorError(ValueError):
    """Word vector file that cannot be used."""


def load_word_vectors(path, vocab) -> tuple[dict[str, np.ndarray], int]:
    """Read vectors for the tokens in ``vocab``, skipping the rest.

    The full files run to gigabytes and almost none of their vocabulary is
    ever looked up, so this is a single filtered pass.  Returns a mapping
    token -> float32 vector plus the dimensionality.  The first occurrence
    of a token wins.
    """
    wanted = set(vocab)
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            parts = raw.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise WordVectorError(
                    f"{path}:{line_no}: expected a token plus coordinates")
            if dim is None:
                dim = len(parts) - 1
            elif len(parts) - 1 != dim:
                raise WordVectorError(
                    f"{path}:{line_no}: {len(parts) - 1} coordinates, "
                    f"file started with {dim}")
            token = parts[0]
            if token not in wanted or token in vectors:
                continue
            try:
                vectors[token] = np.asarray(
                    [float(x) for x in parts[1:]], dtype=np.float32)
            except ValueError:
                raise WordVectorError(
                    f"{path}:{line_no}: bad coordinate for {token!r}") from None
    if dim is None:
        raise WordVectorError(f"{path} holds no word vectors")
    return vectors, dim
