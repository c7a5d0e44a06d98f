"""Command line front end.

    objembed --catalog data/released/manifest.txt --images data/views \
             --vectors glove.42B.300d.txt --out store.bin

Writes the embedding store plus a JSON sidecar (<out>.oov.json) listing
any expression tokens that had no word vector.  Exit codes: 0 success,
1 unusable inputs, 2 usage errors (from argparse).
"""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractJob, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="objembed",
        description="Extract per-view image features and expression word "
                    "vectors into a binary embedding store.")
    p.add_argument("--catalog", required=True,
                   help="dataset manifest listing objects and referring expressions")
    p.add_argument("--images", required=True,
                   help="root of the view image tree, one directory per object "
                        "holding front/back/left/right/top-down .png files")
    p.add_argument("--vectors", required=True,
                   help="word vector text file, one token and its coordinates per line")
    p.add_argument("--out", required=True, help="embedding store file to write")
    p.add_argument("--weights", default="pretrained",
                   help="backbone parameters: 'pretrained' (downloads the "
                        "imagenet checkpoint) or 'seeded:<int>' (random, offline)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExtractJob(args.catalog, args.images, args.vectors, args.out, args.weights)
    try:
        report = run(job)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {report.store_path}: {report.n_objects} objects, "
          f"views {report.d_v}-d, tokens {report.d_l}-d")
    if report.oov:
        print(f"{len(report.oov)} tokens had no word vector, "
              f"listed in {report.sidecar_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
