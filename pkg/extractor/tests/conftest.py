import pytest

from objembed import ExtractJob, run

from _corpus import build_catalog, build_images, build_vectors, token_table


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    build_images(root / "views")
    build_catalog(root / "manifest.txt")
    table = token_table()
    build_vectors(root / "vectors.txt", table)
    return {
        "root": root,
        "catalog": root / "manifest.txt",
        "images": root / "views",
        "vectors": root / "vectors.txt",
        "table": table,
    }


@pytest.fixture(scope="session")
def extraction(corpus):
    out = corpus["root"] / "store.bin"
    return run(ExtractJob(
        catalog=str(corpus["catalog"]),
        image_root=str(corpus["images"]),
        word_vectors=str(corpus["vectors"]),
        out=str(out),
        weights="seeded:0",
    ))
