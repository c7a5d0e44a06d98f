"""Per-view image features from a frozen convolutional backbone.

Every object is photographed from five canonical views, stored as

    {image_root}/{object_id}/{view}.png

A view is resized so its short side is 256, center-cropped to 224, and
normalized with the backbone's training statistics; matching the crop
geometry the backbone was trained with matters more than keeping the
full frame.  The feature is the spatially pooled activation just before
the classifier head, 2048 numbers per view.
"""

from __future__ import annotations

import os

import numpy as np

VIEWS = ("front", "back", "left", "right", "top-down")
FEATURE_DIM = 2048

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


class MissingViewError(FileNotFoundError):
    """An object lacks one or more of the five canonical view images."""


def view_path(root, object_id: str, view: str) -> str:
    return os.path.join(os.fspath(root), object_id, f"{view}.png")


def check_views(root, object_ids) -> None:
    """Verify every view image exists before any work starts.

    Extraction writes nothing until this passes, so a half-populated image
    tree can never leave a store behind that silently misses views.
    """
    missing = [
        f"{oid}/{view}.png"
        for oid in object_ids
        for view in VIEWS
        if not os.path.isfile(view_path(root, oid, view))
    ]
    if missing:
        raise MissingViewError("missing view images: " + ", ".join(missing))


class ViewEncoder:
    """Frozen resnet152 trunk, eval mode, no gradients.

    weights selects the parameters:

      "pretrained"   the torchvision imagenet checkpoint; downloads on
                     first use, so it needs network access
      "seeded:<n>"   fresh random initialization from torch seed n; the
                     feature geometry is meaningless but the pipeline is
                     exercised end to end and runs offline, which is what
                     the tests use

    Work is pinned to one thread so repeated runs reduce in the same
    order and the written store is byte for byte reproducible.
    """

    def __init__(self, weights: str = "pretrained"):
        import torch
        import torchvision
        from torchvision import transforms

        torch.set_num_threads(1)
        if weights == "pretrained":
            net = torchvision.models.resnet152(
                weights=torchvision.models.ResNet152_Weights.IMAGENET1K_V1)
        elif weights.startswith("seeded:"):
            try:
                seed = int(weights.split(":", 1)[1])
            except ValueError:
                raise ValueError(f"bad seed in weights spec {weights!r}") from None
            torch.manual_seed(seed)
            net = torchvision.models.resnet152(weights=None)
        else:
            raise ValueError(
                f"weights must be 'pretrained' or 'seeded:<int>', got {weights!r}")
        net.eval()
        self._torch = torch
        self._trunk = torch.nn.Sequential(*list(net.children())[:-1])
        self._prep = transforms.Compose([
            transforms.Resize(256),
            transforms.CenterCrop(224),
            transforms.ToTensor(),
            transforms.Normalize(_IMAGENET_MEAN, _IMAGENET_STD),
        ])
        self.dim = FEATURE_DIM

    def encode(self, paths) -> np.ndarray:
        """Encode images into a (len(paths), 2048) float32 array."""
        from PIL import Image

        torch = self._torch
        batch = []
        for p in paths:
            with Image.open(p) as img:
                batch.append(self._prep(img.convert("RGB")))
        with torch.no_grad():
            feats = self._trunk(torch.stack(batch))
        return feats.reshape(len(batch), -1).numpy().astype(np.float32, copy=False)
