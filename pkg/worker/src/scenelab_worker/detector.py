"""Model seam: decode an image, run a detector, normalize its boxes.

A model here is any callable taking a PIL image and returning
PixelDetection objects with boxes in pixel coordinates. The default is
torchvision's Faster R-CNN (loaded lazily so the package works without
torch when a different model is injected).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

from PIL import Image, UnidentifiedImageError

from .labels import COCO91_TO_NAME


class InvalidImageError(Exception):
    """The classify payload is not a decodable image."""


@dataclass(frozen=True)
class PixelDetection:
    """One raw model hit: class name, confidence, pixel-space box."""

    class_name: str
    score: float
    box: tuple[float, float, float, float]  # x0, y0, x1, y1 in pixels


ModelFn = Callable[[Image.Image], Sequence[PixelDetection]]


def decode_image(data: bytes) -> Image.Image:
    try:
        image = Image.open(io.BytesIO(data))
        image.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise InvalidImageError(f"payload is not a decodable image: {exc}") from exc
    if image.width < 1 or image.height < 1:
        raise InvalidImageError("image has no pixels")
    return image.convert("RGB")


def normalize_box(box: Sequence[float], width: int, height: int
                  ) -> tuple[float, float, float, float] | None:
    """Pixel box -> unit square, clamped; None when nothing survives."""
    x0, y0, x1, y1 = (float(v) for v in box)
    if not all(math.isfinite(v) for v in (x0, y0, x1, y1)):
        return None
    x0, x1 = max(0.0, x0 / width), min(1.0, x1 / width)
    y0, y1 = max(0.0, y0 / height), min(1.0, y1 / height)
    if x0 >= x1 or y0 >= y1:
        return None
    return (x0, y0, x1, y1)


def run_model(model: ModelFn, image_bytes: bytes) -> list[dict]:
    """Decode, detect, and shape the wire detections (best score first).

    Model exceptions propagate: the caller decides how to report them.
    """
    image = decode_image(image_bytes)
    out = []
    for det in model(image):
        if not det.class_name or not (0.0 <= det.score <= 1.0):
            continue
        bbox = normalize_box(det.box, image.width, image.height)
        if bbox is None:
            continue
        out.append({"class": det.class_name, "score": float(det.score), "bbox": list(bbox)})
    out.sort(key=lambda d: (-d["score"], d["class"]))
    return out


def load_torchvision_model(device: str = "cpu") -> ModelFn:
    """Faster R-CNN with default COCO weights, wrapped as a ModelFn.

    Downloads weights on first use; raises RuntimeError when torch,
    torchvision or the weights are unavailable.
    """
    try:
        import torch
        from torchvision.models.detection import (
            FasterRCNN_ResNet50_FPN_Weights,
            fasterrcnn_resnet50_fpn,
        )
        from torchvision.transforms.functional import pil_to_tensor
    except ImportError as exc:
        raise RuntimeError(f"torchvision model support is not installed: {exc}") from exc

    try:
        weights = FasterRCNN_ResNet50_FPN_Weights.DEFAULT
        net = fasterrcnn_resnet50_fpn(weights=weights)
    except Exception as exc:  # weight download/load failure
        raise RuntimeError(f"cannot load detection weights: {exc}") from exc
    net.eval()
    net.to(device)

    def model(image: Image.Image) -> list[PixelDetection]:
        tensor = pil_to_tensor(image).to(device).float() / 255.0
        with torch.no_grad():
            result = net([tensor])[0]
        dets = []
        for box, label, score in zip(result["boxes"], result["labels"], result["scores"]):
            name = COCO91_TO_NAME.get(int(label))
            if name is None:
                continue  # background or an unused dataset slot
            x0, y0, x1, y1 = (float(v) for v in box)
            dets.append(PixelDetection(name, float(score), (x0, y0, x1, y1)))
        return dets

    return model
