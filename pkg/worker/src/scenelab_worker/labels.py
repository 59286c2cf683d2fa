"""COCO label sets.

Detection models trained on COCO emit category ids in the original 91-id
space, which has gaps; the examination service works with the 80 usable
class names. Both views live here so the id->name mapping and the
registration label set cannot drift apart.
"""

# 91 slots as the detection models index them: slot 0 is background and the
# gaps are slots the dataset never used.
_GAP = None

COCO91_SLOTS = (
    _GAP,  # 0: background
    "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train",
    "truck", "boat", "traffic light", "fire hydrant", _GAP, "stop sign",
    "parking meter", "bench", "bird", "cat", "dog", "horse", "sheep", "cow",
    "elephant", "bear", "zebra", "giraffe", _GAP, "backpack", "umbrella",
    _GAP, _GAP, "handbag", "tie", "suitcase", "frisbee", "skis", "snowboard",
    "sports ball", "kite", "baseball bat", "baseball glove", "skateboard",
    "surfboard", "tennis racket", "bottle", _GAP, "wine glass", "cup",
    "fork", "knife", "spoon", "bowl", "banana", "apple", "sandwich",
    "orange", "broccoli", "carrot", "hot dog", "pizza", "donut", "cake",
    "chair", "couch", "potted plant", "bed", _GAP, "dining table", _GAP,
    _GAP, "toilet", _GAP, "tv", "laptop", "mouse", "remote", "keyboard",
    "cell phone", "microwave", "oven", "toaster", "sink", "refrigerator",
    _GAP, "book", "clock", "vase", "scissors", "teddy bear", "hair drier",
    "toothbrush",
)

#: the 80 usable classes in canonical order — the registration label set
COCO_CLASSES = tuple(name for name in COCO91_SLOTS if name is not None)

#: model category id -> class name (background and gaps absent)
COCO91_TO_NAME = {i: name for i, name in enumerate(COCO91_SLOTS) if name is not None}
