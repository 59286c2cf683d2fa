"""Detection evaluation harness.

Runs a backend across an image corpus with per-image ground-truth label
sets and reports detected-object count, classification accuracy, and
average per-image backend time — the aggregate and per-object layouts of
the original evaluation tables.

Accuracy here is the percentage of detections whose class appears in the
image's ground-truth set (per-detection; a per-image average is available
behind a flag). Timing covers the backend round-trip only, not image
decode. Both choices are recorded assumptions: the source material never
defines its metric precisely.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .detection import Detection, DetectionBackend, detect
from .errors import EmptyCorpus, MissingGroundTruth

MISS_CELL = "X"


@dataclass(frozen=True)
class GroundTruth:
    """Expected class names per corpus image, keyed by file name."""

    labels: dict[str, frozenset[str]]

    @staticmethod
    def from_file(path: str | Path) -> "GroundTruth":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise MissingGroundTruth("ground truth must be an object mapping image to classes")
        labels = {}
        for key, classes in raw.items():
            if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
                raise MissingGroundTruth(f"ground truth for {key!r} must be a list of class names")
            labels[str(key)] = frozenset(classes)
        return GroundTruth(labels)

    def for_image(self, path: Path) -> frozenset[str]:
        for key in (path.name, str(path)):
            if key in self.labels:
                return self.labels[key]
        raise MissingGroundTruth(f"no ground truth for image {path.name!r}")


@dataclass(frozen=True)
class ImageResult:
    image: str
    truth: frozenset[str]
    detections: tuple[Detection, ...]
    time_s: float


@dataclass(frozen=True)
class BenchReport:
    backend_id: str
    n_images: int
    detected_objects: int
    accuracy_pct: float | None  # undefined (None) when nothing was detected
    avg_time_s: float
    total_time_s: float
    per_class: dict[str, str]
    per_image_accuracy_pct: float | None = None

    def to_dict(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "n_images": self.n_images,
            "detected_objects": self.detected_objects,
            "accuracy_pct": self.accuracy_pct,
            "avg_time_s": self.avg_time_s,
            "total_time_s": self.total_time_s,
            "per_class": dict(self.per_class),
            "per_image_accuracy_pct": self.per_image_accuracy_pct,
        }

    def table_row(self) -> dict:
        return {
            "method": self.backend_id,
            "detected": self.detected_objects,
            "accuracy_pct": self.accuracy_pct,
            "avg_time_ms": self.avg_time_s * 1000.0,
        }

    def render(self) -> str:
        lines = [
            f"backend:           {self.backend_id}",
            f"images:            {self.n_images}",
            f"detected objects:  {self.detected_objects}",
            f"accuracy:          "
            + ("undefined (nothing detected)" if self.accuracy_pct is None
               else f"{format_quantity(self.accuracy_pct)} %"),
            f"avg time / image:  {format_quantity(self.avg_time_s * 1000.0)} ms",
            f"total time:        {format_quantity(self.total_time_s * 1000.0)} ms",
        ]
        if self.per_image_accuracy_pct is not None:
            lines.append(f"per-image accuracy: {format_quantity(self.per_image_accuracy_pct)} %")
        if self.per_class:
            width = max(len(c) for c in self.per_class)
            lines.append("per-class results:")
            for cls in sorted(self.per_class):
                lines.append(f"  {cls.ljust(width)}  {self.per_class[cls]}")
        return "\n".join(lines)


def format_score_pct(score: float) -> str:
    """0.91 -> "91"; 0.989 -> "98.90" (two decimals unless integral)."""
    v = score * 100.0
    if abs(v - round(v)) < 1e-9:
        return str(int(round(v)))
    return f"{v:.2f}"


def format_quantity(v: float) -> str:
    if abs(v - round(v)) < 1e-9:
        return str(int(round(v)))
    return f"{v:.1f}"


def score_cell(detections: tuple[Detection, ...] | list[Detection], target: str) -> str:
    """Table cell for one object crop: hit score, miss, or mislabel."""
    if not detections:
        return MISS_CELL
    hits = [d for d in detections if d.class_name == target]
    if hits:
        return format_score_pct(max(h.score for h in hits))
    top = min(detections, key=lambda d: (-d.score, d.class_name))
    return f"{format_score_pct(top.score)} ({top.class_name})"


def assemble_report(backend_id: str, results: list[ImageResult],
                    per_image: bool = False) -> BenchReport:
    """Pure aggregation: same results always produce the identical report."""
    results = sorted(results, key=lambda r: r.image)
    detected = sum(len(r.detections) for r in results)
    correct = sum(
        sum(1 for d in r.detections if d.class_name in r.truth) for r in results)
    accuracy = None if detected == 0 else 100.0 * correct / detected
    times = [r.time_s for r in results]
    total_time = sum(times)
    avg_time = total_time / len(results) if results else 0.0

    per_image_acc = None
    if per_image:
        ratios = []
        for r in results:
            if r.detections:
                ratios.append(sum(1 for d in r.detections if d.class_name in r.truth)
                              / len(r.detections))
        per_image_acc = 100.0 * sum(ratios) / len(ratios) if ratios else None

    per_class: dict[str, str] = {}
    for cls in sorted({c for r in results for c in r.truth}):
        relevant = [r for r in results if cls in r.truth]
        all_dets = [d for r in relevant for d in r.detections]
        per_class[cls] = score_cell(all_dets, cls)

    return BenchReport(
        backend_id=backend_id,
        n_images=len(results),
        detected_objects=detected,
        accuracy_pct=accuracy,
        avg_time_s=avg_time,
        total_time_s=total_time,
        per_class=per_class,
        per_image_accuracy_pct=per_image_acc,
    )


def run_benchmark(backend: DetectionBackend, corpus_dir: str | Path,
                  ground_truth: GroundTruth, min_score: float = 0.0,
                  parallelism: int = 1, per_image: bool = False,
                  subset: int | None = None, seed: int | None = None) -> BenchReport:
    corpus = sorted(Path(corpus_dir).glob("*.png"))
    if not corpus:
        raise EmptyCorpus(f"no .png images under {corpus_dir}")
    if subset is not None and 0 < subset < len(corpus):
        corpus = sorted(random.Random(seed).sample(corpus, subset))
    truths = [ground_truth.for_image(p) for p in corpus]  # fail before any detection work
    images = [p.read_bytes() for p in corpus]

    def run_one(i: int) -> ImageResult:
        outcome = detect(backend, images[i], min_score)
        return ImageResult(image=corpus[i].name, truth=truths[i],
                           detections=outcome.detections,
                           time_s=outcome.latency_ms / 1000.0)

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(run_one, range(len(corpus))))
    else:
        results = [run_one(i) for i in range(len(corpus))]
    return assemble_report(backend.info().backend_id, results, per_image=per_image)


def per_object_report(results: dict[str, dict[str, list[Detection]]],
                      target_classes: list[str]) -> dict[str, dict[str, str]]:
    """Per-object detection table: one cell per (target class, backend).

    ``results`` maps backend id -> target class -> detections for that
    object's crop. Cells follow the hit / "X" / "score (predicted)"
    convention.
    """
    table: dict[str, dict[str, str]] = {}
    for backend_id, by_class in results.items():
        table[backend_id] = {
            cls: score_cell(by_class.get(cls, []), cls) for cls in target_classes
        }
    return table


def render_aggregate_table(rows: list[dict]) -> str:
    """Aligned #Detected / Accuracy / Avg Time table over backend aggregates.

    Row fields: method, detected, accuracy_pct (may be None), avg_time_ms.
    """
    header = ("Method", "#Detected", "Accuracy (%)", "Avg Time (ms)")
    rendered = [header]
    for row in rows:
        acc = row["accuracy_pct"]
        rendered.append((
            str(row["method"]),
            format_quantity(float(row["detected"])),
            "-" if acc is None else format_quantity(float(acc)),
            format_quantity(float(row["avg_time_ms"])),
        ))
    widths = [max(len(r[i]) for r in rendered) for i in range(len(header))]
    lines = []
    for r in rendered:
        cells = [r[0].ljust(widths[0])] + [r[i].rjust(widths[i]) for i in range(1, len(header))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def render_per_object_table(table: dict[str, dict[str, str]],
                            target_classes: list[str]) -> str:
    backends = sorted(table)
    header = ["Object"] + backends
    rows = [header]
    for cls in target_classes:
        rows.append([cls] + [table[b].get(cls, MISS_CELL) for b in backends])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join(
        "  ".join(r[i].ljust(widths[i]) for i in range(len(header))).rstrip()
        for r in rows
    )
