"""Deterministic artifact writers; every file carries the resolved config hash."""

from typing import Any, Optional, Sequence
import csv
import json
import logging
import os

import numpy as np
import flax.struct

from phdyn.measures import HistogramMeasure, histogram_rows, histogram_to_bytes

logger = logging.getLogger(__name__)

PALETTE = ((230, 25, 75), (60, 180, 75), (0, 130, 200), (255, 225, 25), (145, 30, 180), (70, 240, 240),
           (245, 130, 48), (240, 50, 230), (210, 245, 60), (250, 190, 190), (0, 128, 128), (170, 110, 40))


@flax.struct.dataclass
class Artifact:
    name: str = flax.struct.field(pytree_node=False)
    kind: str = flax.struct.field(pytree_node=False)  # csv | json | ppm | hist
    payload: Any = flax.struct.field(pytree_node=False)
    header: Optional[tuple[str, ...]] = flax.struct.field(pytree_node=False, default=None)


def jsonable(obj: Any) -> Any:
    """Converts numpy scalars and arrays (and tuples) into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj: Any, config_sha256: str) -> str:
    return json.dumps({**jsonable(obj), 'config_sha256': config_sha256}, sort_keys=True, indent=2) + '\n'


def write_json(path: str, obj: dict, config_sha256: str) -> None:
    with open(path, 'w') as file:
        file.write(dumps(obj, config_sha256))


def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence[Any]], config_sha256: str) -> None:
    with open(path, 'w', newline='') as file:
        file.write(f"# config_sha256={config_sha256}\n")
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in jsonable(list(row))])


def label_pixels(labels: np.ndarray) -> np.ndarray:
    """RGB image of a label grid: black for 0, palette colors for 1, 2, ..."""
    colors = np.array(((0, 0, 0),) + PALETTE, dtype=np.int64)
    index = np.where(labels > 0, (labels - 1) % len(PALETTE) + 1, 0)
    return colors[index]


def write_ppm(path: str, labels: np.ndarray, config_sha256: str) -> None:
    """Plain (P3) portable pixmap with one pixel per grid cell, first grid row on top."""
    pixels = label_pixels(np.asarray(labels))
    height, width = labels.shape
    with open(path, 'w') as file:
        file.write(f"P3\n# config_sha256={config_sha256}\n{width} {height}\n255\n")
        for row in pixels:
            file.write(" ".join(f"{r} {g} {b}" for r, g, b in row) + "\n")


def write_histogram(path: str, mu: HistogramMeasure, config_sha256: str) -> None:
    with open(path, 'wb') as file:
        file.write(histogram_to_bytes(mu, config_sha256))
    d = len(mu.resolution)
    header = [f"i{k}" for k in range(d)] + [f"x{k}" for k in range(d)] + ['mass']
    write_csv(os.path.splitext(path)[0] + '.csv', header, histogram_rows(mu), config_sha256)


def write_artifacts(directory: str, artifacts: Sequence[Artifact], config_sha256: str) -> list[str]:
    """Writes every artifact into `directory` and returns the paths written."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for artifact in artifacts:
        path = os.path.join(directory, artifact.name)
        if artifact.kind == 'csv':
            write_csv(path, artifact.header, artifact.payload, config_sha256)
        elif artifact.kind == 'json':
            write_json(path, artifact.payload, config_sha256)
        elif artifact.kind == 'ppm':
            write_ppm(path, artifact.payload, config_sha256)
        elif artifact.kind == 'hist':
            write_histogram(path, artifact.payload, config_sha256)
        else:
            raise ValueError(f"Unknown artifact kind {artifact.kind}")
        paths.append(path)
        logger.info(f"Wrote {path}")
    return paths
