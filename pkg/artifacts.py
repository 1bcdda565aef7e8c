"""Output writers: metrics CSV, sample/latent CSVs, PGM grids, Parzen reports"""
import csv
import math
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from errors import ValidationError
from eval_parzen import ParzenReport
from model_train import MetricsRow

PathLike = Union[str, Path]

METRICS_HEADER = ("epoch", "recon_loss", "discrepancy", "wall_time_s")


class MetricsWriter:
    """
    Append-only metrics CSV

    Wall time is written as 0.0 unless `record_wall_time` is set, so reruns
    of the same config produce byte-identical files.
    """

    def __init__(self, path: PathLike, record_wall_time: bool = False):
        self.path = Path(path)
        self.record_wall_time = record_wall_time
        if not self.path.exists() or self.path.stat().st_size == 0:
            with open(self.path, "w", newline="", encoding="utf-8") as f:
                csv.writer(f).writerow(METRICS_HEADER)

    def append(self, row: MetricsRow) -> None:
        wall = row.wall_time if self.record_wall_time else 0.0
        with open(self.path, "a", newline="", encoding="utf-8") as f:
            csv.writer(f).writerow((row.epoch, repr(float(row.recon_loss)),
                                    repr(float(row.discrepancy)), repr(float(wall))))

    def __call__(self, row: MetricsRow, _trainer=None) -> None:
        self.append(row)


def write_matrix_csv(matrix: np.ndarray, path: PathLike, header: Optional[Sequence[str]] = None) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        if header is not None:
            writer.writerow(header)
        for row in np.asarray(matrix, dtype=np.float64):
            writer.writerow([repr(float(v)) for v in row])
    return path


def write_latent_csv(latent: np.ndarray, path: PathLike, labels: Optional[np.ndarray] = None) -> Path:
    """z0..z{k-1} columns plus a label column when labels exist"""
    latent = np.asarray(latent, dtype=np.float64)
    header = [f"z{i}" for i in range(latent.shape[1])]
    if labels is not None:
        header.append("label")
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i, row in enumerate(latent):
            values = [repr(float(v)) for v in row]
            if labels is not None:
                values.append(int(labels[i]))
            writer.writerow(values)
    return path


def to_pixels(values: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm_grid(images: np.ndarray, image_shape: Tuple[int, int], grid_width: int,
                   path: PathLike) -> Path:
    """
    Tile images into a binary PGM (P5, maxval 255)

    Rows = ceil(n / grid_width); unused cells stay black.
    """
    if len(image_shape) != 2:
        raise ValidationError(f"PGM grids need 2-D image shapes, got {image_shape}")
    if grid_width < 1:
        raise ValidationError("grid width must be >= 1")
    images = np.asarray(images, dtype=np.float64)
    h, w = image_shape
    n = images.shape[0]
    cols = min(grid_width, n)
    rows = math.ceil(n / grid_width)
    canvas = np.zeros((rows * h, cols * w), dtype=np.uint8)
    for i in range(n):
        r, c = divmod(i, grid_width)
        canvas[r * h:(r + 1) * h, c * w:(c + 1) * w] = to_pixels(images[i].reshape(h, w))
    path = Path(path)
    with open(path, "wb") as f:
        f.write(f"P5\n{canvas.shape[1]} {canvas.shape[0]}\n255\n".encode("ascii"))
        f.write(canvas.tobytes())
    return path


def read_pgm(path: PathLike) -> np.ndarray:
    """Read back a P5 file written by write_pgm_grid"""
    raw = Path(path).read_bytes()
    magic, dims, maxval, payload = raw.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValidationError(f"{path}: not an 8-bit P5 PGM")
    width, height = (int(v) for v in dims.split())
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def write_parzen_report(report: ParzenReport, out_dir: PathLike) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    text_path = out_dir / "parzen.txt"
    csv_path = out_dir / "parzen.csv"
    text_path.write_text(report.to_text(), encoding="utf-8")
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(ParzenReport.HEADER)
        writer.writerow(report.row())
    return text_path, csv_path
