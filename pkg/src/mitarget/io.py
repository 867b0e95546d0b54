"""File formats: native cubes, CSV spectra, JSON bag specs, truth and results.

Native cube layout (all little-endian)::

    bytes 0-7    magic  b"MISIG1\\0\\0"
    bytes 8-23   uint32 rows, cols, bands, reserved (0)
    bytes 24-    float32 payload, band-interleaved by pixel, row-major

Detection maps and grid fields use the same layout with ``bands == 1``.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .bags import Bag, BagSet, Label
from .errors import InputError
from .evaluation import DetectionMap, GridSearchResult, RocCurve
from .evolution import EAConfig, EstimationResult, MutationParams
from .objective import ObjectiveConfig
from .synth import GroundTruth, Scene, SyntheticConfig

__all__ = [
    "MAGIC",
    "HEADER",
    "atomic_write",
    "write_native",
    "read_native",
    "load_scene",
    "save_scene",
    "save_scene_csv",
    "load_map",
    "save_map",
    "load_truth",
    "save_truth",
    "load_bags",
    "save_bags",
    "band_average",
    "RunConfig",
    "save_result",
    "load_result",
    "save_roc_csv",
    "save_grid",
]

PathLike = Union[str, os.PathLike]

MAGIC = b"MISIG1\x00\x00"
HEADER = struct.Struct("<8s4I")


def atomic_write(path: PathLike, data: Union[bytes, str]) -> None:
    """Write ``data`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _read_json(path: PathLike) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


# -- native binary ---------------------------------------------------------

def encode_native(cube: np.ndarray) -> bytes:
    cube = np.asarray(cube)
    if cube.ndim == 2:
        cube = cube[:, :, None]
    rows, cols, bands = cube.shape
    payload = np.ascontiguousarray(cube, dtype="<f4").tobytes()
    return HEADER.pack(MAGIC, rows, cols, bands, 0) + payload


def write_native(path: PathLike, cube: np.ndarray) -> None:
    atomic_write(path, encode_native(cube))


def decode_native(raw: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(raw) < HEADER.size:
        raise InputError(f"{source}: header truncated ({len(raw)} of {HEADER.size} bytes)")
    magic, rows, cols, bands, _ = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InputError(f"{source}: bad magic {magic!r}")
    if rows < 1 or cols < 1 or bands < 1:
        raise InputError(f"{source}: empty extent {rows} x {cols} x {bands}")
    expected = HEADER.size + 4 * rows * cols * bands
    if len(raw) != expected:
        raise InputError(f"{source}: size mismatch, expected {expected} bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise InputError(f"{source}: non-finite values in payload")
    return data.reshape(rows, cols, bands)


def read_native(path: PathLike) -> np.ndarray:
    """Read a native file as a (rows, cols, bands) float64 array."""
    return decode_native(Path(path).read_bytes(), str(path))


def _is_native(path: PathLike) -> bool:
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head != MAGIC and head.startswith(MAGIC[:5]):
        raise InputError(f"{path}: bad magic {head!r}")
    return head == MAGIC


# -- scenes ----------------------------------------------------------------

def load_scene(path: PathLike, rows: Optional[int] = None, cols: Optional[int] = None) -> Scene:
    """Load a native cube, or a CSV file with one pixel per line.

    CSV files carry no extent; pass ``rows``/``cols`` (default: one column).
    Blank lines and lines starting with ``#`` are ignored.
    """
    if _is_native(path):
        cube = read_native(path)
        r, c, d = cube.shape
        if (rows is not None and rows != r) or (cols is not None and cols != c):
            raise InputError(f"{path}: extent {r} x {c} differs from requested {rows} x {cols}")
        return Scene(r, c, cube.reshape(r * c, d))

    spectra = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    spectra.append([float(v) for v in line.split(",")])
                except ValueError as exc:
                    raise InputError(f"{path}:{lineno}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path}: neither a native cube nor CSV text") from exc
    if not spectra:
        raise InputError(f"{path}: no pixels")
    if len({len(s) for s in spectra}) != 1:
        raise InputError(f"{path}: rows have differing band counts")
    X = np.array(spectra)
    if not np.all(np.isfinite(X)):
        raise InputError(f"{path}: non-finite values")
    n = len(X)
    if rows is None and cols is None:
        rows, cols = n, 1
    elif rows is None:
        rows = n // cols
    elif cols is None:
        cols = n // rows
    if rows * cols != n:
        raise InputError(f"{path}: {n} pixels do not fill a {rows} x {cols} extent")
    return Scene(rows, cols, X)


def save_scene(path: PathLike, scene: Scene) -> None:
    write_native(path, scene.cube)


def save_scene_csv(path: PathLike, scene: Scene) -> None:
    lines = [",".join(repr(float(v)) for v in px) for px in scene.pixels]
    atomic_write(path, "\n".join(lines) + "\n")


def band_average(scene: Scene, factor: int) -> Scene:
    """Average contiguous groups of ``factor`` bands.

    Leftover bands when ``factor`` does not divide the band count are folded
    into the last group.
    """
    if int(factor) < 1:
        raise InputError(f"band averaging factor must be >= 1, got {factor}")
    factor = int(factor)
    if factor == 1:
        return scene
    d = scene.bands
    n_out = max(1, d // factor)
    starts = np.arange(n_out) * factor
    sums = np.add.reduceat(scene.pixels, starts, axis=1)
    sizes = np.diff(np.append(starts, d))
    return Scene(scene.rows, scene.cols, sums / sizes)


# -- detection maps / truth ------------------------------------------------

def save_map(path: PathLike, dmap: DetectionMap) -> None:
    write_native(path, dmap.image)


def load_map(path: PathLike) -> DetectionMap:
    cube = read_native(path)
    if cube.shape[2] != 1:
        raise InputError(f"{path}: a detection map has one band, found {cube.shape[2]}")
    return DetectionMap(cube.shape[0], cube.shape[1], cube[:, :, 0])


def save_truth(path: PathLike, truth: GroundTruth) -> None:
    """Sparse JSON: only pixels with non-zero abundance are listed."""
    idx = np.flatnonzero(truth.abundance)
    doc = {
        "rows": truth.rows,
        "cols": truth.cols,
        "target": None if truth.target is None else truth.target.tolist(),
        "targets": [
            [int(i // truth.cols), int(i % truth.cols), float(truth.abundance[i])] for i in idx
        ],
    }
    atomic_write(path, _dumps(doc))


def load_truth(path: PathLike) -> GroundTruth:
    doc = _read_json(path)
    try:
        rows, cols = int(doc["rows"]), int(doc["cols"])
        abundance = np.zeros(rows * cols)
        for r, c, a in doc["targets"]:
            if not (0 <= r < rows and 0 <= c < cols):
                raise InputError(f"{path}: target ({r}, {c}) outside {rows} x {cols}")
            abundance[int(r) * cols + int(c)] = float(a)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed truth file ({exc})") from exc
    return GroundTruth(rows, cols, abundance, doc.get("target"))


# -- bag specs -------------------------------------------------------------

def _region_locations(entry: dict, scene: Scene, source: str):
    bag_id = entry.get("id")
    if "region" in entry:
        reg = entry["region"]
        try:
            r0, c0, r1, c1 = (int(reg[k]) for k in ("row0", "col0", "row1", "col1"))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{source}: bag {bag_id!r} has a malformed region") from exc
        if r1 < r0 or c1 < c0:
            raise InputError(f"{source}: bag {bag_id!r} region corners are reversed")
        locs = [(r, c) for r in range(r0, r1 + 1) for c in range(c0, c1 + 1)]
    elif "pixels" in entry:
        locs = [(int(r), int(c)) for r, c in entry["pixels"]]
    else:
        raise InputError(f"{source}: bag {bag_id!r} needs a 'region' or 'pixels'")
    for r, c in locs:
        if not (0 <= r < scene.rows and 0 <= c < scene.cols):
            raise InputError(
                f"{source}: bag {bag_id!r} pixel ({r}, {c}) outside {scene.rows} x {scene.cols} scene"
            )
    if not locs:
        raise InputError(f"{source}: bag {bag_id!r} is empty")
    return locs


def load_bags(path: PathLike, scene: Scene) -> BagSet:
    """Expand a JSON bag spec against ``scene``.

    The document is ``{"bags": [{"id", "label", "region" | "pixels"}, ...]}``
    where ``region`` holds inclusive ``row0, col0, row1, col1`` bounds and
    ``pixels`` an explicit ``[[row, col], ...]`` list.  Overlapping bags are
    allowed but produce a warning.
    """
    doc = _read_json(path)
    entries = doc.get("bags") if isinstance(doc, dict) else None
    if not isinstance(entries, list):
        raise InputError(f"{path}: expected an object with a 'bags' list")
    bags, owner = [], {}
    for entry in entries:
        bag_id = str(entry.get("id", ""))
        try:
            label = Label(entry.get("label"))
        except ValueError as exc:
            raise InputError(f"{path}: bag {bag_id!r} has label {entry.get('label')!r}") from exc
        if any(b.id == bag_id for b in bags):
            raise InputError(f"{path}: duplicate bag id {bag_id!r}")
        locs = _region_locations(entry, scene, str(path))
        for loc in locs:
            if loc in owner and owner[loc] != bag_id:
                warnings.warn(f"bags {owner[loc]!r} and {bag_id!r} overlap at {loc}", stacklevel=2)
                break
        for loc in locs:
            owner.setdefault(loc, bag_id)
        bags.append(Bag(label, tuple(scene.pixel(r, c) for r, c in locs), bag_id))
    return BagSet.from_bags(bags).checked()


def save_bags(path: PathLike, bags: BagSet) -> None:
    """Write a bag spec listing each bag's pixel locations explicitly."""
    entries = []
    for bag in bags.bags:
        if any(p.location is None for p in bag.pixels):
            raise InputError(f"bag {bag.id!r} has pixels without a location")
        entries.append({
            "id": bag.id,
            "label": bag.label.value,
            "pixels": [list(p.location) for p in bag.pixels],
        })
    atomic_write(path, _dumps({"bags": entries}))


# -- run configuration -----------------------------------------------------

def _ea_from_dict(d: Optional[dict], seed: int) -> EAConfig:
    d = dict(d or {})
    unknown = set(d) - {"n_pop", "n_iter", "mutation", "init", "patience"}
    if unknown:
        raise InputError(f"unknown ea config keys: {sorted(unknown)}")
    mut = d.get("mutation")
    if mut is not None:
        mut = MutationParams(
            float(mut.get("w_n", 0.8)),
            np.asarray(mut["sigma_n"], dtype=np.float64),
            np.asarray(mut["sigma_w"], dtype=np.float64),
        )
    return EAConfig(
        n_pop=int(d.get("n_pop", 50)),
        n_iter=int(d.get("n_iter", 500)),
        mutation=mut,
        seed=seed,
        init=d.get("init"),
        patience=d.get("patience"),
    )


@dataclass
class RunConfig:
    """Settings shared by the CLI subcommands.

    Every field has a default, so an empty document reproduces the
    two-band synthetic experiment.
    """

    seed: int = 0
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    ea: EAConfig = field(default_factory=EAConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    regularization: Optional[float] = None
    background_source: str = "scene"
    area_per_pixel: float = 1.0
    max_far: float = 1e-3
    band_average: int = 1

    KEYS = ("seed", "synthetic", "ea", "objective", "background", "roc", "band_average")

    @classmethod
    def from_dict(cls, d: Optional[dict], seed: Optional[int] = None) -> "RunConfig":
        d = dict(d or {})
        unknown = set(d) - set(cls.KEYS)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        seed = int(d.get("seed", 0)) if seed is None else int(seed)
        syn = dict(d.get("synthetic") or {})
        syn["seed"] = seed
        bg = dict(d.get("background") or {})
        source = bg.get("source", "scene")
        if source not in ("scene", "negative-bags"):
            raise InputError(f"background.source must be 'scene' or 'negative-bags', got {source!r}")
        reg = bg.get("regularization")
        if reg is not None and not float(reg) >= 0:
            raise InputError("background.regularization must be nonnegative")
        rc = dict(d.get("roc") or {})
        cfg = cls(
            seed=seed,
            synthetic=SyntheticConfig.from_dict(syn),
            ea=_ea_from_dict(d.get("ea"), seed),
            objective=ObjectiveConfig.from_dict(d.get("objective")),
            regularization=None if reg is None else float(reg),
            background_source=source,
            area_per_pixel=float(rc.get("area_per_pixel", 1.0)),
            max_far=float(rc.get("max_far", 1e-3)),
            band_average=int(d.get("band_average", 1)),
        )
        if not cfg.area_per_pixel > 0 or not cfg.max_far > 0:
            raise InputError("roc.area_per_pixel and roc.max_far must be positive")
        if cfg.band_average < 1:
            raise InputError("band_average must be >= 1")
        return cfg

    @classmethod
    def load(cls, path: Optional[PathLike], seed: Optional[int] = None) -> "RunConfig":
        return cls.from_dict(_read_json(path) if path else None, seed)


# -- results ---------------------------------------------------------------

def save_result(path: PathLike, result: EstimationResult, extra: Optional[dict] = None) -> None:
    doc = result.to_dict()
    if extra:
        doc.update(extra)
    atomic_write(path, _dumps(doc))


def load_result(path: PathLike) -> dict:
    doc = _read_json(path)
    if "best_signature" not in doc:
        raise InputError(f"{path}: no best_signature in result document")
    return doc


def save_roc_csv(path: PathLike, curve: RocCurve) -> None:
    lines = ["threshold,far,pd"]
    lines += [f"{t!r},{f!r},{p!r}" for t, f, p in curve.points]
    atomic_write(path, "\n".join(lines) + "\n")


def save_grid(field_path: PathLike, json_path: PathLike, grid: GridSearchResult) -> None:
    """Dense objective field as a one-band native file plus a JSON summary.

    ``-inf`` cells (lattice points on the background mean) are stored as the
    lowest finite float32.
    """
    values = np.where(np.isfinite(grid.values), grid.values, np.finfo(np.float32).min)
    write_native(field_path, values)
    doc = {
        "argmax": [float(v) for v in grid.argmax],
        "argmax_value": grid.argmax_value,
        "bounds": [list(b) for b in grid.bounds],
        "step": grid.step,
        "shape": list(grid.values.shape),
        "evaluations": grid.evaluations,
        "field": os.path.basename(str(field_path)),
    }
    atomic_write(json_path, _dumps(doc))
