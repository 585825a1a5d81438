"""File formats: header+raw cubes, ground-truth tables, reports, map images.

The cube format is a deliberately small ENVI-style subset: plain-text header
next to a raw binary file, little-endian only, float32 or uint16 samples,
any of the three classic interleaves on input, always band-sequential float32
on output. Everything else (reports, tables, configs) is text.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from .core import GroundTruth, HyperCube, _locked
from .errors import FormatError

log = logging.getLogger(__name__)

HEADER_MAGIC = "ENVI"
KNOWN_KEYS = frozenset({
    "samples", "lines", "bands", "data type", "interleave", "byte order",
    "wavelength", "bbl", "header offset",
})
REQUIRED_KEYS = ("samples", "lines", "bands", "data type", "interleave", "byte order")
DTYPE_CODES = {4: np.dtype("<f4"), 12: np.dtype("<u2")}
INTERLEAVES = ("bsq", "bil", "bip")

SUM_TOL_SILENT = 1e-6
SUM_TOL_WARN = 1e-3


def _paths(path) -> tuple[Path, Path]:
    """Map a header path (or bare base path) to (header, raw) siblings."""
    p = Path(path)
    base = p.with_suffix("") if p.suffix == ".hdr" else p
    return base.with_suffix(".hdr"), base.with_suffix(".raw")


def _parse_header(text: str, origin: Path) -> dict[str, str]:
    # ENVI-style: "key = value" lines; a value opening with { runs to the
    # matching } possibly across lines.
    lines = text.splitlines()
    if lines and lines[0].strip() == HEADER_MAGIC:
        lines = lines[1:]
    fields: dict[str, str] = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line or "=" not in line:
            continue
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if value.startswith("{"):
            while "}" not in value and i < len(lines):
                value += " " + lines[i].strip()
                i += 1
            if "}" not in value:
                raise FormatError(f"{origin}: unterminated {{ }} value for key '{key}'")
            value = value[1:value.index("}")].strip()
        fields[key] = value
    unknown = sorted(set(fields) - KNOWN_KEYS)
    if unknown:
        log.info("%s: ignoring unsupported header keys: %s", origin, ", ".join(unknown))
    return fields


def _header_int(fields: dict[str, str], key: str, origin: Path) -> int:
    if key not in fields:
        raise FormatError(f"{origin}: missing required header key '{key}'")
    try:
        return int(fields[key])
    except ValueError as exc:
        raise FormatError(f"{origin}: header key '{key}' is not an integer: "
                          f"{fields[key]!r}") from exc


def _float_list(raw: str, origin: Path, key: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in raw.split(",") if tok.strip() != ""])
    except ValueError as exc:
        raise FormatError(f"{origin}: malformed '{key}' list") from exc


def read_cube(header_path) -> HyperCube:
    """Load a cube from its header file and the sibling raw file.

    Accepts data type 4 (float32) or 12 (uint16), little-endian only, any of
    bsq/bil/bip; the result is always canonical band-sequential float64 in
    memory. Missing wavelengths fall back to a uniform 400-1000 nm grid.
    """
    hdr_path, raw_path = _paths(header_path)
    if not hdr_path.exists():
        raise FormatError(f"header file not found: {hdr_path}")
    fields = _parse_header(hdr_path.read_text(), hdr_path)

    samples = _header_int(fields, "samples", hdr_path)
    nlines = _header_int(fields, "lines", hdr_path)
    bands = _header_int(fields, "bands", hdr_path)
    if min(samples, nlines, bands) < 1:
        raise FormatError(f"{hdr_path}: samples/lines/bands must be positive")
    dtype_code = _header_int(fields, "data type", hdr_path)
    if dtype_code not in DTYPE_CODES:
        raise FormatError(f"{hdr_path}: unsupported data type {dtype_code} "
                          f"(supported: {sorted(DTYPE_CODES)})")
    byte_order = _header_int(fields, "byte order", hdr_path)
    if byte_order != 0:
        raise FormatError(f"{hdr_path}: byte order {byte_order} not supported; "
                          "only little-endian (0) data is accepted")
    if "interleave" not in fields:
        raise FormatError(f"{hdr_path}: missing required header key 'interleave'")
    interleave = fields["interleave"].lower()
    if interleave not in INTERLEAVES:
        raise FormatError(f"{hdr_path}: unsupported interleave {interleave!r} "
                          f"(supported: {', '.join(INTERLEAVES)})")

    offset = int(fields.get("header offset", "0"))
    dtype = DTYPE_CODES[dtype_code]
    expected = samples * nlines * bands * dtype.itemsize + offset
    if not raw_path.exists():
        raise FormatError(f"raw file not found: {raw_path}")
    blob = raw_path.read_bytes()
    if len(blob) != expected:
        raise FormatError(f"{raw_path}: raw size mismatch, expected {expected} "
                          f"bytes but found {len(blob)}")
    flat = np.frombuffer(blob, dtype=dtype, offset=offset)

    if interleave == "bsq":
        data = flat.reshape(bands, nlines, samples)
    elif interleave == "bil":
        data = flat.reshape(nlines, bands, samples).transpose(1, 0, 2)
    else:  # bip
        data = flat.reshape(nlines, samples, bands).transpose(2, 0, 1)

    if "wavelength" in fields:
        wavelengths = _float_list(fields["wavelength"], hdr_path, "wavelength")
        if wavelengths.size != bands:
            raise FormatError(f"{hdr_path}: wavelength list has {wavelengths.size} "
                              f"entries for {bands} bands")
    else:
        wavelengths = np.linspace(400.0, 1000.0, bands)

    band_mask = None
    if "bbl" in fields:
        bbl = _float_list(fields["bbl"], hdr_path, "bbl")
        if bbl.size != bands:
            raise FormatError(f"{hdr_path}: bbl list has {bbl.size} entries "
                              f"for {bands} bands")
        band_mask = bbl > 0.5
    return HyperCube(data.astype(np.float64), wavelengths, band_mask=band_mask)


def write_cube(cube: HyperCube, path) -> None:
    """Write header+raw (bsq, float32, little-endian) next to each other.

    Reading the pair back reproduces the stored float32 samples bit for bit.
    """
    hdr_path, raw_path = _paths(path)
    bands, height, width = cube.data.shape
    payload = np.ascontiguousarray(cube.data, dtype="<f4")
    wl = ", ".join(f"{w:.6f}" for w in cube.wavelengths)
    lines = [
        HEADER_MAGIC,
        f"samples = {width}",
        f"lines = {height}",
        f"bands = {bands}",
        "header offset = 0",
        "data type = 4",
        "interleave = bsq",
        "byte order = 0",
        f"wavelength = {{ {wl} }}",
    ]
    if not np.all(cube.band_mask):
        bbl = ", ".join("1" if good else "0" for good in cube.band_mask)
        lines.append(f"bbl = {{ {bbl} }}")
    try:
        hdr_path.write_text("\n".join(lines) + "\n")
        raw_path.write_bytes(payload.tobytes())
    except OSError as exc:
        raise OSError(f"failed writing cube to {hdr_path} / {raw_path}: {exc}") from exc


@dataclass(frozen=True)
class MixtureTable:
    """Ground-truth fractions for a scene, one row per mixture id."""

    materials: tuple[str, ...]
    ids: tuple[str, ...]
    fractions: np.ndarray  # (n_mixtures, n_materials), rows sum to one

    def __post_init__(self):
        arr = _locked(self.fractions, np.float64, 2, "fractions")
        if arr.shape != (len(self.ids), len(self.materials)):
            raise FormatError("fractions shape does not match ids x materials")
        object.__setattr__(self, "fractions", arr)

    def vector(self, mixture_id: str) -> np.ndarray:
        if mixture_id not in self.ids:
            raise KeyError(f"unknown mixture id {mixture_id!r}; "
                           f"known: {', '.join(self.ids)}")
        return self.fractions[self.ids.index(mixture_id)]

    def truth(self, mixture_id: str) -> GroundTruth:
        return GroundTruth.uniform(self.vector(mixture_id))


def read_ground_truth(csv_path) -> MixtureTable:
    """Parse a mixture_id,material,fraction table into per-mixture vectors.

    Row sums within 1e-6 of one pass silently; within 1e-3 they pass with a
    warning (printed tables round to two decimals, e.g. three 33.33% entries);
    both cases are renormalized to an exact unit sum. Anything worse, or any
    negative fraction, is a format error.
    """
    path = Path(csv_path)
    if not path.exists():
        raise FormatError(f"ground-truth file not found: {path}")
    materials: list[str] = []
    rows: dict[str, dict[str, float]] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"mixture_id", "material", "fraction"}
        if reader.fieldnames is None or not need.issubset(reader.fieldnames):
            raise FormatError(f"{path}: expected columns mixture_id, material, fraction")
        for lineno, rec in enumerate(reader, start=2):
            mid = rec["mixture_id"].strip()
            material = rec["material"].strip()
            try:
                fraction = float(rec["fraction"])
            except (TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: bad fraction "
                                  f"{rec['fraction']!r}") from exc
            if fraction < 0.0:
                raise FormatError(f"{path}:{lineno}: negative fraction {fraction} "
                                  f"for material {material!r}")
            if material not in materials:
                materials.append(material)
            bucket = rows.setdefault(mid, {})
            if material in bucket:
                raise FormatError(f"{path}:{lineno}: duplicate material "
                                  f"{material!r} in mixture {mid!r}")
            bucket[material] = fraction
    if not rows:
        raise FormatError(f"{path}: no mixture rows")
    ids = tuple(rows)
    table = np.zeros((len(ids), len(materials)))
    for row_idx, mid in enumerate(ids):
        for col_idx, material in enumerate(materials):
            table[row_idx, col_idx] = rows[mid].get(material, 0.0)
        total = table[row_idx].sum()
        if abs(total - 1.0) > SUM_TOL_WARN:
            raise FormatError(f"{path}: mixture {mid!r} fractions sum to "
                              f"{total:.6f}, expected 1 within {SUM_TOL_WARN}")
        if abs(total - 1.0) > SUM_TOL_SILENT:
            warnings.warn(f"mixture {mid!r} fractions sum to {total:.6f}; "
                          "renormalizing (rounded table input)", stacklevel=2)
        table[row_idx] /= total
    return MixtureTable(tuple(materials), ids, table)


@dataclass(frozen=True)
class ReportRecord:
    """One algorithm run on one mixture: per-material means plus RMSE."""

    scene: str
    mixture: str
    algo: str
    materials: tuple[str, ...]
    mean_abundance: np.ndarray
    rmse: float

    def __post_init__(self):
        arr = _locked(self.mean_abundance, np.float64, 1, "mean_abundance")
        if arr.size != len(self.materials):
            raise FormatError("mean_abundance length does not match materials")
        object.__setattr__(self, "mean_abundance", arr)


REPORT_COLUMNS = ("scene", "mixture", "algo", "material", "mean_abundance", "rmse")


def _four(x: float) -> float:
    # one shared quantization so CSV text and JSON numbers agree exactly
    return float(f"{float(x):.4f}")


def _flatten_records(records) -> list[dict[str, object]]:
    return [
        {
            "scene": rec.scene, "mixture": rec.mixture, "algo": rec.algo,
            "material": material, "mean_abundance": _four(mean),
            "rmse": _four(rec.rmse),
        }
        for rec in records
        for material, mean in zip(rec.materials, rec.mean_abundance)
    ]


def _emit_report(flat: list[dict[str, object]], csv_file: Path, json_file: Path) -> None:
    with csv_file.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for row in flat:
            writer.writerow([row["scene"], row["mixture"], row["algo"], row["material"],
                             f"{row['mean_abundance']:.4f}", f"{row['rmse']:.4f}"])
    with json_file.open("w") as fh:
        json.dump(flat, fh, indent=2)
        fh.write("\n")


def write_report(records, csv_path, json_path=None) -> None:
    """Emit the consolidated results table as CSV plus a JSON mirror.

    One CSV row per (record, material); numbers carry 4 decimal places. The
    JSON file holds the same rows as objects, same values, for cross-parsing.
    """
    csv_file = Path(csv_path)
    json_file = Path(json_path) if json_path is not None else csv_file.with_suffix(".json")
    _emit_report(_flatten_records(records), csv_file, json_file)


def append_report(records, csv_path, json_path=None) -> None:
    """Merge new records into an existing report pair (create if absent)."""
    csv_file = Path(csv_path)
    json_file = Path(json_path) if json_path is not None else csv_file.with_suffix(".json")
    existing = read_report(csv_file) if csv_file.exists() else []
    _emit_report(existing + _flatten_records(records), csv_file, json_file)


def read_report(csv_path) -> list[dict[str, object]]:
    """Parse a report CSV back into row dictionaries (numbers as floats)."""
    out: list[dict[str, object]] = []
    with Path(csv_path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            row: dict[str, object] = dict(rec)
            row["mean_abundance"] = float(rec["mean_abundance"])
            row["rmse"] = float(rec["rmse"])
            out.append(row)
    return out


def write_abundance_png(amap, endmember_index: int, path) -> None:
    """Render one abundance plane as an 8-bit grayscale PNG.

    Pixel value is round(255 * clamp(fraction, 0, 1)) with half rounding up;
    failed pixels (NaN fractions) render black. Output bytes are deterministic.
    """
    planes = amap.fractions
    count = planes.shape[2]
    if not 0 <= endmember_index < count:
        raise IndexError(f"endmember index {endmember_index} out of range "
                         f"for {count} endmembers")
    plane = np.nan_to_num(planes[:, :, endmember_index], nan=0.0)
    levels = np.floor(255.0 * np.clip(plane, 0.0, 1.0) + 0.5).astype(np.uint8)
    Image.fromarray(levels, mode="L").save(Path(path), format="PNG")


def write_endmembers(matrix, path) -> None:
    """Store an endmember matrix as CSV: wavelength column then one per name.

    Values are written at float32 precision (9 significant digits) to match
    the stored cube samples.
    """
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wavelength", *matrix.names])
        for row_idx in range(matrix.array.shape[0]):
            row = [f"{np.float32(matrix.wavelengths[row_idx]):.9g}"]
            row += [f"{np.float32(v):.9g}" for v in matrix.array[row_idx]]
            writer.writerow(row)


def read_endmembers(path):
    from .core import EndmemberMatrix

    file = Path(path)
    if not file.exists():
        raise FormatError(f"endmember file not found: {file}")
    with file.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{file}: empty endmember file") from None
        if len(header) < 2 or header[0].strip().lower() != "wavelength":
            raise FormatError(f"{file}: expected header wavelength,<name>,...")
        names = tuple(name.strip() for name in header[1:])
        wavelengths, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(f"{file}:{lineno}: expected {len(header)} columns, "
                                  f"got {len(row)}")
            try:
                wavelengths.append(float(row[0]))
                values.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise FormatError(f"{file}:{lineno}: non-numeric value") from exc
    if not values:
        raise FormatError(f"{file}: no spectral rows")
    return EndmemberMatrix(np.array(values), np.array(wavelengths), names)


def write_config(mapping: dict[str, str], path) -> None:
    """Write key = value lines, keys in insertion order."""
    text = "".join(f"{key} = {value}\n" for key, value in mapping.items())
    Path(path).write_text(text)


def read_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    file = Path(path)
    if not file.exists():
        raise FormatError(f"config file not found: {file}")
    for lineno, line in enumerate(file.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise FormatError(f"{file}:{lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def bundled_table_path(scene: int) -> Path:
    """Path of the packaged ground-truth table for scene 1, 2, or 3."""
    if scene not in (1, 2, 3):
        raise ValueError(f"no bundled table for scene {scene}")
    ref = resources.files("unmixlab") / "tables" / f"scene{scene}.csv"
    return Path(str(ref))
