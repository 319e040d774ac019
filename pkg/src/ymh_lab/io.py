"""Field files (structured text and binary) and report serialization."""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from . import __version__
from .fields import EndForm, form_keys
from .grid import TorusGrid

MAGIC = b"YMH1"
FORMAT_VERSION = 1


class FieldFileError(ValueError):
    """A field file is malformed or does not match the expected grid or rank."""


def _stack(psi: EndForm) -> np.ndarray:
    if len(psi.bidegrees) != 1:
        raise ValueError("only single-bidegree forms can be serialized")
    keys = form_keys(psi.grid.n, *psi.bidegrees[0])
    if not keys:
        raise ValueError(f"bidegree {psi.bidegrees[0]} has no components on this grid")
    return np.stack([psi.full(k) for k in keys])


def field_header(psi: EndForm) -> dict:
    g = psi.grid
    return {"n": g.n, "points_per_axis": g.points_per_axis, "side_length": g.side_length,
            "rank": psi.rank, "bidegree": list(psi.bidegrees[0])}


def field_to_text(psi: EndForm, meta: dict | None = None) -> str:
    """Header object plus nested arrays of ``[re, im]`` pairs, one per component."""
    data = _stack(psi)
    pairs = np.stack([data.real, data.imag], axis=-1).tolist()
    doc = {"header": field_header(psi), "components": pairs}
    if meta:
        doc["meta"] = meta
    return json.dumps(doc, sort_keys=True)


def _check_header(h: dict, grid: TorusGrid | None, rank: int | None):
    if grid is not None and (h["n"], h["points_per_axis"]) != (grid.n, grid.points_per_axis):
        raise FieldFileError(f"field grid {h['n']}/{h['points_per_axis']} does not match "
                             f"{grid.n}/{grid.points_per_axis}")
    if grid is not None and "side_length" in h and not np.isclose(h["side_length"], grid.side_length):
        raise FieldFileError("field side_length does not match the grid")
    if rank is not None and h["rank"] != rank:
        raise FieldFileError(f"field rank {h['rank']} does not match {rank}")


def _from_stack(h: dict, data: np.ndarray) -> EndForm:
    try:
        grid = TorusGrid(h["n"], h["points_per_axis"], h.get("side_length", 1.0))
        p, q = h["bidegree"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FieldFileError(f"bad field header: {exc}") from exc
    keys = form_keys(grid.n, p, q)
    expected = (len(keys),) + grid.shape + (h["rank"], h["rank"])
    if data.shape != expected:
        raise FieldFileError(f"field data has shape {data.shape}, expected {expected}")
    return EndForm(grid, h["rank"], {k: data[i] for i, k in enumerate(keys)}, [(p, q)])


def field_from_text(text: str, grid: TorusGrid | None = None, rank: int | None = None) -> EndForm:
    try:
        doc = json.loads(text)
        h = doc["header"]
        data = np.asarray(doc["components"], dtype=float)
        _check_header(h, grid, rank)
    except FieldFileError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise FieldFileError(f"malformed field text: {exc}") from exc
    if data.ndim == 0 or data.shape[-1] != 2:
        raise FieldFileError("components must be [re, im] pairs")
    return _from_stack(h, data[..., 0] + 1j * data[..., 1])


def field_to_bytes(psi: EndForm) -> bytes:
    """Little-endian binary: magic, six uint32 header words, then complex128 data."""
    g = psi.grid
    data = _stack(psi)
    p, q = psi.bidegrees[0]
    head = MAGIC + struct.pack("<6I", FORMAT_VERSION, g.n, g.points_per_axis, psi.rank, p, q)
    return head + np.ascontiguousarray(data, dtype="<c16").tobytes()


def field_from_bytes(buf: bytes, grid: TorusGrid | None = None, rank: int | None = None,
                     side_length: float = 1.0) -> EndForm:
    if len(buf) < 28 or buf[:4] != MAGIC:
        raise FieldFileError("missing YMH1 magic")
    version, n, N, r, p, q = struct.unpack("<6I", buf[4:28])
    if version != FORMAT_VERSION:
        raise FieldFileError(f"unsupported format version {version}")
    h = {"n": n, "points_per_axis": N, "rank": r, "bidegree": [p, q],
         "side_length": grid.side_length if grid is not None else side_length}
    _check_header(h, grid, rank)
    try:
        g = TorusGrid(n, N, h["side_length"])
    except ValueError as exc:
        raise FieldFileError(str(exc)) from exc
    count = len(form_keys(n, p, q)) * g.total_sites * r * r
    body = buf[28:]
    if len(body) != 16 * count:
        raise FieldFileError(f"expected {16 * count} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype="<c16").astype(np.complex128)
    return _from_stack(h, data.reshape((len(form_keys(n, p, q)),) + g.shape + (r, r)))


def save_field(psi: EndForm, path, fmt: str = "text", meta: dict | None = None):
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(field_to_bytes(psi))
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(field_to_text(psi, meta))


def load_field(path, grid: TorusGrid | None = None, rank: int | None = None) -> EndForm:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise FieldFileError(f"cannot read {path}: {exc}") from exc
    if raw[:4] == MAGIC:
        return field_from_bytes(raw, grid, rank)
    return field_from_text(raw.decode("utf-8"), grid, rank)


# --- reports -------------------------------------------------------------------------

def scenario_hash(scenario: dict) -> str:
    canon = json.dumps(scenario, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.generic):
        return _plain(obj.item())
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def report_text(kind: str, body: dict, digest: str) -> str:
    """UTF-8 JSON with the scenario hash and tool version embedded."""
    doc = {"kind": kind, "scenario_hash": digest, "version": __version__, "report": _plain(body)}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _cell(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(columns, rows, digest: str) -> str:
    """CSV with a leading comment line carrying the scenario hash and version."""
    lines = [f"# scenario_hash={digest} version={__version__}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"
