"""Single-file NIfTI-1 reader/writer for the dtypes autoPET ships.

Only little-endian ``.nii`` / ``.nii.gz`` with a 3D grid and datatype uint8,
int16 or float32 are supported. Orientation fields are carried through
untouched; only ``pixdim[1:4]`` is interpreted (as voxel spacing).
"""
from __future__ import annotations

import gzip
import os
from pathlib import Path

import numpy as np

from .errors import NiftiError
from .volume import Kind, Volume3D

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"

INTENT_LABEL = 1002
PROBABILITY_TAG = b"probability"

# datatype code -> numpy dtype
DATATYPES = {2: np.dtype("u1"), 4: np.dtype("<i2"), 16: np.dtype("<f4")}
_CODE_FOR_KIND = {Kind.LABEL: 2, Kind.INTENSITY: 16, Kind.PROBABILITY: 16}

HEADER_DTYPE = np.dtype(
    [
        ("sizeof_hdr", "<i4"),
        ("data_type", "S10"),
        ("db_name", "S18"),
        ("extents", "<i4"),
        ("session_error", "<i2"),
        ("regular", "S1"),
        ("dim_info", "u1"),
        ("dim", "<i2", (8,)),
        ("intent_p1", "<f4"),
        ("intent_p2", "<f4"),
        ("intent_p3", "<f4"),
        ("intent_code", "<i2"),
        ("datatype", "<i2"),
        ("bitpix", "<i2"),
        ("slice_start", "<i2"),
        ("pixdim", "<f4", (8,)),
        ("vox_offset", "<f4"),
        ("scl_slope", "<f4"),
        ("scl_inter", "<f4"),
        ("slice_end", "<i2"),
        ("slice_code", "u1"),
        ("xyzt_units", "u1"),
        ("cal_max", "<f4"),
        ("cal_min", "<f4"),
        ("slice_duration", "<f4"),
        ("toffset", "<f4"),
        ("glmax", "<i4"),
        ("glmin", "<i4"),
        ("descrip", "S80"),
        ("aux_file", "S24"),
        ("qform_code", "<i2"),
        ("sform_code", "<i2"),
        ("quatern_b", "<f4"),
        ("quatern_c", "<f4"),
        ("quatern_d", "<f4"),
        ("qoffset_x", "<f4"),
        ("qoffset_y", "<f4"),
        ("qoffset_z", "<f4"),
        ("srow_x", "<f4", (4,)),
        ("srow_y", "<f4", (4,)),
        ("srow_z", "<f4", (4,)),
        ("intent_name", "S16"),
        ("magic", "S4"),
    ]
)
assert HEADER_DTYPE.itemsize == HEADER_SIZE

# fields kept opaque on a round trip (plus pixdim[0], the qform handedness)
ORIENTATION_FIELDS = (
    "qform_code", "sform_code", "quatern_b", "quatern_c", "quatern_d",
    "qoffset_x", "qoffset_y", "qoffset_z", "srow_x", "srow_y", "srow_z",
)


def _orientation_from(hdr):
    out = []
    for name in ORIENTATION_FIELDS:
        v = hdr[name]
        out.append(tuple(float(t) for t in v) if np.ndim(v) else float(v))
    return ("nifti1", float(hdr["pixdim"][0]), tuple(out))


def parse_header(raw: bytes) -> np.void:
    if len(raw) < HEADER_SIZE:
        raise NiftiError("sizeof_hdr", f"stream holds {len(raw)} bytes, header needs {HEADER_SIZE}")
    hdr = np.frombuffer(raw[:HEADER_SIZE], dtype=HEADER_DTYPE)[0]
    if hdr["sizeof_hdr"] != HEADER_SIZE:
        swapped = int(np.int32(hdr["sizeof_hdr"]).byteswap())
        if swapped == HEADER_SIZE:
            raise NiftiError("sizeof_hdr", "big-endian files are not supported")
        raise NiftiError("sizeof_hdr", f"expected {HEADER_SIZE}, got {int(hdr['sizeof_hdr'])}")
    if raw[344:348] != MAGIC:
        raise NiftiError("magic", f"expected single-file magic 'n+1', got {raw[344:348]!r}")
    dim = hdr["dim"]
    if not 1 <= dim[0] <= 7:
        if 1 <= int(np.int16(dim[0]).byteswap()) <= 7:
            raise NiftiError("dim", "dim[0] implausible; big-endian files are not supported")
        raise NiftiError("dim", f"dim[0] must be 3, got {int(dim[0])}")
    if dim[0] != 3:
        raise NiftiError("dim", f"dim[0] must be 3, got {int(dim[0])}")
    if np.any(dim[1:4] < 1):
        raise NiftiError("dim", f"dim[1..3] must be >= 1, got {dim[1:4].tolist()}")
    code = int(hdr["datatype"])
    if code not in DATATYPES:
        raise NiftiError("datatype", f"unsupported datatype code {code} (supported: 2, 4, 16)")
    if int(hdr["bitpix"]) != DATATYPES[code].itemsize * 8:
        raise NiftiError("bitpix", f"bitpix {int(hdr['bitpix'])} inconsistent with datatype {code}")
    if not np.isfinite(hdr["vox_offset"]) or hdr["vox_offset"] < HEADER_SIZE:
        raise NiftiError("vox_offset", f"invalid vox_offset {float(hdr['vox_offset'])}")
    pix = hdr["pixdim"][1:4]
    if not np.all(np.isfinite(pix)) or np.any(pix <= 0):
        raise NiftiError("pixdim", f"pixdim[1..3] must be finite and > 0, got {pix.tolist()}")
    return hdr


def _maybe_gunzip(data: bytes) -> bytes:
    if data[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise NiftiError("gzip", f"corrupt gzip stream: {exc}") from None
    return data


def read_nifti(data: bytes, kind: Kind | None = None) -> Volume3D:
    """Decode a NIfTI-1 byte string into a :class:`Volume3D`.

    With ``kind=None`` the kind is inferred: label intent or uint8 {0, 1}
    data gives a label volume, the probability tag gives a probability
    volume, anything else is intensity. Passing ``kind`` forces it.
    """
    raw = _maybe_gunzip(bytes(data))
    hdr = parse_header(raw)
    code = int(hdr["datatype"])
    dtype = DATATYPES[code]
    nx, ny, nz = (int(d) for d in hdr["dim"][1:4])
    offset = int(hdr["vox_offset"])
    nbytes = nx * ny * nz * dtype.itemsize
    if len(raw) < offset + nbytes:
        raise NiftiError(
            "data", f"truncated data section: need {nbytes} bytes at offset {offset}, have {max(len(raw) - offset, 0)}"
        )
    values = np.frombuffer(raw, dtype=dtype, count=nx * ny * nz, offset=offset).reshape(nz, ny, nx)

    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    if np.isfinite(slope) and slope != 0 and (slope != 1.0 or inter != 0.0):
        values = values.astype(np.float64) * slope + inter

    spacing = tuple(float(p) for p in hdr["pixdim"][3:0:-1])
    if kind is None:
        kind = _infer_kind(hdr, values)
    if kind is Kind.LABEL:
        values = _as_label(values)
    elif values.dtype != np.float32:
        values = values.astype(np.float32)
    return Volume3D(values, spacing, kind, _orientation_from(hdr))


def _infer_kind(hdr, values):
    if int(hdr["intent_code"]) == INTENT_LABEL:
        return Kind.LABEL
    if hdr["intent_name"] == PROBABILITY_TAG:
        return Kind.PROBABILITY
    if values.dtype == np.uint8 and np.all(values <= 1):
        return Kind.LABEL
    return Kind.INTENSITY


def _as_label(values):
    if values.dtype.kind == "f":
        if not np.all(np.isfinite(values)) or np.any(values != np.round(values)):
            raise NiftiError("data", "label volume contains non-integer values")
    if values.size and (values.min() < 0 or values.max() > 255):
        raise NiftiError("data", "label values must lie in [0, 255]")
    return values.astype(np.uint8)


def read_mask(data: bytes) -> Volume3D:
    """Read a segmentation mask stored as uint8, int16 or float32; values must be 0/1."""
    vol = read_nifti(data, kind=Kind.LABEL)
    if np.any(vol.data > 1):
        raise NiftiError("data", "mask values must be exactly 0 or 1")
    return vol


def build_header(volume: Volume3D) -> np.ndarray:
    hdr = np.zeros((), dtype=HEADER_DTYPE)
    code = _CODE_FOR_KIND[volume.kind]
    nz, ny, nx = volume.shape
    sz, sy, sx = volume.spacing
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    hdr["dim"] = [3, nx, ny, nz, 1, 1, 1, 1]
    hdr["datatype"] = code
    hdr["bitpix"] = DATATYPES[code].itemsize * 8
    hdr["pixdim"] = [1.0, sx, sy, sz, 1.0, 1.0, 1.0, 1.0]
    hdr["vox_offset"] = VOX_OFFSET
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # mm
    if volume.kind is Kind.LABEL:
        hdr["intent_code"] = INTENT_LABEL
    elif volume.kind is Kind.PROBABILITY:
        hdr["intent_name"] = PROBABILITY_TAG
    orient = volume.orientation
    if isinstance(orient, tuple) and len(orient) == 3 and orient[0] == "nifti1":
        hdr["pixdim"][0] = orient[1]
        for name, value in zip(ORIENTATION_FIELDS, orient[2]):
            hdr[name] = value
    else:
        hdr["sform_code"] = 0
        hdr["srow_x"] = [sx, 0, 0, 0]
        hdr["srow_y"] = [0, sy, 0, 0]
        hdr["srow_z"] = [0, 0, sz, 0]
    hdr["magic"] = MAGIC
    return hdr


def write_nifti(volume: Volume3D, gzip_output: bool = False) -> bytes:
    hdr = build_header(volume)
    dtype = DATATYPES[int(hdr["datatype"])]
    payload = hdr.tobytes() + b"\x00" * (VOX_OFFSET - HEADER_SIZE) + volume.data.astype(dtype).tobytes()
    if gzip_output:
        # mtime=0 keeps the output byte-reproducible
        return gzip.compress(payload, compresslevel=6, mtime=0)
    return payload


def load(path) -> Volume3D:
    return read_nifti(Path(path).read_bytes())


def load_mask(path) -> Volume3D:
    return read_mask(Path(path).read_bytes())


def save(volume: Volume3D, path) -> None:
    path = Path(path)
    data = write_nifti(volume, gzip_output=path.name.endswith(".gz"))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


CT_NAME = "CTres.nii.gz"
PET_NAME = "SUV.nii.gz"
SEG_NAME = "SEG.nii.gz"


def load_case(case_dir):
    """Load ``(ct, pet, seg_or_None)`` from an autoPET-style case directory."""
    case_dir = Path(case_dir)
    missing = [n for n in (CT_NAME, PET_NAME) if not (case_dir / n).is_file()]
    if missing:
        raise FileNotFoundError(f"{case_dir}: missing {', '.join(missing)}")
    ct = load(case_dir / CT_NAME)
    pet = load(case_dir / PET_NAME)
    seg_path = case_dir / SEG_NAME
    seg = load_mask(seg_path) if seg_path.is_file() else None
    return ct, pet, seg
