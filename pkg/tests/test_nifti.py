import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import DATA
from golden import golden_2x2x2
from lesionseg import nifti
from lesionseg.errors import NiftiError
from lesionseg.volume import Kind, Volume3D

GOLDEN = DATA / "golden_2x2x2.nii"
SPACING = (1.5, 1.01821005, 1.01821005)


def golden_volume():
    return Volume3D(np.arange(8, dtype=np.float32).reshape(2, 2, 2), SPACING)


def test_golden_file_matches_independent_writer():
    assert GOLDEN.read_bytes() == golden_2x2x2()


def test_read_golden():
    vol = nifti.read_nifti(GOLDEN.read_bytes())
    assert vol.shape == (2, 2, 2)
    assert vol.kind is Kind.INTENSITY
    np.testing.assert_array_equal(vol.flat, np.arange(8, dtype=np.float32))
    # spacing is stored as float32 in the header
    assert vol.spacing == tuple(float(np.float32(s)) for s in SPACING)


def test_write_is_byte_identical_to_golden():
    assert nifti.write_nifti(golden_volume()) == GOLDEN.read_bytes()


def test_golden_readable_by_nibabel():
    nib = pytest.importorskip("nibabel")
    img = nib.load(str(GOLDEN))
    np.testing.assert_array_equal(np.asarray(img.dataobj).transpose(2, 1, 0).ravel(), np.arange(8))
    np.testing.assert_allclose(img.header.get_zooms(), SPACING[::-1], rtol=1e-6)


def test_nibabel_file_readable(tmp_path):
    nib = pytest.importorskip("nibabel")
    data = np.arange(24, dtype=np.int16).reshape(4, 3, 2)  # (x, y, z)
    img = nib.Nifti1Image(data, np.diag([0.8, 0.9, 2.0, 1.0]))
    img.header.set_zooms((0.8, 0.9, 2.0))
    path = tmp_path / "x.nii.gz"
    nib.save(img, str(path))
    vol = nifti.load(path)
    assert vol.shape == (2, 3, 4)
    np.testing.assert_array_equal(vol.data, data.transpose(2, 1, 0))
    np.testing.assert_allclose(vol.spacing, (2.0, 0.9, 0.8), rtol=1e-6)


def _patch(raw, offset, fmt, value):
    b = bytearray(raw)
    struct.pack_into(fmt, b, offset, value)
    return bytes(b)


def test_sizeof_hdr_error():
    bad = _patch(GOLDEN.read_bytes(), 0, "<i", 347)
    with pytest.raises(NiftiError, match="sizeof_hdr") as info:
        nifti.read_nifti(bad)
    assert info.value.field == "sizeof_hdr"


def test_big_endian_rejected():
    raw = GOLDEN.read_bytes()
    bad = _patch(raw, 0, ">i", 348)
    with pytest.raises(NiftiError, match="big-endian"):
        nifti.read_nifti(bad)


def test_dim0_error():
    bad = _patch(GOLDEN.read_bytes(), 40, "<h", 4)
    with pytest.raises(NiftiError) as info:
        nifti.read_nifti(bad)
    assert info.value.field == "dim"


def test_unsupported_datatype():
    bad = _patch(GOLDEN.read_bytes(), 70, "<h", 64)
    with pytest.raises(NiftiError) as info:
        nifti.read_nifti(bad)
    assert info.value.field == "datatype"


def test_truncated_data():
    with pytest.raises(NiftiError) as info:
        nifti.read_nifti(GOLDEN.read_bytes()[:-1])
    assert info.value.field == "data"


@pytest.mark.parametrize("offset", [344, 345, 346, 347, 70, 71])
def test_every_single_byte_corruption_rejected(offset):
    raw = GOLDEN.read_bytes()
    for value in range(256):
        if value == raw[offset]:
            continue
        bad = bytearray(raw)
        bad[offset] = value
        with pytest.raises(NiftiError):
            nifti.read_nifti(bytes(bad))


def test_scl_slope_intercept():
    raw = GOLDEN.read_bytes()
    raw = _patch(raw, 112, "<f", 2.0)
    raw = _patch(raw, 116, "<f", 1.0)
    vol = nifti.read_nifti(raw)
    assert vol.flat[3] == 7.0
    np.testing.assert_array_equal(vol.flat, 2 * np.arange(8) + 1)


def test_zero_slope_means_raw():
    raw = _patch(GOLDEN.read_bytes(), 112, "<f", 0.0)
    raw = _patch(raw, 116, "<f", 5.0)
    np.testing.assert_array_equal(nifti.read_nifti(raw).flat, np.arange(8))


def test_label_datatype_and_uint8_detection():
    lab = Volume3D(np.array([0, 1, 1, 0], dtype=np.uint8).reshape(1, 2, 2), (1, 1, 1), Kind.LABEL)
    raw = nifti.write_nifti(lab)
    assert struct.unpack_from("<h", raw, 70)[0] == 2
    assert nifti.read_nifti(raw).kind is Kind.LABEL
    # plain uint8 0/1 data without the label intent is also a label volume
    plain = _patch(raw, 68, "<h", 0)
    assert nifti.read_nifti(plain).kind is Kind.LABEL


@pytest.mark.parametrize("code, dtype", [(4, "<i2"), (16, "<f4")])
def test_masks_in_other_dtypes(code, dtype):
    body = np.array([0, 1, 1, 0, 1, 0, 0, 0], dtype=dtype)
    raw = bytearray(GOLDEN.read_bytes()[:352])
    struct.pack_into("<h", raw, 70, code)
    struct.pack_into("<h", raw, 72, np.dtype(dtype).itemsize * 8)
    mask = nifti.read_mask(bytes(raw) + body.tobytes())
    assert mask.kind is Kind.LABEL and mask.data.dtype == np.uint8
    np.testing.assert_array_equal(mask.flat, body)
    with pytest.raises(NiftiError):
        nifti.read_mask(bytes(raw) + (body * 2).tobytes())


def test_gzip_detection():
    raw = GOLDEN.read_bytes()
    assert nifti.read_nifti(gzip.compress(raw)).equals(nifti.read_nifti(raw))
    gz = nifti.write_nifti(golden_volume(), gzip_output=True)
    assert gz[:2] == b"\x1f\x8b"
    assert gzip.decompress(gz) == raw


def test_gzip_output_deterministic():
    v = golden_volume()
    assert nifti.write_nifti(v, True) == nifti.write_nifti(v, True)


def test_orientation_preserved():
    raw = bytearray(GOLDEN.read_bytes())
    struct.pack_into("<2h", raw, 252, 1, 2)
    struct.pack_into("<4f", raw, 280, -1.01821005, 0, 0, 12.5)
    vol = nifti.read_nifti(bytes(raw))
    assert nifti.write_nifti(vol) == bytes(raw)


volumes = st.builds(
    lambda data, spacing, kind: Volume3D(data, spacing, kind),
    hnp.arrays(
        np.float32,
        hnp.array_shapes(min_dims=3, max_dims=3, min_side=1, max_side=8),
        elements=st.floats(-1e6, 1e6, width=32),
    ),
    st.tuples(*[st.floats(0.125, 5.0, width=32)] * 3),
    st.just(Kind.INTENSITY),
)


@settings(max_examples=60)
@given(volumes, st.booleans())
def test_round_trip_intensity(vol, gz):
    back = nifti.read_nifti(nifti.write_nifti(vol, gz))
    assert back.equals(vol)
    assert back.data.tobytes() == vol.data.tobytes()


@settings(max_examples=30)
@given(hnp.arrays(np.uint8, (3, 4, 5), elements=st.integers(0, 7)), st.booleans())
def test_round_trip_label(data, gz):
    vol = Volume3D(data, (1.0, 2.0, 3.0), Kind.LABEL)
    assert nifti.read_nifti(nifti.write_nifti(vol, gz)).equals(vol)


def test_round_trip_probability():
    vol = Volume3D(np.linspace(0, 1, 24).reshape(2, 3, 4), (1, 1, 1), Kind.PROBABILITY)
    back = nifti.read_nifti(nifti.write_nifti(vol))
    assert back.kind is Kind.PROBABILITY and back.equals(vol)


def test_load_case(tmp_path):
    ct = Volume3D(np.zeros((2, 2, 2)), (1, 1, 1))
    nifti.save(ct, tmp_path / nifti.CT_NAME)
    with pytest.raises(FileNotFoundError):
        nifti.load_case(tmp_path)
    nifti.save(ct, tmp_path / nifti.PET_NAME)
    c, p, s = nifti.load_case(tmp_path)
    assert s is None and c.equals(ct)
