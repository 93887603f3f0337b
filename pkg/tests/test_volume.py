import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lesionseg.errors import AlignmentError, InvalidKindError, InvalidSpacingError, ValidationError
from lesionseg.volume import Kind, MultiChannelVolume, Volume3D, index_at, voxel_volume_ml


@pytest.mark.parametrize(
    "spacing, expected",
    [
        ((1.0, 1.0, 1.0), 0.001),
        ((10.0, 10.0, 10.0), 1.0),
        # 1.5 * 1.01821005**2 / 1000 evaluated in 40-digit decimal arithmetic
        ((1.5, 1.01821005, 1.01821005), 0.00155512755888150375),
    ],
)
def test_voxel_volume_ml(spacing, expected):
    assert voxel_volume_ml(spacing) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("bad", [(0, 1, 1), (1, -1, 1), (1, 1, float("nan")), (1, float("inf"), 1)])
def test_voxel_volume_rejects_bad_spacing(bad):
    with pytest.raises(InvalidSpacingError):
        voxel_volume_ml(bad)


@given(st.tuples(*[st.floats(0.1, 10.0)] * 3), st.integers(0, 2), st.floats(1.01, 2.0))
def test_voxel_volume_monotone(spacing, axis, factor):
    bigger = list(spacing)
    bigger[axis] *= factor
    assert voxel_volume_ml(bigger) > voxel_volume_ml(spacing)


@pytest.mark.parametrize(
    "shape, data, idx, expected",
    [
        ((1, 1, 3), [5, 6, 7], (0, 0, 2), 7),
        ((2, 1, 1), [1, 2], (1, 0, 0), 2),
        ((2, 2, 2), list(range(8)), (1, 0, 1), 5),
    ],
)
def test_index_at(shape, data, idx, expected):
    vol = Volume3D.from_flat(np.array(data, dtype=np.float32), shape, (1, 1, 1))
    assert index_at(vol, *idx) == expected


def test_index_at_out_of_bounds():
    vol = Volume3D(np.zeros((2, 2, 2)), (1, 1, 1))
    with pytest.raises(IndexError):
        index_at(vol, 2, 0, 0)
    with pytest.raises(IndexError):
        index_at(vol, 0, -1, 0)


@settings(max_examples=50)
@given(st.tuples(*[st.integers(1, 16)] * 3), st.data())
def test_flat_round_trip(shape, data):
    nz, ny, nx = shape
    values = np.arange(nz * ny * nx, dtype=np.float32)
    vol = Volume3D.from_flat(values, shape, (1, 1, 1))
    z = data.draw(st.integers(0, nz - 1))
    y = data.draw(st.integers(0, ny - 1))
    x = data.draw(st.integers(0, nx - 1))
    assert index_at(vol, z, y, x) == vol.data[z, y, x]
    assert index_at(vol, z, y, x) == z * ny * nx + y * nx + x


def test_from_flat_length_mismatch():
    with pytest.raises(ValidationError):
        Volume3D.from_flat(np.zeros(7), (2, 2, 2), (1, 1, 1))


def test_immutable_and_dtypes():
    vol = Volume3D(np.ones((2, 2, 2), dtype=np.float64), (1, 1, 1))
    assert vol.data.dtype == np.float32
    with pytest.raises(ValueError):
        vol.data[0, 0, 0] = 5
    lab = Volume3D(np.ones((2, 2, 2)), (1, 1, 1), Kind.LABEL)
    assert lab.data.dtype == np.uint8


def test_kind_invariants():
    with pytest.raises(InvalidKindError):
        Volume3D(np.full((1, 1, 2), 0.5), (1, 1, 1), Kind.LABEL)
    with pytest.raises(InvalidKindError):
        Volume3D(np.full((1, 1, 2), -1.0), (1, 1, 1), Kind.LABEL)
    with pytest.raises(InvalidKindError):
        Volume3D(np.full((1, 1, 2), 1.5), (1, 1, 1), Kind.PROBABILITY)


def test_multichannel_alignment():
    a = Volume3D(np.zeros((2, 2, 2)), (1, 1, 1))
    b = Volume3D(np.zeros((2, 2, 3)), (1, 1, 1))
    c = Volume3D(np.zeros((2, 2, 2)), (2, 1, 1))
    with pytest.raises(AlignmentError):
        MultiChannelVolume((a, b), ("CT", "PET"))
    with pytest.raises(AlignmentError):
        MultiChannelVolume((a, c), ("CT", "PET"))
    with pytest.raises(ValidationError):
        MultiChannelVolume((), ())
    mc = MultiChannelVolume((a, a), ("CT", "PET"))
    assert mc.stack().shape == (2, 2, 2, 2)
    assert mc["PET"] is a
