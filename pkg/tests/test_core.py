import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unmixlab.core import (AbundanceMap, AbundanceVector, EndmemberMatrix,
                           GroundTruth, HyperCube, Spectrum, apply_band_mask,
                           clip_center, satisfies_anc, satisfies_asc)
from unmixlab.errors import DimensionError


def test_spectrum_basic():
    s = Spectrum([0.1, 0.2, 0.3], [400.0, 500.0, 600.0])
    assert s.bands == 3
    assert len(s) == 3


def test_spectrum_locked_and_copied():
    source = np.array([0.1, 0.2])
    s = Spectrum(source, [400.0, 500.0])
    source[0] = 9.0
    assert s.values[0] == 0.1
    with pytest.raises(ValueError):
        s.values[0] = 5.0


def test_spectrum_validation():
    with pytest.raises(DimensionError):
        Spectrum([0.1, 0.2], [400.0])
    with pytest.raises(ValueError):
        Spectrum([0.1, 0.2], [500.0, 400.0])
    with pytest.raises(DimensionError):
        Spectrum([], [])


def test_cube_shape_and_accessors():
    data = np.arange(24, dtype=float).reshape(2, 3, 4)
    cube = HyperCube(data, [400.0, 500.0])
    assert (cube.bands, cube.height, cube.width) == (2, 3, 4)
    # value() takes (row, col, band); data is stored (band, row, col)
    assert cube.value(1, 2, 0) == data[0, 1, 2]
    assert np.array_equal(cube.pixel(2, 3), data[:, 2, 3])
    spec = cube.spectrum_at(0, 0)
    assert isinstance(spec, Spectrum)
    assert np.array_equal(spec.values, data[:, 0, 0])


def test_cube_matrix_round_trip():
    rng = np.random.default_rng(0)
    data = rng.random((5, 3, 4))
    cube = HyperCube(data, np.linspace(400, 1000, 5))
    back = HyperCube.from_matrix(cube.to_matrix(), 3, 4, cube.wavelengths)
    assert np.array_equal(back.data, cube.data)


def test_cube_default_band_mask_all_true():
    cube = HyperCube(np.zeros((3, 2, 2)), [1.0, 2.0, 3.0])
    assert cube.band_mask.dtype == bool
    assert cube.band_mask.all()


def test_cube_validation():
    with pytest.raises(DimensionError):
        HyperCube(np.zeros((2, 2, 2)), [400.0])
    with pytest.raises(DimensionError):
        HyperCube(np.zeros((2, 2, 2)), [400.0, 500.0], band_mask=[True])
    with pytest.raises(DimensionError):
        HyperCube(np.zeros((2, 2)), [400.0, 500.0])


def test_endmember_matrix_columns():
    arr = np.array([[0.1, 0.4], [0.2, 0.5], [0.3, 0.6]])
    m = EndmemberMatrix(arr, [400.0, 500.0, 600.0], ("a", "b"))
    assert m.bands == 3 and m.count == 2
    col = m.column(1)
    assert np.array_equal(col.values, [0.4, 0.5, 0.6])


def test_endmember_matrix_from_spectra():
    wl = np.array([400.0, 500.0])
    m = EndmemberMatrix.from_spectra(
        [Spectrum([0.1, 0.2], wl), Spectrum([0.3, 0.4], wl)], ("x", "y"))
    assert m.array.shape == (2, 2)
    with pytest.raises(DimensionError):
        EndmemberMatrix.from_spectra(
            [Spectrum([0.1, 0.2], wl), Spectrum([0.1, 0.2], wl * 2)], ("x", "y"))


def test_endmember_matrix_name_count_mismatch():
    with pytest.raises(DimensionError):
        EndmemberMatrix(np.ones((3, 2)), [1.0, 2.0, 3.0], ("only",))


def test_abundance_vector_constraints():
    AbundanceVector([0.5, 0.5], asc_enforced=True)
    AbundanceVector([0.5, 0.2])  # no sum requirement unless enforced
    # tiny negative within tolerance passes
    AbundanceVector([1.0, -1e-10], asc_enforced=True)
    with pytest.raises(ValueError):
        AbundanceVector([-0.01, 1.01])
    with pytest.raises(ValueError):
        AbundanceVector([0.6, 0.6], asc_enforced=True)


def test_abundance_map_masks_and_nan_exemption():
    fr = np.full((2, 2, 3), 1 / 3)
    fr[0, 0] = np.nan
    failed = np.zeros((2, 2), dtype=bool)
    failed[0, 0] = True
    amap = AbundanceMap(fr, asc_enforced=True, failed=failed)
    assert amap.failed[0, 0]
    assert not amap.degenerate.any()
    vec = amap.at(1, 1)
    assert vec.asc_enforced
    # the same NaN without the failed flag violates the checks
    with pytest.raises(ValueError):
        AbundanceMap(fr, asc_enforced=True)


def test_ground_truth_uniform_and_spatial():
    g = GroundTruth.uniform([0.25, 0.75])
    assert not g.is_spatial and g.count == 2
    assert np.array_equal(g.at(5, 7), [0.25, 0.75])
    field = np.zeros((2, 2, 2))
    field[..., 0] = 0.3
    field[..., 1] = 0.7
    gs = GroundTruth.spatial(field)
    assert gs.is_spatial
    assert np.array_equal(gs.at(1, 0), [0.3, 0.7])


def test_ground_truth_validation():
    with pytest.raises(ValueError):
        GroundTruth.uniform([0.5, 0.6])
    with pytest.raises(ValueError):
        GroundTruth.uniform([-0.1, 1.1])
    with pytest.raises(DimensionError):
        GroundTruth(np.full((2, 2), 0.5))


def test_ground_truth_to_map():
    g = GroundTruth.uniform([0.4, 0.6])
    amap = g.to_map(3, 2)
    assert amap.fractions.shape == (3, 2, 2)
    assert np.all(amap.fractions[..., 0] == 0.4)
    gs = GroundTruth.spatial(np.full((2, 2, 1), 1.0))
    with pytest.raises(DimensionError):
        gs.to_map(3, 3)


def test_clip_center_even_margin():
    cube = HyperCube(np.arange(36, dtype=float).reshape(1, 6, 6), [500.0])
    clipped = clip_center(cube, 2)
    assert np.array_equal(clipped.data[0], cube.data[0, 2:4, 2:4])


def test_clip_center_odd_margin_extra_right_bottom():
    cube = HyperCube(np.arange(25, dtype=float).reshape(1, 5, 5), [500.0])
    clipped = clip_center(cube, 2)
    # start = (5-2)//2 = 1 -> rows/cols 1..2, extra margin on the far side
    assert np.array_equal(clipped.data[0], cube.data[0, 1:3, 1:3])


def test_clip_center_errors():
    cube = HyperCube(np.zeros((1, 4, 4)), [500.0])
    with pytest.raises(DimensionError):
        clip_center(cube, 5)
    with pytest.raises(DimensionError):
        clip_center(cube, 0)


def test_apply_band_mask_inclusive():
    data = np.arange(40, dtype=float).reshape(10, 2, 2)
    cube = HyperCube(data, np.linspace(400, 1000, 10))
    window = apply_band_mask(cube, (2, 5))
    assert window.bands == 4
    assert np.array_equal(window.data, data[2:6])
    assert np.array_equal(window.wavelengths, cube.wavelengths[2:6])
    with pytest.raises(DimensionError):
        apply_band_mask(cube, (5, 2))
    with pytest.raises(DimensionError):
        apply_band_mask(cube, (0, 10))


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8))
def test_satisfies_anc_on_nonnegative(vals):
    assert satisfies_anc(np.array(vals))


@settings(max_examples=50)
@given(st.integers(2, 6), st.integers(0, 2 ** 31 - 1))
def test_simplex_rows_pass_both_constraints(count, seed):
    rng = np.random.default_rng(seed)
    alpha = rng.dirichlet(np.ones(count))
    assert satisfies_anc(alpha)
    assert satisfies_asc(alpha)
