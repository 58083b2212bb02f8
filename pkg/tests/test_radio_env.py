import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from droneho.errors import ConfigurationError, OutOfExtentError, SampleParseError, ValidationError
from droneho.radio_env import (
    RsrpGrid,
    RsrpSample,
    RsrpSamples,
    SyntheticLayout,
    build_grid,
    generate_synthetic_samples,
    import_samples,
    rsrp_at,
    strongest_cells,
    write_samples,
)


def one_cell_layout(**kw):
    return SyntheticLayout(sites=((2500.0, 3000.0),), sector_azimuths_deg=(0.0,), **kw)


# ---------------------------------------------------------------- generation

def test_sample_count_default_layout():
    s = generate_synthetic_samples(SyntheticLayout(), 10000, seed=1)
    assert len(s) == 210000
    assert SyntheticLayout().n_cells == 21


def test_single_sample_single_cell():
    s = generate_synthetic_samples(one_cell_layout(), 1, seed=0)
    assert len(s) == 1
    assert math.isfinite(s[0].rsrp_dbm)


def test_generation_deterministic_and_seed_sensitive():
    a = generate_synthetic_samples(SyntheticLayout(), 50, seed=7)
    b = generate_synthetic_samples(SyntheticLayout(), 50, seed=7)
    c = generate_synthetic_samples(SyntheticLayout(), 50, seed=8)
    assert a.identical(b)
    assert not a.identical(c)


def test_positions_inside_area():
    s = generate_synthetic_samples(SyntheticLayout(), 2000, seed=3)
    assert (s.x >= 0).all() and (s.x < 5000).all()
    assert (s.y >= 0).all() and (s.y < 6000).all()


def test_zero_sites_rejected():
    with pytest.raises(ConfigurationError):
        generate_synthetic_samples(SyntheticLayout(sites=()), 10, seed=0)


def test_bad_sample_count_rejected():
    with pytest.raises(ConfigurationError):
        generate_synthetic_samples(SyntheticLayout(), 0, seed=0)


def test_propagation_matches_hand_computation():
    # receiver on boresight 1 km east of the site, no shadowing
    lay = one_cell_layout(shadow_sigma_db=0.0)
    x, y = 3500.0, 3000.0
    d2d = 1000.0
    dh = 50.0 - 25.0
    d3d = math.hypot(d2d, dh)
    pl = 128.1 + 37.6 * math.log10(d3d / 1000.0)
    elev = math.degrees(math.atan2(dh, d2d))
    gv = -min(12.0 * ((elev + 10.0) / 10.0) ** 2, 20.0)
    expected = 60.0 - pl + 0.0 + gv
    assert lay.mean_rsrp_dbm(0, np.array([x]), np.array([y]))[0] == pytest.approx(expected, abs=1e-9)


def test_back_lobe_is_capped_by_front_to_back():
    lay = one_cell_layout(front_to_back_db=25.0)
    front = lay.mean_rsrp_dbm(0, np.array([3500.0]), np.array([3000.0]))[0]
    back = lay.mean_rsrp_dbm(0, np.array([1500.0]), np.array([3000.0]))[0]
    assert front - back == pytest.approx(25.0, abs=1e-9)


# ------------------------------------------------------------------- import

def test_import_schema_echo():
    s = import_samples(io.StringIO("x_m,y_m,cell_id,rsrp_dbm\n100.0,200.0,3,-75.2\n"))
    assert list(s) == [RsrpSample(100.0, 200.0, 3, -75.2)]


def test_import_header_only():
    assert len(import_samples(io.StringIO("x_m,y_m,cell_id,rsrp_dbm\n"))) == 0


def test_import_cell_out_of_range():
    with pytest.raises(ValidationError):
        import_samples(io.StringIO("x_m,y_m,cell_id,rsrp_dbm\n1,1,21,-80\n"), n_cells=21)


def test_import_out_of_extent():
    with pytest.raises(ValidationError):
        import_samples(io.StringIO("x_m,y_m,cell_id,rsrp_dbm\n5000,1,0,-80\n"))


def test_import_malformed_row_names_line():
    with pytest.raises(SampleParseError) as exc:
        import_samples(io.StringIO("x_m,y_m,cell_id,rsrp_dbm\n1,1,0,-80\n1,abc,0,-80\n"))
    assert exc.value.line == 3
    assert "line 3" in str(exc.value)


def test_samples_csv_round_trip():
    s = generate_synthetic_samples(SyntheticLayout(), 5, seed=2)
    buf = io.StringIO()
    write_samples(s, buf)
    buf.seek(0)
    assert import_samples(buf).identical(s)


# ---------------------------------------------------------------- build_grid

def test_mean_of_two_samples():
    s = RsrpSamples.from_records([(10, 10, 0, -70.0), (20, 30, 0, -80.0)])
    g = build_grid(s, 50, 50, 50, 1)
    assert g.raw[0, 0, 0] == -75.0


def test_linear_map_midpoint():
    s = RsrpSamples.from_records([(10, 10, 0, -100.0), (60, 10, 0, -50.0), (110, 10, 0, -75.0)])
    g = build_grid(s, 150, 50, 50, 1)
    assert g.normalized[2, 0, 0] == 0.5
    assert g.norm_min_dbm == -100.0 and g.norm_max_dbm == -50.0


def test_degenerate_range_maps_to_half():
    s = RsrpSamples.from_records([(10, 10, 0, -70.0), (60, 10, 0, -70.0)])
    g = build_grid(s, 100, 50, 50, 1)
    assert (g.normalized == 0.5).all()


def test_empty_pairs_take_global_minimum():
    s = RsrpSamples.from_records([(10, 10, 0, -60.0), (60, 10, 1, -90.0)])
    g = build_grid(s, 100, 50, 50, 2)
    assert g.raw[0, 0, 1] == -90.0 and g.raw[1, 0, 0] == -90.0
    assert g.association_map()[0, 0] == 0


def test_bins_count_rounds_up():
    s = RsrpSamples.from_records([(10, 10, 0, -60.0)])
    g = build_grid(s, 120, 70, 50, 1)
    assert (g.bins_x, g.bins_y) == (3, 2)


def test_default_grid_shape():
    s = generate_synthetic_samples(SyntheticLayout(), 20, seed=0)
    g = build_grid(s)
    assert g.raw.shape == (100, 120, 21)


@given(st.integers(0, 2**31 - 1))
def test_build_grid_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    n = 200
    s = RsrpSamples(rng.uniform(0, 200, n), rng.uniform(0, 100, n), rng.integers(0, 3, n), rng.normal(-80, 10, n))
    perm = rng.permutation(n)
    a = build_grid(s, 200, 100, 50, 3)
    b = build_grid(s.take(perm), 200, 100, 50, 3)
    assert a.identical(b)


@given(st.integers(0, 2**31 - 1))
def test_normalization_preserves_order_and_range(seed):
    rng = np.random.default_rng(seed)
    n = 300
    s = RsrpSamples(rng.uniform(0, 300, n), rng.uniform(0, 150, n), rng.integers(0, 4, n), rng.normal(-90, 15, n))
    g = build_grid(s, 300, 150, 50, 4)
    assert g.normalized.min() == 0.0 and g.normalized.max() == 1.0
    np.testing.assert_array_equal(g.association_map(), g.association_map(use_raw=True))
    # pairwise order within each bin
    raw, norm = g.raw, g.normalized
    for c1 in range(4):
        for c2 in range(4):
            np.testing.assert_array_equal(raw[..., c1] < raw[..., c2], norm[..., c1] < norm[..., c2])
    np.testing.assert_allclose(norm, (raw - g.norm_min_dbm) / (g.norm_max_dbm - g.norm_min_dbm), rtol=0, atol=1e-15)


# ------------------------------------------------------------------ queries

@pytest.fixture
def small_grid():
    raw = np.zeros((4, 8, 3))
    raw[2, 6] = [0.2, 0.9, 0.5]
    raw[0, 0] = [0.5, 0.5, 0.1]
    raw[3, 7] = [1.0, 0.0, 0.3]
    return RsrpGrid.from_raw(raw, 200, 400, 50)


def test_rsrp_at_floor_arithmetic(small_grid):
    assert rsrp_at(small_grid, (125, 310), 1) == 0.9
    assert small_grid.bin_index(125, 310) == (2, 6)


def test_far_boundary_rejected(small_grid):
    with pytest.raises(OutOfExtentError):
        rsrp_at(small_grid, (200, 10), 0)
    with pytest.raises(OutOfExtentError):
        rsrp_at(small_grid, (10, -0.001), 0)
    assert rsrp_at(small_grid, (0, 0), 0) == 0.5


def test_strongest_cells_sort_and_ties(small_grid):
    assert strongest_cells(small_grid, (125, 310), 2) == [1, 2]
    assert strongest_cells(small_grid, (10, 10), 1) == [0]
    assert sorted(strongest_cells(small_grid, (125, 310), 3)) == [0, 1, 2]


def test_strongest_cells_k_too_large(small_grid):
    with pytest.raises(ConfigurationError):
        strongest_cells(small_grid, (10, 10), 4)
    with pytest.raises(ConfigurationError):
        strongest_cells(small_grid, (10, 10), 0)


@given(st.floats(0, 199.999), st.floats(0, 399.999), st.integers(0, 2))
def test_rsrp_in_unit_interval(x, y, c):
    raw = np.random.default_rng(0).normal(-80, 10, (4, 8, 3))
    g = RsrpGrid.from_raw(raw, 200, 400, 50)
    assert 0.0 <= rsrp_at(g, (x, y), c) <= 1.0


def test_grid_file_round_trip(tmp_path):
    g = build_grid(generate_synthetic_samples(SyntheticLayout(), 30, seed=4))
    g.save(tmp_path / "grid.csv")
    h = RsrpGrid.load(tmp_path / "grid.csv")
    assert h.identical(g)
    assert (tmp_path / "grid.json").exists()


def test_association_map_export():
    raw = np.array([[[0.1, 0.9]], [[0.8, 0.2]]])
    g = RsrpGrid.from_raw(raw, 100, 50, 50)
    buf = io.StringIO()
    g.save_association_map(buf)
    assert buf.getvalue() == "bin_x,bin_y,best_cell\n0,0,1\n1,0,0\n"


def test_grid_is_read_only(small_grid):
    with pytest.raises(ValueError):
        small_grid.raw[0, 0, 0] = 1.0
