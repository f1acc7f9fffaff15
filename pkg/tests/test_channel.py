import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cbadapt.channel import ArrayGeometry, ScenarioConfig, generate_channel, lag_view, steering_vector
from cbadapt.errors import ConfigError

angles = st.floats(-math.pi, math.pi, allow_nan=False)


def test_boresight_is_all_ones():
    v = steering_vector(ArrayGeometry(4, 2), 0.0, math.pi / 2)
    np.testing.assert_allclose(v, np.ones(8), atol=1e-15)


def test_two_port_endfire():
    v = steering_vector(ArrayGeometry(2, 1), math.pi / 2, math.pi / 2)
    np.testing.assert_allclose(v, [1, -1], atol=1e-12)


def test_steering_port_order():
    g = ArrayGeometry(3, 2, d_h=0.5, d_v=0.7)
    az, zen = 0.3, 1.1
    v = steering_vector(g, az, zen)
    for p2 in range(2):
        for p1 in range(3):
            want = np.exp(2j * np.pi * (0.5 * p1 * np.sin(zen) * np.sin(az) + 0.7 * p2 * np.cos(zen)))
            assert abs(v[p2 * 3 + p1] - want) < 1e-12


@given(angles, angles)
def test_steering_unit_modulus(az, zen):
    v = steering_vector(ArrayGeometry(4, 4), az, zen)
    assert np.max(np.abs(np.abs(v) - 1)) <= 1e-12


@pytest.mark.parametrize("kw", [dict(n1=0), dict(n2=0), dict(d_h=0.0), dict(d_v=-1.0), dict(num_pol=1)])
def test_geometry_validation(kw):
    with pytest.raises(ConfigError):
        ArrayGeometry(**kw)


@pytest.mark.parametrize("kw", [dict(num_rays=0), dict(num_rb=0), dict(num_slot=0), dict(num_rx=0),
                                dict(delay_spread_s=-1.0), dict(doppler_max_hz=-5.0),
                                dict(azimuth_spread_deg=float("nan")), dict(rician_k_db=float("inf"))])
def test_scenario_validation(kw):
    with pytest.raises(ConfigError):
        ScenarioConfig(**kw)


def test_shape_and_port_count():
    g = ArrayGeometry(4, 2)
    ch = generate_channel(g, ScenarioConfig(num_rx=3, num_rb=5, num_slot=7), 0)
    assert ch.samples.shape == (3, 16, 5, 7)
    assert g.num_ports == 16
    assert ch.port_grid().shape == (3, 2, 2, 4, 5, 7)


@given(st.integers(0, 2**63), st.booleans())
def test_power_normalized_and_finite(seed, los):
    sc = ScenarioConfig(num_rays=5, rician_k_db=6.0 if los else -math.inf, num_rb=6, num_slot=4)
    h = generate_channel(ArrayGeometry(2, 2), sc, seed).samples
    assert np.all(np.isfinite(h))
    assert abs(np.mean(np.abs(h) ** 2) - 1) <= 1e-9


def test_deterministic(geometry):
    sc = ScenarioConfig(num_rays=9, rician_k_db=3.0)
    a = generate_channel(geometry, sc, 99).samples
    b = generate_channel(geometry, sc, 99).samples
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, generate_channel(geometry, sc, 100).samples)


def test_samples_read_only(small_channel):
    with pytest.raises(ValueError):
        small_channel.samples[0, 0, 0, 0] = 0


def test_static_channel_constant_over_slots(geometry):
    sc = ScenarioConfig(num_rays=1, doppler_max_hz=0.0, num_slot=5)
    h = generate_channel(geometry, sc, 3).samples
    assert np.max(np.abs(h - h[..., :1])) <= 1e-12


def test_single_tap_flat_over_rbs(geometry):
    sc = ScenarioConfig(num_rays=1, delay_spread_s=0.0, num_rb=10)
    h = generate_channel(geometry, sc, 4).samples
    assert np.max(np.abs(h - h[:, :, :1])) <= 1e-12


@given(st.integers(0, 10_000))
def test_single_ray_rank_one(seed):
    sc = ScenarioConfig(num_rays=1, rank1_gains=True, num_rx=3, num_rb=3, num_slot=2)
    h = generate_channel(ArrayGeometry(2, 2), sc, seed).samples
    for f in range(3):
        for t in range(2):
            s = np.linalg.svd(h[:, :, f, t], compute_uv=False)
            assert s[1] <= 1e-9 * s[0]


def test_rank_one_mode_with_los(geometry):
    sc = ScenarioConfig(num_rays=1, rank1_gains=True, rician_k_db=10.0, num_rb=2, num_slot=2)
    s = np.linalg.svd(generate_channel(geometry, sc, 5).samples[:, :, 0, 0], compute_uv=False)
    assert s[1] <= 1e-9 * s[0]


def test_single_ray_matches_formula():
    g = ArrayGeometry(2, 2)
    sc = ScenarioConfig(num_rays=1, delay_spread_s=100e-9, doppler_max_hz=80.0, num_rb=4, num_slot=3)
    h = generate_channel(g, sc, 21).samples
    # a single ray is a separable product; recover the frequency and time ramps
    ratio_f = h[:, :, 1:, :] / h[:, :, :-1, :]
    ratio_t = h[..., 1:] / h[..., :-1]
    assert np.allclose(ratio_f, ratio_f.flat[0]) and np.allclose(np.abs(ratio_f), 1)
    assert np.allclose(ratio_t, ratio_t.flat[0]) and np.allclose(np.abs(ratio_t), 1)
    tau = -np.angle(ratio_f.flat[0]) / (2 * np.pi * sc.rb_spacing_hz)
    nu = np.angle(ratio_t.flat[0]) / (2 * np.pi * sc.slot_duration_s)
    assert tau >= -1e-15 and abs(nu) <= sc.doppler_max_hz


def test_lag_view(small_channel):
    stale, fresh = lag_view(small_channel, 0)
    assert np.array_equal(stale, fresh)
    stale, fresh = lag_view(small_channel, 2)
    assert stale.shape == fresh.shape == (2, 16, 8, 4)
    np.testing.assert_array_equal(fresh, small_channel.samples[..., 2:])
    for bad in (6, 7, -1):
        with pytest.raises(ConfigError):
            lag_view(small_channel, bad)


def test_lag_view_two_of_eight(geometry):
    ch = generate_channel(geometry, ScenarioConfig(num_slot=8), 0)
    stale, fresh = lag_view(ch, 2)
    assert stale.shape[-1] == fresh.shape[-1] == 6


@given(st.integers(0, 5))
def test_static_lag_views_equal(delta):
    ch = generate_channel(ArrayGeometry(2, 1), ScenarioConfig(num_rays=4, doppler_max_hz=0.0, num_slot=6), 8)
    stale, fresh = lag_view(ch, delta)
    assert np.array_equal(stale, fresh)
