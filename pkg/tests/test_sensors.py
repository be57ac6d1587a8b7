import numpy as np
import pytest

from servotune.models import TimeSeries
from servotune.sensors import (SensorProfile, emulate_sensor, event_camera,
                               normal_camera)


def ramp_truth(duration=4.0, dt=1e-3):
    t = np.arange(0, duration, dt)
    return TimeSeries(0, dt, 0.5 * t)


def test_noiseless_zero_latency_staircase():
    profile = SensorProfile(rate_hz=20.0, latency=0.0)
    stream = emulate_sensor(ramp_truth(), profile)
    assert np.allclose(stream.t_delivered, stream.t_sampled)
    assert np.allclose(stream.values, 0.5 * stream.t_sampled, atol=1e-9)


def test_latency_shows_up_as_delivery_shift():
    profile = SensorProfile(rate_hz=50.0, latency=0.05)
    stream = emulate_sensor(ramp_truth(), profile)
    assert np.allclose(stream.t_delivered - stream.t_sampled, 0.05)
    # cross-correlation of a noisy sine against its delayed delivery
    dt = 1e-3
    t = np.arange(0, 8, dt)
    truth = TimeSeries(0, dt, np.sin(2 * np.pi * 0.7 * t))
    s = emulate_sensor(truth, SensorProfile(rate_hz=200.0, latency=0.05))
    # reconstruct the delivered signal on the fine grid and correlate
    delivered = np.interp(t, s.t_delivered, s.values)
    lags = np.arange(0, 200)
    corr = [np.dot(delivered[l:], truth.values[: t.size - l]) for l in lags]
    best = lags[int(np.argmax(corr))] * dt
    assert best == pytest.approx(0.05, abs=0.006)


def test_event_stream_has_more_samples_than_normal():
    truth = ramp_truth(6.0)
    n_event = len(emulate_sensor(truth, event_camera()))
    n_normal = len(emulate_sensor(truth, normal_camera()))
    assert n_event / n_normal == pytest.approx(100.0 / 60.0, rel=0.02)


def test_quantization_and_noise():
    profile = SensorProfile(rate_hz=100.0, sigma=0.0, quantization=0.25)
    stream = emulate_sensor(ramp_truth(), profile)
    steps = np.unique(np.round(stream.values / 0.25) * 0.25 - stream.values)
    assert np.allclose(steps, 0.0, atol=1e-12)
    noisy = emulate_sensor(ramp_truth(), SensorProfile(rate_hz=100.0, sigma=0.05),
                           seed=3)
    resid = noisy.values - 0.5 * noisy.t_sampled
    assert 0.03 < np.std(resid) < 0.07


def test_profile_validation():
    with pytest.raises(ValueError):
        SensorProfile(rate_hz=0.0)
    with pytest.raises(ValueError):
        SensorProfile(latency=-0.1)
