import pytest


@pytest.mark.parametrize(
    "mu, sigma, mse_tau, expected",
    [
        (0.8139, 0.13444, 0.0995, 1.1905),
        (0.6453, 0.10456, 0.235, 1.0552),
        (0.3987, 0.09875, 0.355, 0.8079),
        (0.3889, 0.07361, 0.449, 0.7768),
    ],
)
def test_warning_threshold(app, mu, sigma, mse_tau, expected):
    """
    Test the warning threshold endpoint against tabulated thresholds.
    """
    response = app.post(
        url="/api/v1/alarms/warning_threshold",
        json={"mu": mu, "sigma": sigma, "mse_tau": mse_tau},
    )
    body = response.json()
    assert response.status_code == 200
    assert body["w_v"] == pytest.approx(expected, abs=5e-4)
    assert body["fluctuation_error"] == pytest.approx(mu + 2 * sigma)
    assert body["modeling_error"] + body["fluctuation_error"] == pytest.approx(body["w_v"])


def test_warning_threshold_rejects_negative_sigma(app):
    """
    Test the warning threshold endpoint with a negative sigma.
    """
    response = app.post(
        url="/api/v1/alarms/warning_threshold",
        json={"mu": 1.0, "sigma": -0.1, "mse_tau": 0.1},
    )
    assert response.status_code == 422


def test_normal_stats(app):
    """
    Test the normal stats endpoint.
    """
    response = app.post(
        url="/api/v1/alarms/normal_stats",
        json={"risk": [0.0, 2.0, 9.0], "start": 0, "stop": 2, "min_samples": 2},
    )
    assert response.status_code == 200
    assert response.json() == {"mu": 1.0, "sigma": 1.0, "samples": 2}


def test_normal_stats_window_too_small(app):
    """
    Test the normal stats endpoint with fewer samples than required.
    """
    response = app.post(
        url="/api/v1/alarms/normal_stats",
        json={"risk": [0.0, 2.0, 9.0], "min_samples": 100},
    )
    assert response.status_code == 400
    assert "fewer than 100" in response.json()["detail"]


def test_detect(app):
    """
    Test the detect endpoint on a series with one persistent exceedance.
    """
    risk = [0.1] * 10 + [2.0] * 5 + [0.1] * 5 + [2.0] + [0.1] * 4
    response = app.post(
        url="/api/v1/alarms/detect",
        json={
            "risk": risk,
            "w_v": 1.0,
            "min_persist": 3,
            "horizon": 30,
            "cadence_s": 4.0,
            "event_index": 20,
        },
    )
    body = response.json()
    assert response.status_code == 200
    assert len(body["intervals"]) == 1
    assert body["intervals"][0]["start_index"] == 10
    assert body["intervals"][0]["end_index"] == 14
    assert body["t_tau_s"] == 120.0
    assert body["t_p_s"] == 40.0
    assert body["w_t_s"] == 160.0


def test_detect_without_alarm(app):
    """
    Test the detect endpoint when risk never exceeds the threshold.
    """
    response = app.post(
        url="/api/v1/alarms/detect",
        json={"risk": [0.1, 0.2, 0.3], "w_v": 1.0, "horizon": 1},
    )
    body = response.json()
    assert response.status_code == 200
    assert body["intervals"] == []
    assert body["w_t_s"] is None
    assert body["w_t_min"] is None


def test_detect_event_outside_series(app):
    """
    Test the detect endpoint with an event index past the series end.
    """
    response = app.post(
        url="/api/v1/alarms/detect",
        json={"risk": [0.1, 0.2], "w_v": 1.0, "horizon": 1, "event_index": 5},
    )
    assert response.status_code == 400
