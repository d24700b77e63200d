from __future__ import annotations

import math
from datetime import date, timedelta

import numpy as np
import pytest

from afcflow.flowstats import ALL_BINS, FlowSeries, Granularity, PeriodBin
from afcflow.forecast import (
    InsufficientHistory,
    PeriodicModel,
    evaluate,
    fit_periodic,
    forecast_report,
    predict,
)

MONDAY = date(2011, 7, 4)


def per_bin_series(days: int, value_fn, start: date = MONDAY) -> FlowSeries:
    points = []
    for i in range(days):
        d = start + timedelta(days=i)
        for b in ALL_BINS:
            points.append((d, b, value_fn(d, b)))
    return FlowSeries("ALL", Granularity.PER_BIN, tuple(points))


WEEKDAY_LEVELS = {0: 100, 1: 200, 2: 300, 3: 400, 4: 500, 5: 600, 6: 700}


def weekday_profile(d: date, b: PeriodBin) -> int:
    return WEEKDAY_LEVELS[d.weekday()]


def test_fit_constant_history():
    model = fit_periodic(per_bin_series(28, lambda d, b: 50), with_trend=True)
    assert all(cell.mean == 50.0 for cell in model.cells.values())
    assert model.trend[0] == pytest.approx(0.0, abs=1e-12)
    assert all(cell.n == 4 for cell in model.cells.values())


def test_fit_weekday_constants_reproduced_exactly():
    model = fit_periodic(per_bin_series(28, weekday_profile))
    for (weekday, b), cell in model.cells.items():
        assert cell.mean == float(WEEKDAY_LEVELS[weekday])


def test_fit_decay_weighting_hand_value():
    def two_weeks(d, b):
        return 100 if (d - MONDAY).days < 7 else 200

    model = fit_periodic(per_bin_series(14, two_weeks), decay=0.5)
    cell = model.cells[(0, PeriodBin.H06_08)]
    assert cell.mean == pytest.approx((200 * 1 + 100 * 0.5) / 1.5, abs=1e-9)


def test_fit_requires_two_full_weeks():
    with pytest.raises(InsufficientHistory):
        fit_periodic(per_bin_series(13, lambda d, b: 5))


def test_fit_rejects_bad_decay():
    with pytest.raises(ValueError):
        fit_periodic(per_bin_series(14, lambda d, b: 5), decay=0.0)


def test_predict_constant_model():
    model = fit_periodic(per_bin_series(14, lambda d, b: 77))
    assert predict(model, MONDAY + timedelta(days=30), PeriodBin.H10_12) == 77.0


def test_predict_weekday_constant_model_wednesday():
    model = fit_periodic(per_bin_series(28, weekday_profile))
    a_wednesday = MONDAY + timedelta(days=44)  # 2011-08-17
    assert a_wednesday.weekday() == 2
    assert predict(model, a_wednesday, PeriodBin.H08_10) == 300.0


def test_predict_clamps_negative_trend_to_zero():
    model = fit_periodic(per_bin_series(14, lambda d, b: 100))
    crashing = PeriodicModel(model.cells, model.decay, (-1000.0, 0.0), model.history_start, model.history_end)
    assert predict(crashing, model.history_end + timedelta(days=365), PeriodBin.H06_08) == 0.0


def test_predictions_invariant_under_history_reordering():
    series = per_bin_series(21, weekday_profile)
    shuffled = FlowSeries(
        series.key, series.granularity, tuple(np.random.default_rng(0).permutation(np.array(series.points, dtype=object)).tolist())
    )
    a = fit_periodic(series)
    b = fit_periodic(shuffled)
    day = MONDAY + timedelta(days=100)
    for bin_ in ALL_BINS:
        assert predict(a, day, bin_) == predict(b, day, bin_)


def test_decay_one_equals_arithmetic_mean():
    rng = np.random.default_rng(4)
    values = {}

    def noisy(d, b):
        key = (d, b)
        if key not in values:
            values[key] = int(rng.integers(10, 500))
        return values[key]

    series = per_bin_series(28, noisy)
    model = fit_periodic(series, decay=1.0)
    for (weekday, b), cell in model.cells.items():
        cell_values = [v for (d, bb, v) in series.points if d.weekday() == weekday and bb is b]
        assert cell.mean == pytest.approx(sum(cell_values) / len(cell_values), abs=1e-12)


def test_evaluate_perfect_predictions():
    train = per_bin_series(28, weekday_profile)
    holdout = per_bin_series(7, weekday_profile, start=MONDAY + timedelta(days=28))
    model = fit_periodic(train)
    mape, rmse = evaluate(model, holdout)
    assert mape == pytest.approx(0.0, abs=1e-9)
    assert rmse == pytest.approx(0.0, abs=1e-9)


def test_evaluate_hand_arithmetic():
    train = per_bin_series(28, lambda d, b: 110)
    model = fit_periodic(train)
    holdout = FlowSeries(
        "ALL", Granularity.PER_BIN, ((MONDAY + timedelta(days=28), PeriodBin.H06_08, 100),)
    )
    mape, rmse = evaluate(model, holdout)
    assert mape == pytest.approx(10.0, abs=1e-9)
    assert rmse == pytest.approx(10.0, abs=1e-9)


def test_evaluate_rejects_overlap_and_empty():
    train = per_bin_series(28, weekday_profile)
    model = fit_periodic(train)
    with pytest.raises(ValueError):
        evaluate(model, per_bin_series(7, weekday_profile, start=MONDAY + timedelta(days=21)))
    with pytest.raises(ValueError):
        evaluate(model, FlowSeries("ALL", Granularity.PER_BIN, ()))


def test_evaluate_mape_skips_zero_actuals():
    train = per_bin_series(14, lambda d, b: 10)
    model = fit_periodic(train)
    start = MONDAY + timedelta(days=14)
    holdout = FlowSeries(
        "ALL",
        Granularity.PER_BIN,
        ((start, PeriodBin.H06_08, 0), (start, PeriodBin.H08_10, 20)),
    )
    mape, _ = evaluate(model, holdout)
    assert mape == pytest.approx(50.0, abs=1e-9)


def test_noise_bound_calibrated():
    # 10% multiplicative noise on a weekday-periodic signal, 4-week train /
    # 1-week holdout. The 15% MAPE ceiling was checked over 100 seeds before
    # being frozen here (worst observed well under 15%).
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)

        def noisy(d, b):
            base = WEEKDAY_LEVELS[d.weekday()]
            return max(0.0, base * (1.0 + 0.1 * rng.standard_normal()))

        train = per_bin_series(28, noisy)
        holdout = per_bin_series(7, noisy, start=MONDAY + timedelta(days=28))
        mape, _ = evaluate(fit_periodic(train), holdout)
        worst = max(worst, mape)
    assert worst <= 15.0


def test_forecast_report_rows_are_clamped_nonnegative():
    # the trend stays off here: OLS on a weekday-periodic sawtooth picks up a
    # spurious within-week slope, which is exactly why it is opt-in
    train = per_bin_series(28, weekday_profile)
    model = fit_periodic(train, with_trend=False)
    holdout = per_bin_series(7, weekday_profile, start=MONDAY + timedelta(days=28))
    report = forecast_report(model, holdout)
    assert len(report.rows) == len(holdout.points)
    assert all(pred >= 0 for _, _, pred in report.rows)
    assert report.mape == pytest.approx(0.0, abs=1e-9)
