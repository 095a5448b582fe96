import json

import numpy as np
import pytest

from mqf2 import data
from mqf2.errors import (
    ConfigError,
    LengthMismatch,
    MissingMetadata,
    ParseError,
    SeriesTooShort,
    UnknownFrequency,
)


def toy_dataset(freq="H", tau=3):
    rng = np.random.default_rng(0)
    series = []
    for i in range(4):
        length = 10 + i
        target = rng.standard_normal(length)
        cov = rng.standard_normal((length, 2)) if i % 2 == 0 else None
        series.append(data.Series(f"s{i}", "2021-03-01 00:00:00", target, cov))
    return data.TimeSeriesDataset(series, freq, tau)


class TestJsonlinesIo:
    def test_round_trip(self, tmp_path):
        ds = toy_dataset()
        path = tmp_path / "train.jsonl"
        data.save_jsonlines(ds, path)
        back = data.load_jsonlines(path)
        assert back.freq == ds.freq
        assert back.prediction_length == ds.prediction_length
        assert len(back) == len(ds)
        for a, b in zip(ds.series, back.series):
            assert a.item_id == b.item_id
            assert a.start == b.start
            np.testing.assert_array_equal(a.target, b.target)
            if a.covariates is None:
                assert b.covariates is None
            else:
                np.testing.assert_array_equal(a.covariates, b.covariates)

    def test_save_is_idempotent(self, tmp_path):
        ds = toy_dataset()
        p1 = tmp_path / "a" / "d.jsonl"
        p2 = tmp_path / "b" / "d.jsonl"
        data.save_jsonlines(ds, p1)
        data.save_jsonlines(data.load_jsonlines(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_metadata(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"start":"2020-01-01 00:00:00","target":[1,2,3]}\n')
        with pytest.raises(MissingMetadata):
            data.load_jsonlines(path)

    def test_metadata_missing_keys(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"start":"2020-01-01 00:00:00","target":[1,2,3]}\n')
        (tmp_path / "metadata.json").write_text('{"freq":"H"}')
        with pytest.raises(MissingMetadata):
            data.load_jsonlines(path)

    def test_unknown_frequency(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"start":"2020-01-01 00:00:00","target":[1,2,3]}\n')
        (tmp_path / "metadata.json").write_text(
            '{"freq":"5min","prediction_length":1}'
        )
        with pytest.raises(UnknownFrequency):
            data.load_jsonlines(path)

    def test_parse_error_reports_line_number(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(
            '{"start":"2020-01-01 00:00:00","target":[1,2,3]}\n'
            "not json at all\n"
        )
        (tmp_path / "metadata.json").write_text('{"freq":"H","prediction_length":1}')
        with pytest.raises(ParseError) as err:
            data.load_jsonlines(path)
        assert err.value.line_number == 2
        assert ":2:" in str(err.value)

    def test_missing_target_key(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"start":"2020-01-01 00:00:00"}\n')
        (tmp_path / "metadata.json").write_text('{"freq":"H","prediction_length":1}')
        with pytest.raises(ParseError) as err:
            data.load_jsonlines(path)
        assert err.value.line_number == 1

    def test_covariate_length_mismatch(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(
            '{"start":"2020-01-01 00:00:00","target":[1,2,3],'
            '"feat_dynamic_real":[[0.1,0.2]]}\n'
        )
        (tmp_path / "metadata.json").write_text('{"freq":"H","prediction_length":1}')
        with pytest.raises(LengthMismatch):
            data.load_jsonlines(path)

    def test_default_item_ids_follow_line_order(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(
            '{"start":"2020-01-01 00:00:00","target":[1]}\n'
            '{"start":"2020-01-01 00:00:00","target":[2]}\n'
        )
        (tmp_path / "metadata.json").write_text('{"freq":"H","prediction_length":1}')
        ds = data.load_jsonlines(path)
        assert [s.item_id for s in ds.series] == ["series_0", "series_1"]

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(
            '{"start":"2020-01-01 00:00:00","target":[1]}\n'
            "\n"
            '{"start":"2020-01-01 00:00:00","target":[2]}\n'
        )
        (tmp_path / "metadata.json").write_text('{"freq":"H","prediction_length":1}')
        assert len(data.load_jsonlines(path)) == 2


class TestSplit:
    def test_lengths_and_reassembly(self):
        rng = np.random.default_rng(3)
        series = [
            data.Series("a", "2021-01-01 00:00:00", rng.standard_normal(10))
        ]
        ds = data.TimeSeriesDataset(series, "D", 4)
        train, test = data.split(ds)
        assert len(train.series[0]) == 6
        assert len(test.series[0]) == 10
        np.testing.assert_array_equal(
            np.concatenate([train.series[0].target, test.series[0].target[-4:]]),
            ds.series[0].target,
        )

    def test_covariates_trimmed_with_target(self):
        ds = toy_dataset(tau=3)
        train, _ = data.split(ds)
        for s in train.series:
            if s.covariates is not None:
                assert s.covariates.shape[0] == len(s)

    def test_too_short_lists_offenders(self):
        series = [
            data.Series("ok", "2021-01-01 00:00:00", np.zeros(5)),
            data.Series("bad", "2021-01-01 00:00:00", np.zeros(4)),
        ]
        ds = data.TimeSeriesDataset(series, "D", 4)
        with pytest.raises(SeriesTooShort) as err:
            data.split(ds)
        assert err.value.ids == ["bad"]

    def test_holdout_equal_to_length_rejected(self):
        # leaves no history at all, which downstream conditioning needs
        series = [data.Series("a", "2021-01-01 00:00:00", np.zeros(4))]
        with pytest.raises(SeriesTooShort):
            data.split(data.TimeSeriesDataset(series, "D", 4))


class TestCalendarFeatures:
    def test_hourly_first_row_and_wraparound(self):
        # start is a Wednesday midnight; 25th step lands on the next day 00:00
        feats = data.calendar_features("H", "2020-01-01 00:00:00", 26)
        assert feats[0, 0] == 0.0
        assert feats[0, 1] == 2 / 6
        assert feats[24, 0] == 0.0
        assert feats[24, 1] == 3 / 6
        assert feats[25, 0] == 1 / 23

    def test_daily(self):
        feats = data.calendar_features("D", "2020-01-30 00:00:00", 3)
        # Jan 30 is a Thursday; Feb 1 resets day-of-month
        assert feats[0, 0] == 3 / 6
        assert feats[0, 1] == 29 / 30
        assert feats[2, 1] == 0.0

    def test_monthly_wraps_december(self):
        feats = data.calendar_features("M", "2020-11-15 00:00:00", 4)
        np.testing.assert_allclose(
            feats[:, 0], [10 / 11, 11 / 11, 0.0, 1 / 11]
        )

    def test_quarterly(self):
        feats = data.calendar_features("Q", "2020-10-01 00:00:00", 3)
        np.testing.assert_allclose(feats[:, 0], [3 / 3, 0.0, 1 / 3])

    def test_weekly_in_range(self):
        feats = data.calendar_features("W", "2020-01-06 00:00:00", 60)
        assert feats.shape == (60, 1)
        assert np.all(feats >= 0.0) and np.all(feats <= 1.0)

    def test_yearly_has_no_columns(self):
        feats = data.calendar_features("Y", "2020-01-01 00:00:00", 5)
        assert feats.shape == (5, 0)

    def test_all_frequencies_stay_in_unit_interval(self):
        for freq in data.FREQUENCIES:
            feats = data.calendar_features(freq, "2019-12-29 00:00:00", 400)
            assert feats.shape[1] == data.feature_dim(freq)
            if feats.size:
                assert feats.min() >= 0.0
                assert feats.max() <= 1.0

    def test_unknown_frequency(self):
        with pytest.raises(UnknownFrequency):
            data.calendar_features("5min", "2020-01-01 00:00:00", 3)
        with pytest.raises(UnknownFrequency):
            data.feature_dim("T")


class TestGpSynthetic:
    def test_kernel_diagonal(self):
        config = data.GpConfig()
        k = data.gp_kernel(config)
        np.testing.assert_allclose(
            np.diag(k),
            config.rbf_variance + config.periodic_variance + config.noise_jitter,
        )

    def test_kernel_periodic_band(self):
        # one full period apart: the periodic term is back at full variance
        config = data.GpConfig(length=30)
        k = data.gp_kernel(config)
        lag = int(config.periodic_period)
        rbf_at_lag = config.rbf_variance * np.exp(
            -(lag**2) / (2 * config.rbf_lengthscale**2)
        )
        np.testing.assert_allclose(
            k[0, lag], rbf_at_lag + config.periodic_variance, atol=1e-12
        )

    def test_empirical_covariance_matches_kernel(self):
        config = data.GpConfig(num_series=100_000, length=12)
        ds = data.gp_synthesize(config)
        draws = np.stack([s.target for s in ds.series])
        emp = draws.T @ draws / config.num_series
        k = data.gp_kernel(config)
        assert np.max(np.abs(emp - k) / (1.0 + np.abs(k))) < 0.02

    def test_deterministic_per_seed(self):
        a = data.gp_synthesize(data.GpConfig(num_series=5))
        b = data.gp_synthesize(data.GpConfig(num_series=5))
        c = data.gp_synthesize(data.GpConfig(num_series=5, seed=1))
        for sa, sb in zip(a.series, b.series):
            np.testing.assert_array_equal(sa.target, sb.target)
        assert not np.array_equal(a.series[0].target, c.series[0].target)

    def test_dataset_shape(self):
        ds = data.gp_synthesize(data.GpConfig(num_series=7, length=24))
        assert len(ds) == 7
        assert ds.freq == "H"
        assert ds.prediction_length == 24
        assert all(len(s) == 24 for s in ds.series)
        assert all(s.covariates is None for s in ds.series)

    def test_truth_correlation_unit_diagonal(self):
        corr = data.gp_truth_correlation(data.GpConfig())
        np.testing.assert_allclose(np.diag(corr), 1.0, atol=1e-12)
        np.testing.assert_allclose(corr, corr.T, atol=1e-15)
        assert np.all(np.abs(corr) <= 1.0 + 1e-12)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            data.GpConfig(rbf_lengthscale=0.0)
        with pytest.raises(ConfigError):
            data.GpConfig(noise_jitter=1e-9)
        with pytest.raises(ConfigError):
            data.GpConfig(length=1)


class TestIidGaussianDataset:
    def test_structure(self):
        ds = data.iid_gaussian_dataset(50, context_length=8, mean=5.0, std=2.0, seed=3)
        assert ds.freq == "Y"
        assert ds.prediction_length == 1
        for s in ds.series:
            assert len(s) == 9
            np.testing.assert_array_equal(s.target[:-1], 0.0)

    def test_final_values_match_moments(self):
        ds = data.iid_gaussian_dataset(
            20_000, context_length=2, mean=5.0, std=2.0, seed=3
        )
        finals = np.array([s.target[-1] for s in ds.series])
        assert abs(finals.mean() - 5.0) < 0.05
        assert abs(finals.std() - 2.0) < 0.05


class TestCorrIo:
    def test_round_trip(self, tmp_path):
        corr = data.gp_truth_correlation(data.GpConfig(length=10))
        path = tmp_path / "corr.csv"
        data.export_corr(corr, path)
        back = data.read_corr(path)
        np.testing.assert_allclose(back, corr, atol=1e-12)

    def test_rejects_non_matrix(self, tmp_path):
        with pytest.raises(ConfigError):
            data.export_corr(np.zeros(3), tmp_path / "x.csv")
