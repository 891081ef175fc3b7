"""TSV parsing/writing and the fit JSON round-trip."""

import numpy as np
import pytest

from ebshrink.crossval import predict
from ebshrink.em import ResponsePanel, fit
from ebshrink.errors import NaInCovariates, ParseError
from ebshrink.fileio import (
    fmt,
    read_fit_json,
    read_matrix_tsv,
    write_fit_json,
    write_matrix_tsv,
)
from ebshrink.linalg import build_design


def write_text(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestFmt:
    def test_round_trips_doubles(self):
        rng = np.random.default_rng(90)
        for v in rng.standard_normal(200) * 10.0 ** rng.integers(-12, 12, 200):
            assert float(fmt(v)) == v

    def test_plain_values(self):
        assert fmt(1.0) == "1"
        assert fmt(0.5) == "0.5"


class TestReadMatrixTsv:
    def test_single_column(self, tmp_path):
        p = write_text(tmp_path / "x.tsv", "snp1\n1\n3\n")
        mf = read_matrix_tsv(p)
        assert mf.col_ids == ["snp1"]
        assert mf.row_ids is None
        assert np.array_equal(mf.values, np.array([[1.0], [3.0]]))
        assert not mf.na_mask.any()

    def test_row_id_column(self, tmp_path):
        p = write_text(
            tmp_path / "x.tsv", "#id\ta\tb\nr1\t1\t2\nr2\t3\t4\n"
        )
        mf = read_matrix_tsv(p)
        assert mf.col_ids == ["a", "b"]
        assert mf.row_ids == ["r1", "r2"]
        assert np.array_equal(mf.values, np.array([[1.0, 2.0], [3.0, 4.0]]))

    def test_na_allowed_only_on_request(self, tmp_path):
        p = write_text(tmp_path / "y.tsv", "t1\tt2\n1\tNA\n2\t5\n")
        with pytest.raises(NaInCovariates):
            read_matrix_tsv(p)
        mf = read_matrix_tsv(p, allow_na=True)
        assert np.isnan(mf.values[0, 1])
        assert mf.na_mask[0, 1] and mf.na_mask.sum() == 1

    def test_overflow_is_a_parse_error(self, tmp_path):
        p = write_text(tmp_path / "x.tsv", "a\n1e999\n")
        with pytest.raises(ParseError):
            read_matrix_tsv(p)

    def test_ragged_row_coordinates(self, tmp_path):
        p = write_text(tmp_path / "x.tsv", "a\tb\n1\t2\n3\n")
        with pytest.raises(ParseError) as exc:
            read_matrix_tsv(p)
        assert exc.value.row == 3

    def test_bad_cell_coordinates(self, tmp_path):
        p = write_text(tmp_path / "x.tsv", "a\tb\n1\t2\n3\tfoo\n")
        with pytest.raises(ParseError) as exc:
            read_matrix_tsv(p)
        assert exc.value.row == 3
        assert exc.value.col == 2

    def test_empty_file(self, tmp_path):
        p = write_text(tmp_path / "x.tsv", "")
        with pytest.raises(ParseError):
            read_matrix_tsv(p)


class TestWriteMatrixTsv:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(91)
        values = rng.standard_normal((6, 4)) * 10.0 ** rng.integers(-8, 8, (6, 4))
        p = tmp_path / "m.tsv"
        write_matrix_tsv(p, values, col_ids=[f"c{j}" for j in range(4)])
        back = read_matrix_tsv(str(p))
        assert np.array_equal(back.values, values)

    def test_row_ids_round_trip(self, tmp_path):
        values = np.array([[1.5, 2.5]])
        p = tmp_path / "m.tsv"
        write_matrix_tsv(p, values, col_ids=["a", "b"], row_ids=["only"])
        text = p.read_text()
        assert text.startswith("#id\t")
        back = read_matrix_tsv(str(p))
        assert back.row_ids == ["only"]
        assert np.array_equal(back.values, values)

    def test_na_mask_written_as_na(self, tmp_path):
        values = np.array([[1.0, np.nan], [3.0, 4.0]])
        mask = np.isnan(values)
        p = tmp_path / "y.tsv"
        write_matrix_tsv(p, values, col_ids=["t1", "t2"], na_mask=mask)
        assert "NA" in p.read_text()
        back = read_matrix_tsv(str(p), allow_na=True)
        assert np.array_equal(back.na_mask, mask)
        assert np.array_equal(back.values[~mask], values[~mask])

    def test_default_column_ids(self, tmp_path):
        p = tmp_path / "m.tsv"
        write_matrix_tsv(p, np.ones((2, 3)))
        back = read_matrix_tsv(str(p))
        assert back.col_ids == ["col1", "col2", "col3"]


class TestFitJson:
    def fitted(self, seed=92):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((15, 3))
        d = build_design(x)
        y = x @ rng.standard_normal((3, 4)) + rng.standard_normal((15, 4))
        panel = ResponsePanel(y, tissue_names=("liver", "lung", "brain", "skin"))
        return d, panel, fit(d, panel)

    def test_round_trip_parameters(self, tmp_path):
        _, panel, res = self.fitted()
        p = tmp_path / "fit.json"
        write_fit_json(p, res, panel.tissue_names)
        back, names = read_fit_json(str(p))
        assert names == list(panel.tissue_names)
        assert back.params.tau1 == res.params.tau1
        assert back.params.sigma2 == res.params.sigma2
        assert back.params.eta == res.params.eta
        assert np.array_equal(back.params.beta, res.params.beta)
        assert back.iterations == res.iterations
        assert back.converged == res.converged
        assert np.array_equal(
            np.asarray(back.loglik_trace), np.asarray(res.loglik_trace)
        )
        for a, b in zip(back.posteriors, res.posteriors):
            assert a.h == b.h
            assert np.array_equal(a.post_mean, b.post_mean)
            assert a.log_bf == b.log_bf
            assert a.log_odds == b.log_odds

    def test_predictions_survive_round_trip_bitwise(self, tmp_path):
        d, panel, res = self.fitted(seed=93)
        p = tmp_path / "fit.json"
        write_fit_json(p, res, panel.tissue_names)
        back, _ = read_fit_json(str(p))
        probe = np.random.default_rng(94).standard_normal((7, 3))
        assert np.array_equal(predict(probe, back), predict(probe, res))
