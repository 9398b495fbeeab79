from __future__ import annotations

import numpy as np
import pytest

from bvss.panel import (
    PanelBoundsError,
    PanelData,
    PanelError,
    PanelParseError,
    load_panel,
    standardize_check,
    write_panel,
)


def _write(path, rows):
    path.write_text("\n".join(",".join(map(str, r)) for r in rows) + "\n")
    return path


class TestPanelData:
    def test_shapes(self, panel):
        assert (panel.M, panel.N, panel.M_post) == (12, 4, 5)
        assert panel.unit_names == ("unit1", "unit2", "unit3", "unit4")
        assert len(panel.time_labels) == 17

    def test_arrays_read_only(self, panel):
        with pytest.raises(ValueError):
            panel.X[0, 0] = 1.0

    def test_gram_cache(self, panel):
        np.testing.assert_allclose(panel.gram, panel.X.T @ panel.X)
        np.testing.assert_allclose(panel.xty, panel.X.T @ panel.Y)
        assert panel.yty == pytest.approx(panel.Y @ panel.Y)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(Y=np.zeros(3), X=np.zeros((3, 1)), Xpost=np.zeros((1, 1)), Ypost1=np.zeros(1)),
            dict(Y=np.zeros(2), X=np.zeros((3, 2)), Xpost=np.zeros((1, 2)), Ypost1=np.zeros(1)),
            dict(Y=np.zeros(3), X=np.zeros((3, 2)), Xpost=np.zeros((1, 3)), Ypost1=np.zeros(1)),
            dict(Y=np.zeros(3), X=np.zeros((3, 2)), Xpost=np.zeros((0, 2)), Ypost1=np.zeros(0)),
            dict(Y=np.array([0, np.nan, 0]), X=np.zeros((3, 2)), Xpost=np.zeros((1, 2)), Ypost1=np.zeros(1)),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(PanelError):
            PanelData(**kwargs)


class TestLoadPanel:
    def test_split_nfp_shape(self, tmp_path):
        # 56 periods, treated + 8 controls, treatment after 33 months
        rng = np.random.default_rng(0)
        rows = [["month", "treated"] + [f"c{k}" for k in range(8)]]
        rows += [[f"t{t}"] + list(rng.standard_normal(9)) for t in range(56)]
        p = load_panel(_write(tmp_path / "p.csv", rows), 33)
        assert (p.M, p.M_post, p.N) == (33, 23, 8)
        assert p.unit_names == tuple(f"c{k}" for k in range(8))
        assert p.time_labels[0] == "t0" and p.time_labels[-1] == "t55"

    def test_minimal(self, tmp_path):
        rows = [["t", "y", "a", "b"], [1, 1.0, 2.0, 3.0], [2, 4.0, 5.0, 6.0]]
        p = load_panel(_write(tmp_path / "p.csv", rows), 1)
        assert (p.M, p.M_post, p.N) == (1, 1, 2)
        np.testing.assert_array_equal(p.Y, [1.0])
        np.testing.assert_array_equal(p.Xpost, [[5.0, 6.0]])

    def test_na_cell(self, tmp_path):
        rows = [["t", "y", "a", "b"], [1, 1.0, "NA", 3.0], [2, 4.0, 5.0, 6.0]]
        with pytest.raises(PanelParseError, match=r"row 2.*column 3.*'a'"):
            load_panel(_write(tmp_path / "p.csv", rows), 1)

    def test_ragged(self, tmp_path):
        rows = [["t", "y", "a", "b"], [1, 1.0, 2.0, 3.0], [2, 4.0, 5.0]]
        with pytest.raises(PanelParseError, match="row 3"):
            load_panel(_write(tmp_path / "p.csv", rows), 1)

    @pytest.mark.parametrize("idx", [0, 2, -1])
    def test_bounds(self, tmp_path, idx):
        rows = [["t", "y", "a", "b"], [1, 1.0, 2.0, 3.0], [2, 4.0, 5.0, 6.0]]
        with pytest.raises(PanelBoundsError):
            load_panel(_write(tmp_path / "p.csv", rows), idx)

    def test_roundtrip_bit_exact(self, tmp_path, panel):
        path = tmp_path / "p.csv"
        write_panel(panel, path)
        q = load_panel(path, panel.M)
        for a in ("Y", "X", "Xpost", "Ypost1"):
            np.testing.assert_array_equal(getattr(q, a), getattr(panel, a))
        assert q.unit_names == panel.unit_names

    def test_pure(self, tmp_path, panel):
        path = tmp_path / "p.csv"
        write_panel(panel, path)
        a, b = load_panel(path, 7), load_panel(path, 7)
        np.testing.assert_array_equal(a.X, b.X)
        assert a.time_labels == b.time_labels


class TestStandardizeCheck:
    def test_unit_norm(self):
        M = 4
        X = np.array([[1.0, 2.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        p = PanelData(np.zeros(M), X, np.zeros((1, 2)), np.zeros(1))
        np.testing.assert_allclose(standardize_check(p), [1.0, 1.0])

    def test_zero_column(self):
        X = np.array([[0.0, 1.0], [0.0, 2.0]])
        p = PanelData(np.zeros(2), X, np.zeros((1, 2)), np.zeros(1))
        assert standardize_check(p)[0] == 0.0

    def test_direct(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((100, 5))
        p = PanelData(np.zeros(100), X, np.zeros((1, 5)), np.zeros(1))
        direct = [np.sqrt(sum(v * v for v in X[:, j]) / 100) for j in range(5)]
        np.testing.assert_allclose(standardize_check(p), direct, rtol=1e-12)
        assert np.all(np.abs(standardize_check(p) - 1) < 0.3)
        X0 = np.array(p.X)
        standardize_check(p)
        np.testing.assert_array_equal(p.X, X0)
