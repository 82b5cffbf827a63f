from pathlib import Path
import tempfile
import unittest

import numpy as np
import pandas as pd

from scripts.rvpp.domain import TimeGrid
from scripts.rvpp.synthetic import PV_WINDOW_HOURS, generate_synthetic, nested, pv_profile


class GenerateSyntheticTests(unittest.TestCase):
    def test_writes_every_file(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            config_path = generate_synthetic(1, out_dir=Path(tmpdir))
            names = sorted(path.name for path in Path(tmpdir).iterdir())
            self.assertEqual(config_path.name, "portfolio.cfg")
            self.assertEqual(
                names, ["demand_load.csv", "portfolio.cfg", "prices.csv", "unit_pv.csv", "unit_wind.csv"]
            )
            prices = pd.read_csv(Path(tmpdir) / "prices.csv")
            self.assertEqual(len(prices), 96)
            self.assertIn("da_dev_dn_3", prices.columns)
            self.assertNotIn("da_dev_dn_4", prices.columns)

    def test_same_seed_same_bytes(self):
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            generate_synthetic(5, out_dir=Path(first))
            generate_synthetic(5, out_dir=Path(second))
            for name in ("prices.csv", "unit_wind.csv", "demand_load.csv", "portfolio.cfg"):
                self.assertEqual((Path(first) / name).read_bytes(), (Path(second) / name).read_bytes())

    def test_bounds_are_nested(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            generate_synthetic(2, out_dir=Path(tmpdir))
            wind = pd.read_csv(Path(tmpdir) / "unit_wind.csv")
            prices = pd.read_csv(Path(tmpdir) / "prices.csv")
        self.assertTrue((wind["dev_dn_1"] <= wind["dev_dn_2"]).all())
        self.assertTrue((wind["dev_dn_2"] <= wind["dev_dn_3"]).all())
        self.assertTrue((prices["da_dev_up_1"] > 0).all())

    def test_hour_constant_series(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            generate_synthetic(4, out_dir=Path(tmpdir), hour_constant=True)
            prices = pd.read_csv(Path(tmpdir) / "prices.csv")
        hourly = prices["da_median"].to_numpy().reshape(24, 4)
        np.testing.assert_allclose(hourly, np.repeat(hourly[:, :1], 4, axis=1))

    def test_preset_is_written(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = generate_synthetic(4, out_dir=Path(tmpdir), budget_preset="table3:pessimistic:mbro")
            text = path.read_text(encoding="utf-8")
        self.assertIn("preset = table3:pessimistic:mbro", text)
        self.assertIn("strategy = pessimistic", text)


class ProfileTests(unittest.TestCase):
    def test_pv_is_zero_at_night(self):
        grid = TimeGrid.quarter_hourly()
        pv = pv_profile(grid, np.random.default_rng(0))
        hours = np.arange(96) * 0.25
        start, end = PV_WINDOW_HOURS
        self.assertTrue(np.all(pv[(hours < start) | (hours >= end)] == 0.0))
        self.assertGreater(pv.max(), 0.0)

    def test_nested_scales_a_base(self):
        bounds = nested(np.array([10.0, 20.0]), (0.1, 0.5))
        self.assertEqual(sorted(bounds), [1, 2])
        np.testing.assert_allclose(bounds[2], [5.0, 10.0])


if __name__ == "__main__":
    unittest.main()
