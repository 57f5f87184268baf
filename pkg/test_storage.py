import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

import ebeam_esr.storage as st
from ebeam_esr.errors import ParseError


class TestStorage(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_store_and_load_frame(self):
        df = pd.DataFrame({"omega_rad_s": [2.18e9, 2.18e9 + 1 / 3], "value_V": [1e-9 / 7, -2.5e-10]})
        path = self.dir / "nested" / "spectrum.csv"
        st.store_frame(df, path)
        raw = path.read_bytes()
        self.assertTrue(raw.startswith(b"omega_rad_s,value_V\n"))
        self.assertNotIn(b"\r", raw)
        back = st.load_frame(path, st.SPECTRUM_COLUMNS)
        np.testing.assert_array_equal(back.to_numpy(), df.to_numpy())

    def test_load_spectrum(self):
        df = pd.DataFrame({"omega_rad_s": np.linspace(1.0, 2.0, 9), "value_V": np.arange(9.0), "extra": 1})
        st.store_frame(df, self.dir / "s.csv")
        spec = st.load_spectrum(self.dir / "s.csv")
        self.assertEqual(len(spec), 9)
        self.assertEqual(spec.values[3], 3.0)

    def test_missing_column(self):
        st.store_frame(pd.DataFrame({"omega": [1.0], "i_V": [0.0]}), self.dir / "iq.csv")
        with self.assertRaises(ParseError) as ctx:
            st.load_iq(self.dir / "iq.csv")
        self.assertEqual(ctx.exception.field, "q_V")

    def test_non_numeric_column(self):
        (self.dir / "bad.csv").write_text("omega_rad_s,value_V\n1.0,abc\n2.0,1.0\n")
        with self.assertRaises(ParseError) as ctx:
            st.load_spectrum(self.dir / "bad.csv")
        self.assertEqual(ctx.exception.field, "value_V")

    def test_unordered_spectrum(self):
        (self.dir / "rev.csv").write_text("omega_rad_s,value_V\n2.0,1.0\n1.0,1.0\n")
        with self.assertRaises(ParseError):
            st.load_spectrum(self.dir / "rev.csv")

    def test_missing_file(self):
        with self.assertRaises(ParseError):
            st.load_spectrum(self.dir / "absent.csv")

    def test_report_roundtrip(self):
        report = {"omega0": repr(2.18e9 + 0.1), "covariance": json.dumps([[1.0, 2e-3]], separators=(",", ":"))}
        st.write_report(self.dir / "fit.txt", report)
        self.assertEqual(st.read_report(self.dir / "fit.txt"), report)

    def test_run_report(self):
        run = st.RunReport(scenario_digest="ab" * 32, command="sweep", outputs=[{"d_m": 0.0}],
                           provenance={"tool_version": "0.3.0"}, wall_time_s=1.5)
        st.write_run_report(self.dir / "out.run.json", run)
        doc = json.loads((self.dir / "out.run.json").read_text())
        self.assertEqual(doc["command"], "sweep")
        self.assertEqual(doc["outputs"], [{"d_m": 0.0}])


if __name__ == "__main__":
    unittest.main()
