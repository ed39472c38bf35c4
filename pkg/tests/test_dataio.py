"""NFCM dataset container and the CSV/text emitters."""

import numpy as np
import pytest

from nfchan.aperture import compute_pdp, mean_pdp
from nfchan.channel import FrequencyGrid
from nfchan.dataio import (FORMAT_VERSION, MAGIC, emit_heatmap_grid,
                           emit_pdp_csv, emit_report, emit_sweep_csv,
                           read_dataset, read_heatmap_grid, write_dataset)
from nfchan.errors import DatasetFormatError
from nfchan.estimation import Bearing, Heatmap, localization_heatmap


class TestDatasetRoundTrip:
    def test_bit_exact(self, quick_synth, tmp_path):
        mset, _ = quick_synth
        p = tmp_path / "run.nfcm"
        write_dataset(mset, p)
        back = read_dataset(p)
        assert back.responses.dtype == np.complex128
        assert np.array_equal(back.responses, mset.responses)
        assert np.array_equal(back.plan.rx_positions, mset.plan.rx_positions)
        assert np.array_equal(back.plan.tx_positions, mset.plan.tx_positions)
        assert np.array_equal(back.plan.rx_ref, mset.plan.rx_ref)
        assert np.array_equal(back.plan.tx_ref, mset.plan.tx_ref)
        assert back.grid.center == mset.grid.center
        assert back.grid.bandwidth == mset.grid.bandwidth
        assert back.grid.num_tones == mset.grid.num_tones
        assert back.snr_db == mset.snr_db
        assert back.coherent == mset.coherent
        assert back.seed == mset.seed

    def test_write_is_deterministic(self, quick_synth, tmp_path):
        mset, _ = quick_synth
        a, b = tmp_path / "a.nfcm", tmp_path / "b.nfcm"
        write_dataset(mset, a)
        write_dataset(mset, b)
        assert a.read_bytes() == b.read_bytes()

    def test_snr_none_survives(self, quick_synth, tmp_path):
        mset, _ = quick_synth
        assert mset.snr_db is None
        p = tmp_path / "clean.nfcm"
        write_dataset(mset, p)
        assert read_dataset(p).snr_db is None

    def test_offsets_not_stored(self, quick_synth, tmp_path):
        mset, _ = quick_synth
        p = tmp_path / "run.nfcm"
        write_dataset(mset, p)
        assert read_dataset(p).plan.offsets is None


class TestDatasetErrors:
    def _blob(self, quick_synth, tmp_path):
        mset, _ = quick_synth
        p = tmp_path / "run.nfcm"
        write_dataset(mset, p)
        return p, bytearray(p.read_bytes())

    def test_bad_magic(self, quick_synth, tmp_path):
        p, blob = self._blob(quick_synth, tmp_path)
        blob[:4] = b"WAVE"
        p.write_bytes(blob)
        with pytest.raises(DatasetFormatError, match="magic"):
            read_dataset(p)

    def test_version_mismatch(self, quick_synth, tmp_path):
        p, blob = self._blob(quick_synth, tmp_path)
        blob[4] = FORMAT_VERSION + 1
        p.write_bytes(blob)
        with pytest.raises(DatasetFormatError, match="version"):
            read_dataset(p)

    def test_truncated_payload_names_byte_counts(self, quick_synth,
                                                 tmp_path):
        p, blob = self._blob(quick_synth, tmp_path)
        p.write_bytes(blob[:-17])
        with pytest.raises(DatasetFormatError) as err:
            read_dataset(p)
        msg = str(err.value)
        assert "truncated" in msg
        assert str(len(blob)) in msg and str(len(blob) - 17) in msg

    def test_zero_placements_is_dimension_error(self, quick_synth,
                                                tmp_path):
        p, blob = self._blob(quick_synth, tmp_path)
        blob[8:12] = (0).to_bytes(4, "little")  # K field
        p.write_bytes(blob)
        with pytest.raises(DatasetFormatError, match="dimensions"):
            read_dataset(p)

    def test_trailing_bytes_rejected(self, quick_synth, tmp_path):
        p, blob = self._blob(quick_synth, tmp_path)
        p.write_bytes(bytes(blob) + b"junk")
        with pytest.raises(DatasetFormatError, match="trailing"):
            read_dataset(p)

    def test_magic_constant(self):
        assert MAGIC == b"NFCM"


class TestPdpCsv:
    def test_flat_response_normalization(self, tmp_path):
        grid = FrequencyGrid(center=10e9, bandwidth=500e6, num_tones=32)
        pdp = compute_pdp(np.ones(32, dtype=complex), grid)
        p = tmp_path / "pdp.csv"
        emit_pdp_csv(pdp, p)
        lines = p.read_text().splitlines()
        assert lines[0] == "delay_ns,magnitude_db"
        assert len(lines) == 33
        first = [float(tok) for tok in lines[1].split(",")]
        assert first == [0.0, 0.0]
        # DFT of a constant is exactly zero off the first bin: every
        # later row carries the sentinel, which still parses as float.
        for line in lines[2:]:
            t, db = (float(tok) for tok in line.split(","))
            assert db <= -100.0

    def test_campaign_pdp_rows(self, quick_synth, tmp_path):
        mset, _ = quick_synth
        p = tmp_path / "pdp.csv"
        emit_pdp_csv(mean_pdp(mset), p)
        lines = p.read_text().splitlines()
        assert len(lines) == mset.grid.num_tones + 1
        dbs = [float(l.split(",")[1]) for l in lines[1:]]
        assert max(dbs) == 0.0


class TestHeatmapGrid:
    def bearings(self):
        return [Bearing([0.0, 0.0], np.arctan2(5, 10)),
                Bearing([0.8, 0.0], np.arctan2(5, 10 - 0.8))]

    def test_emitted_cells_sum_to_one(self, tmp_path):
        hm = localization_heatmap(self.bearings(), (0, 20, 0, 10), 0.5)
        p = tmp_path / "hm.csv"
        emit_heatmap_grid(hm, p)
        lines = p.read_text().splitlines()
        assert lines[0].startswith("# origin_x=")
        total = sum(float(v) for l in lines[1:] for v in l.split(","))
        assert abs(total - 1.0) <= 1e-6

    def test_round_trip(self, tmp_path):
        hm = localization_heatmap(self.bearings(), (0, 20, 0, 10), 0.5)
        p = tmp_path / "hm.csv"
        emit_heatmap_grid(hm, p)
        back = read_heatmap_grid(p)
        assert np.allclose(back.scores, hm.scores, rtol=1e-12)
        assert back.cell == hm.cell
        assert np.allclose(back.origin, hm.origin)

    def test_header_required(self, tmp_path):
        p = tmp_path / "hm.csv"
        p.write_text("1,2\n3,4\n")
        with pytest.raises(DatasetFormatError, match="header"):
            read_heatmap_grid(p)


class TestReport:
    def test_mirrors_fields(self, quick_report, tmp_path):
        p = tmp_path / "report.txt"
        emit_report(quick_report, p)
        text = p.read_text()
        for section in ("extraction:", "bearings:", "triangulations:",
                        "anchor_index:", "taus_ns:", "image_points:",
                        "parities:", "rm_paths:", "truth:", "matches",
                        "errors:", "timing_s:"):
            assert section in text
        # four extracted paths, angles in degrees
        assert len(quick_report.paths) == 4
        assert text.count("path ") >= 4
        assert "deg" in text

    def test_no_truth_sections_without_truth(self, quick_synth, quick_cfg,
                                             tmp_path):
        from nfchan.pipeline import run_estimate
        mset, _ = quick_synth
        report = run_estimate(mset, quick_cfg)
        p = tmp_path / "report.txt"
        emit_report(report, p)
        text = p.read_text()
        assert "truth:" not in text
        assert "errors:" not in text


class TestSweepCsv:
    def test_columns_and_rows(self, tmp_path):
        rows = [{"value": 0.0, "n_paths": 4, "residual_fraction": 0.01,
                 "los_error_m": 0.5, "mean_image_error_m": 0.6,
                 "runtime_s": 1.25},
                {"value": 10.0, "n_paths": 4, "residual_fraction": 0.001,
                 "los_error_m": 0.05, "mean_image_error_m": 0.06,
                 "runtime_s": 1.5}]
        p = tmp_path / "sweep.csv"
        emit_sweep_csv("snr", rows, p)
        lines = p.read_text().splitlines()
        assert lines[0] == ("snr,n_paths,residual_fraction,los_error_m,"
                            "mean_image_error_m,runtime_s")
        assert len(lines) == 3
        assert lines[1].split(",")[0] == "0"
        assert float(lines[2].split(",")[3]) == 0.05
