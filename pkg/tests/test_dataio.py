"""Round-trip identities and failure reporting of the file formats."""

import numpy as np
import pytest

from pdqkd.dataio import (EVENTS_HEADER, ResultsRow, RunManifest,
                          read_config, read_events, read_results, read_tally,
                          tally_from_events, write_config, write_events,
                          write_results, write_tally)
from pdqkd.errors import ConfigError, DataFormatError, ParameterError
from pdqkd.event_sim import EVENT_DTYPE, EventRecord, SimConfig, simulate_run
from pdqkd.presets import preset_manifest


class TestConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("")
        manifest = read_config(path)
        assert manifest.explicit == frozenset()
        assert "mu0" in manifest.defaults_used
        assert manifest["q"] == 0.5 and manifest["f"] == 1.2

    def test_write_read_write_is_byte_identical(self, tmp_path):
        manifest = preset_manifest("paper50km")
        p1, p2 = tmp_path / "a.cfg", tmp_path / "b.cfg"
        write_config(manifest, p1)
        write_config(read_config(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_paper_config_round_trips_values(self, tmp_path):
        manifest = preset_manifest("paper50km")
        path = tmp_path / "p50.cfg"
        write_config(manifest, path)
        back = read_config(path)
        assert back.values == manifest.values
        assert back.to_source_params().mu == pytest.approx(0.028, rel=1e-12)
        assert back["eta_db"] == 30.4

    def test_unknown_key_listed(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("mu0 = 1.0\nwavelength = 1556\n")
        with pytest.raises(ConfigError, match="unknown keys: wavelength"):
            read_config(path)

    def test_range_error_names_key(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("eta_a = 1.5\n")
        with pytest.raises(ConfigError, match="eta_a"):
            read_config(path)

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("mu0 = 1.0\nthis line has no separator\n")
        with pytest.raises(ConfigError, match=":2:"):
            read_config(path)

    def test_duplicate_key_rejected(self, tmp_path):
        path = tmp_path / "dup.cfg"
        path.write_text("mu0 = 1.0\nmu0 = 2.0\n")
        with pytest.raises(ConfigError, match="duplicate"):
            read_config(path)

    def test_overrides_validate(self):
        manifest = RunManifest(values={})
        with pytest.raises(ConfigError, match="unknown"):
            manifest.with_overrides({"nope": "1"})
        with pytest.raises(ConfigError, match="eta_a"):
            manifest.with_overrides({"eta_a": "2.0"})
        bumped = manifest.with_overrides({"mu0": "2.5", "seed": "42"})
        assert bumped["mu0"] == 2.5 and bumped["seed"] == 42
        assert "mu0" in bumped.explicit


class TestEvents:
    @staticmethod
    def _sample_events(n=10_000):
        manifest = preset_manifest("paper50km")
        source = manifest.to_source_params()
        from pdqkd.link_model import LinkParams, db_to_linear
        link = LinkParams(eta=db_to_linear(8.0), y0=1.6e-6, e_d=0.012)
        _, events = simulate_run(source, link,
                                 SimConfig(n_pulses=n, seed=99, record_events=True))
        return events

    def test_empty_stream_gives_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_events(np.empty(0, dtype=EVENT_DTYPE), path)
        lines = path.read_text().splitlines()
        assert lines[1] == EVENTS_HEADER and len(lines) == 2
        assert len(read_events(path)) == 0

    def test_csv_round_trip_10k(self, tmp_path):
        events = self._sample_events()
        path = tmp_path / "events.csv"
        write_events(events, path)
        assert np.array_equal(read_events(path), events)

    def test_npy_round_trip(self, tmp_path):
        events = self._sample_events(2_000)
        path = tmp_path / "events.npy"
        write_events(events, path, fmt="npy")
        assert np.array_equal(read_events(path), events)

    def test_pipeline_identity(self, tmp_path):
        manifest = preset_manifest("paper50km")
        source = manifest.to_source_params()
        from pdqkd.link_model import LinkParams, db_to_linear
        link = LinkParams(eta=db_to_linear(8.0), y0=1.6e-6, e_d=0.012)
        tally, events = simulate_run(source, link,
                                     SimConfig(n_pulses=20_000, seed=5, record_events=True))
        path = tmp_path / "ev.csv"
        write_events(events, path)
        assert tally_from_events(read_events(path)) == tally

    def test_record_list_input(self, tmp_path):
        records = [EventRecord(pulse_id=0, triggered=False, alice_basis=0, alice_bit=1,
                               bob_basis=0, bob_clicked=True, bob_bit=1,
                               dark_origin=False, double_click=False),
                   EventRecord(pulse_id=1, triggered=True, alice_basis=1, alice_bit=0,
                               bob_basis=0, bob_clicked=False, bob_bit=0,
                               dark_origin=False, double_click=False)]
        path = tmp_path / "recs.csv"
        write_events(records, path)
        back = read_events(path)
        assert back["pulse_id"].tolist() == [0, 1]
        assert back["bob_clicked"].tolist() == [1, 0]

    def test_malformed_row_reports_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# pdqkd:events:v1\n" + EVENTS_HEADER + "\n1,0,0\n")
        with pytest.raises(DataFormatError, match="3"):
            read_events(path)

    def test_out_of_order_rejected(self, tmp_path):
        events = np.zeros(2, dtype=EVENT_DTYPE)
        events["pulse_id"] = [5, 3]
        with pytest.raises(DataFormatError, match="increasing"):
            write_events(events, tmp_path / "x.csv")

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("pulse,stuff\n")
        with pytest.raises(DataFormatError, match="header"):
            read_events(path)


class TestTallyFile:
    def test_round_trip(self, tmp_path):
        manifest = preset_manifest("paper50km")
        from pdqkd.link_model import LinkParams, db_to_linear
        link = LinkParams(eta=db_to_linear(8.0), y0=1.6e-6, e_d=0.012)
        tally, _ = simulate_run(manifest.to_source_params(), link,
                                SimConfig(n_pulses=30_000, seed=6))
        path = tmp_path / "tally.txt"
        write_tally(tally, path)
        assert read_tally(path) == tally

    def test_unknown_field_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("n_pulses,bogus\n10,3\n")
        with pytest.raises(DataFormatError, match="bogus"):
            read_tally(path)

    def test_missing_fields_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("n_pulses\n10\n")
        with pytest.raises(DataFormatError, match="missing"):
            read_tally(path)

    def test_multiple_rows_rejected(self, tmp_path):
        from pdqkd.dataio import TALLY_HEADER
        path = tmp_path / "bad.csv"
        zeros = ",".join("0" for _ in TALLY_HEADER.split(","))
        path.write_text(f"{TALLY_HEADER}\n{zeros}\n{zeros}\n")
        with pytest.raises(DataFormatError, match="one tally row"):
            read_tally(path)


class TestResults:
    @staticmethod
    def _row(loss=10.0):
        return ResultsRow(loss_db=loss, q_n=2.43e-5, q_t=2.5e-6, e_n=0.0399,
                          e_t=0.0306, y1_low=5.627e-4, e1_up=0.0574,
                          r_n=1.94e-6, r_t=2.4e-7, r=2.19e-6, key_bits=1.3e5,
                          clamped_e1=True)

    def test_single_row_round_trip(self, tmp_path):
        path = tmp_path / "res.csv"
        write_results([self._row()], path)
        back = read_results(path)
        assert back == [self._row()]

    def test_full_precision_round_trip(self, tmp_path):
        # exact float fidelity (stronger than the 12-digit floor)
        row = ResultsRow(loss_db=31.7, q_n=1 / 3, q_t=2.5000000001e-6, e_n=0.1,
                         e_t=0.2, y1_low=np.nextafter(5e-4, 1), e1_up=0.3,
                         r_n=1e-300, r_t=0.0, r=1e-300, key_bits=0.1 + 0.2)
        path = tmp_path / "res.csv"
        write_results([row], path)
        assert read_results(path) == [row]

    def test_scan_emits_monotone_rate_column(self, tmp_path):
        from pdqkd.decoy_estimator import scan_loss
        manifest = preset_manifest("paper50km")
        scan = scan_loss(manifest.to_source_params(), manifest.to_link_params(),
                         manifest.to_protocol_params(),
                         [float(x) for x in np.arange(0.0, 35.5, 0.5)],
                         vacuum_credit=0.0, refine=False)
        rows = [ResultsRow.from_scan_point(p) for p in scan.points]
        path = tmp_path / "scan.csv"
        write_results(rows, path)
        rates = [r.r for r in read_results(path)]
        assert all(b <= a for a, b in zip(rates, rates[1:]))

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ParameterError):
            write_results([], tmp_path / "nowhere.csv")

    def test_version_checked(self, tmp_path):
        path = tmp_path / "res.csv"
        path.write_text("# pdqkd:results:v999\nwhatever\n")
        with pytest.raises(DataFormatError, match="version"):
            read_results(path)
