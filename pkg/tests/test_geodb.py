import numpy as np
import pytest

from tvwsim.errors import DegenerateContourError, ParseError
from tvwsim.geodb import (
    GeoDb,
    GeoRecord,
    Region,
    SeparationTable,
    classify_region,
    contour_radius_m,
    default_separation_table,
    load,
    protected_radius,
    query_vacant_channels,
    required_separation,
    save,
    separation_table_from_csv,
)
from tvwsim.radio_env import (
    PropagationConfig,
    TvStandard,
    TvTransmitter,
    free_space_ref_loss_db,
)


def service(channel=10, x=0.0, y=0.0, eirp=60.0, sid="svc"):
    return TvTransmitter(id=sid, standard=TvStandard.ANALOG_PAL_D,
                         channel_index=channel, location=(x, y), eirp_dbm=eirp)


def brute_force_radius(rec, prop, freq=700.0, hi=1e6):
    """Independent oracle: bisect the received-power crossing."""
    lo = prop.ref_distance_m
    eirp = rec.service.eirp_dbm
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        rx = eirp - prop.median_loss_db(mid, freq)
        if rx >= rec.required_rx_dbm:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestProtectedRadius:
    def test_boundary_at_reference_distance(self):
        prop = PropagationConfig(ref_loss_db=29.3)
        rec = GeoRecord(service=service(eirp=60.0), required_rx_dbm=60.0 - 29.3)
        assert protected_radius(rec, prop) == pytest.approx(1.0, rel=1e-12)

    def test_closed_form_matches_brute_force(self, prop):
        rec = GeoRecord(service=service(eirp=60.0), required_rx_dbm=-84.0)
        r = protected_radius(rec, prop)
        assert r == pytest.approx(brute_force_radius(rec, prop), rel=1e-6)
        # free-space-at-1m reference (~29.3 dB), n=3.5: about 1886 m
        assert r == pytest.approx(1886.0, abs=10.0)

    def test_margin_doubling_doubles_radius(self, prop):
        extra = 35.0 * np.log10(2.0)
        r1 = protected_radius(GeoRecord(service=service(eirp=60.0),
                                        required_rx_dbm=-84.0), prop)
        r2 = protected_radius(GeoRecord(service=service(eirp=60.0 + extra),
                                        required_rx_dbm=-84.0), prop)
        assert r2 == pytest.approx(2.0 * r1, rel=1e-9)

    def test_given_radius_wins(self, prop):
        rec = GeoRecord(service=service(), required_rx_dbm=-84.0,
                        protected_radius_m=1234.0)
        assert protected_radius(rec, prop) == 1234.0

    def test_unattainable_level_rejected(self, prop):
        with pytest.raises(DegenerateContourError):
            contour_radius_m(10.0, 20.0, prop)

    def test_contour_delivers_required_level(self, prop):
        rec = GeoRecord(service=service(eirp=72.0), required_rx_dbm=-84.0)
        r = protected_radius(rec, prop)
        rx = rec.service.eirp_dbm - prop.median_loss_db(r, 700.0)
        assert rx == pytest.approx(rec.required_rx_dbm, abs=0.01)


class TestRegions:
    def make_db(self, prop):
        db = GeoDb()
        db.add(GeoRecord(service=service(channel=10, eirp=60.0),
                         required_rx_dbm=-84.0))
        return db

    def test_point_at_transmitter_is_black(self, prop, grid):
        db = self.make_db(prop)
        assert classify_region(db, (0.0, 0.0), 10, 20.0, prop, grid) is Region.BLACK

    def test_empty_database_is_white(self, prop, grid):
        assert classify_region(GeoDb(), (0, 0), 10, 20.0, prop, grid) is Region.WHITE

    def test_radial_sweep_matches_closed_form_crossovers(self, prop, grid):
        db = self.make_db(prop)
        rec = next(iter(db.records.values()))
        r_protected = protected_radius(rec, prop)
        r_interf = contour_radius_m(20.0, db.protection_floor_dbm, prop)
        white_edge = r_protected + r_interf + db.grey_margin_m
        distances = np.linspace(1.0, 2.0 * white_edge, 1000)
        last_rank = -1
        for d in distances:
            region = classify_region(db, (d, 0.0), 10, 20.0, prop, grid)
            expected = (Region.BLACK if d <= r_protected
                        else Region.GREY if d <= white_edge else Region.WHITE)
            assert region is expected, f"at {d:.1f} m"
            assert int(region) >= last_rank  # permissiveness monotone
            last_rank = int(region)

    def test_adjacent_channel_service_does_not_constrain(self, prop, grid):
        db = self.make_db(prop)
        assert classify_region(db, (0.0, 0.0), 11, 20.0, prop, grid) is Region.WHITE
        assert classify_region(db, (0.0, 0.0), 9, 20.0, prop, grid) is Region.WHITE

    def test_unknown_channel_rejected(self, prop, grid):
        with pytest.raises(IndexError):
            classify_region(GeoDb(), (0, 0), 37, 20.0, prop, grid)

    def test_query_coherent_with_classify(self, prop, grid):
        db = self.make_db(prop)
        point = (1500.0, 0.0)
        rows = query_vacant_channels(db, point, 20.0, prop, grid)
        assert len(rows) == 37
        for ch, region in rows:
            assert region is classify_region(db, point, ch, 20.0, prop, grid)

    def test_empty_db_query_all_white(self, prop, grid):
        rows = query_vacant_channels(GeoDb(), (0, 0), 20.0, prop, grid)
        assert all(r is Region.WHITE for _, r in rows)

    def test_inside_contour_blacks_one_channel(self, prop, grid):
        db = self.make_db(prop)
        rows = dict(query_vacant_channels(db, (100.0, 0.0), 20.0, prop, grid))
        assert rows[10] is Region.BLACK
        assert all(r is Region.WHITE for ch, r in rows.items() if ch != 10)


class TestSeparationTable:
    def table(self):
        return SeparationTable(powers_dbm=(0.0, 10.0), heights_m=(10.0, 30.0),
                               separation_m=(100.0, 200.0, 300.0, 400.0))

    def test_corner_exact(self):
        sep, clamped = required_separation(self.table(), 10.0, 30.0)
        assert sep == 400.0 and not clamped

    def test_cell_midpoint_is_corner_mean(self):
        sep, clamped = required_separation(self.table(), 5.0, 20.0)
        assert sep == pytest.approx((100 + 200 + 300 + 400) / 4)
        assert not clamped

    def test_clamp_below_table(self):
        sep, clamped = required_separation(self.table(), -10.0, 20.0)
        assert clamped
        assert sep == pytest.approx(150.0)  # first power row, height midpoint

    def test_shipped_table_monotone(self):
        table = default_separation_table()
        grid = np.asarray(table.separation_m).reshape(
            len(table.powers_dbm), len(table.heights_m))
        assert np.all(np.diff(grid, axis=0) > 0)
        assert np.all(np.diff(grid, axis=1) > 0)

    def test_non_monotone_axis_rejected(self):
        with pytest.raises(ValueError):
            SeparationTable((10.0, 0.0), (10.0, 30.0), (1.0, 2.0, 3.0, 4.0))

    def test_csv_round_trip(self, tmp_path):
        from tvwsim.geodb import separation_table_to_csv

        path = tmp_path / "sep.csv"
        separation_table_to_csv(self.table(), path)
        assert separation_table_from_csv(path) == self.table()


class TestPersistence:
    def test_empty_round_trip(self, tmp_path):
        db = GeoDb()
        path = tmp_path / "db.csv"
        save(db, path)
        assert load(path) == db

    def test_three_record_round_trip(self, tmp_path, prop):
        db = GeoDb(grey_margin_m=500.0, protection_floor_dbm=-110.0)
        for i, ch in enumerate((3, 10, 20)):
            db.add(GeoRecord(service=service(channel=ch, x=100.0 * i, sid=f"s{i}"),
                             required_rx_dbm=-84.0,
                             protected_radius_m=1000.0 + i))
        path = tmp_path / "db.csv"
        save(db, path)
        loaded = load(path, prop)
        assert loaded == db
        assert loaded.version == db.version
        assert list(loaded.records) == sorted(db.records)

    def test_blank_radius_computed_on_load(self, tmp_path, prop):
        db = GeoDb()
        db.add(GeoRecord(service=service(eirp=60.0), required_rx_dbm=-84.0,
                         protected_radius_m=None))
        path = tmp_path / "db.csv"
        save(db, path)
        loaded = load(path, prop)
        rec = loaded.records["svc"]
        assert rec.protected_radius_m == pytest.approx(1886.0, abs=10.0)

    def test_duplicate_key_names_the_key(self, tmp_path):
        path = tmp_path / "dup.csv"
        row = "svc,AnalogPalD,10,0.0,0.0,60.0,10.0,-84.0,1000.0"
        path.write_text("id,standard,channel,x_m,y_m,eirp_dbm,height_m,"
                        f"required_rx_dbm,protected_radius_m\n{row}\n{row}\n")
        with pytest.raises(ParseError, match="svc"):
            load(path)

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,standard,channel,x_m,y_m,eirp_dbm,height_m,"
                        "required_rx_dbm,protected_radius_m\n"
                        "svc,AnalogPalD,ten,0,0,60,10,-84,\n")
        with pytest.raises(ParseError, match=":2"):
            load(path)

    def test_version_counts_mutations(self):
        db = GeoDb()
        db.add(GeoRecord(service=service(sid="a"), required_rx_dbm=-84.0,
                         protected_radius_m=1.0))
        db.add(GeoRecord(service=service(sid="b"), required_rx_dbm=-84.0,
                         protected_radius_m=1.0))
        db.remove("a")
        assert db.version == 3
