import pytest

from gpsfeed.errors import IoError, RejectRatioError, SchemaError, ValidationError
from gpsfeed.ingest import RawTable, load_gps, load_route, read_table
from gpsfeed.model import FieldMapping

HEADER = "device_id,timestamp,latitude,longitude,speed,route_id\n"


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_clean_rows(tmp_path):
    path = write(
        tmp_path,
        "gps.csv",
        HEADER
        + "bus1,2024-01-15T08:00:00Z,7.29,80.63,0,R1\n"
        + "bus1,2024-01-15T08:00:05+00:00,7.2901,80.6301,12.5,R1\n"
        + "bus2,2024-01-15T08:00:05,7.3,80.7,3,\n",
    )
    records, rejects = load_gps(path)
    assert len(records) == 3 and rejects == []
    assert records[0].timestamp == 1705305600.0
    assert records[1].speed == 12.5
    assert records[2].route_id is None
    assert records[2].timestamp == 1705305605.0  # zone-less is UTC


def test_latitude_out_of_range_rejected(tmp_path):
    path = write(tmp_path, "gps.csv", HEADER + "bus1,2024-01-15T08:00:00Z,91.0,80.63,0,R1\n")
    records, rejects = load_gps(path)
    assert records == []
    assert [r.reason for r in rejects] == ["coordinate-range"]


def test_empty_device_rows_reconcile(tmp_path):
    lines = []
    for i in range(10):
        device = "" if i in (3, 7) else "bus1"
        lines.append(f"{device},{1705305600 + i},7.29,80.63,1.0,R1\n")
    path = write(tmp_path, "gps.csv", HEADER + "".join(lines))
    mapping = FieldMapping(timestamp_format="epoch_s")
    records, rejects = load_gps(path, mapping)
    assert len(records) == 8 and len(rejects) == 2
    # independent count of data lines in the file
    data_lines = len(path.read_text().splitlines()) - 1
    accepted_rows = [int(r.timestamp - 1705305600) for r in records]
    assert sorted(accepted_rows + [r.row_index for r in rejects]) == list(range(data_lines))
    assert {r.reason for r in rejects} == {"missing-field"}


def test_custom_mapping_and_units(tmp_path):
    path = write(
        tmp_path,
        "raw.csv",
        "imei,time_ms,lat,lng,spd_ms,extra\n" "x1,1705305600000,7.0,80.0,10,foo\n",
    )
    mapping = FieldMapping(
        columns={
            "device_id": "imei",
            "timestamp": "time_ms",
            "latitude": "lat",
            "longitude": "lng",
            "speed": "spd_ms",
        },
        timestamp_format="epoch_ms",
        speed_unit="ms",
    )
    (rec,), _ = load_gps(path, mapping)
    assert rec.timestamp == 1705305600.0
    assert rec.speed == pytest.approx(36.0)


def test_explicit_pattern_with_offset(tmp_path):
    path = write(tmp_path, "gps.csv", HEADER + "b,15/01/2024 13:30:00,7,80,0,\n")
    mapping = FieldMapping(timestamp_format="%d/%m/%Y %H:%M:%S", utc_offset_hours=5.5)
    (rec,), _ = load_gps(path, mapping)
    assert rec.timestamp == 1705305600.0


@pytest.mark.parametrize(
    "row, reason",
    [
        ("b,not-a-time,7,80,0,R\n", "timestamp"),
        ("b,2024-01-15T08:00:00Z,abc,80,0,R\n", "coordinate-parse"),
        ("b,2024-01-15T08:00:00Z,7,80,-3,R\n", "invalid"),
        ("b,2024-01-15T08:00:00Z,7,80\n", "column-count"),
        ("b,2024-01-15T08:00:00Z,7,80,fast,R\n", "speed-parse"),
    ],
)
def test_reject_reasons(tmp_path, row, reason):
    path = write(tmp_path, "gps.csv", HEADER + row)
    records, rejects = load_gps(path)
    assert records == [] and rejects[0].reason == reason


def test_missing_mapped_column_is_schema_error(tmp_path):
    path = write(tmp_path, "gps.csv", "device_id,timestamp,latitude,longitude\n")
    with pytest.raises(SchemaError, match="speed"):
        load_gps(path)


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(IoError) as info:
        load_gps(tmp_path / "nope.csv")
    assert info.value.path == tmp_path / "nope.csv"


def test_reject_ratio_ceiling(tmp_path):
    good = "b,2024-01-15T08:00:00Z,7,80,0,R\n"
    bad = "b,2024-01-15T08:00:00Z,99,80,0,R\n"
    at_ceiling = write(tmp_path, "ok.csv", HEADER + good * 9 + bad)
    records, rejects = load_gps(at_ceiling, max_reject_ratio=0.1)
    assert (len(records), len(rejects)) == (9, 1)
    above = write(tmp_path, "bad.csv", HEADER + good * 8 + bad * 2)
    with pytest.raises(RejectRatioError):
        load_gps(above, max_reject_ratio=0.1)


def test_empty_file_loads_nothing(tmp_path):
    assert load_gps(write(tmp_path, "empty.csv", "")) == ([], [])
    assert load_gps(write(tmp_path, "hdr.csv", HEADER)) == ([], [])


def test_loading_is_deterministic(small_fixture):
    paths, _, _ = small_fixture
    assert load_gps(paths["gps"]) == load_gps(paths["gps"])


def test_raw_table_rejects_ragged_rows():
    with pytest.raises(SchemaError):
        RawTable(("a", "b"), (("1",),))


TERMINALS = "terminal_id,name,latitude,longitude\nTA,A,7.0,80.0\nTB,B,7.1,80.1\n"
STOP_HEADER = "stop_id,name,latitude,longitude,direction_id,sequence_index\n"


def _stops_text(out_seqs, in_seqs):
    rows = [f"o{q},O{q},7.0{q},80.0{q},0,{q}\n" for q in out_seqs]
    rows += [f"i{q},I{q},7.0{q},80.0{q},inbound,{q}\n" for q in in_seqs]
    return STOP_HEADER + "".join(rows)


def test_load_route(tmp_path):
    terminals = write(tmp_path, "t.csv", TERMINALS)
    stops = write(tmp_path, "s.csv", _stops_text([3, 1, 2, 5, 4], [1, 2, 3, 4, 5]))
    route = load_route(terminals, stops)
    assert len(route.stops_outbound) == 5 and len(route.stops_inbound) == 5
    assert [s.sequence_index for s in route.stops_outbound] == [1, 2, 3, 4, 5]
    assert route.terminal_a.terminal_id == "TA"


def test_three_terminals_rejected(tmp_path):
    terminals = write(tmp_path, "t.csv", TERMINALS + "TC,C,7.2,80.2\n")
    stops = write(tmp_path, "s.csv", _stops_text([1], [1]))
    with pytest.raises(ValidationError, match="exactly 2"):
        load_route(terminals, stops)


def test_duplicate_sequence_rejected(tmp_path):
    terminals = write(tmp_path, "t.csv", TERMINALS)
    stops = write(tmp_path, "s.csv", _stops_text([1, 2, 2, 4], [1]))
    with pytest.raises(ValidationError, match="duplicate-sequence"):
        load_route(terminals, stops)


def test_route_file_missing_columns(tmp_path):
    terminals = write(tmp_path, "t.csv", "terminal_id,name\nTA,A\nTB,B\n")
    stops = write(tmp_path, "s.csv", _stops_text([1], [1]))
    with pytest.raises(SchemaError):
        load_route(terminals, stops)


def test_read_table(tmp_path):
    table = read_table(write(tmp_path, "t.csv", TERMINALS))
    assert table.header == ("terminal_id", "name", "latitude", "longitude")
    assert len(table.rows) == 2


def test_parallel_blocks_match_serial(tmp_path, small_fixture, monkeypatch):
    from concurrent.futures import ProcessPoolExecutor

    from corpus import corrupt
    from gpsfeed import ingest
    from gpsfeed.ingest import load_gps_columns

    paths, _, _ = small_fixture
    dirty = tmp_path / "dirty.csv"
    corrupt(paths["gps"], dirty, 0.05, seed=3)
    serial, serial_rejects = load_gps_columns(dirty)
    monkeypatch.setattr(ingest, "PARALLEL_INGEST_MIN_BYTES", 0)
    with ProcessPoolExecutor(2) as pool:
        for blocks in (1, 3, 17):
            cols, rejects = load_gps_columns(dirty, pool=pool, blocks=blocks)
            assert rejects == serial_rejects
            assert list(cols) == list(serial)


def test_quoted_file_is_not_split(tmp_path, monkeypatch):
    from concurrent.futures import ProcessPoolExecutor

    from gpsfeed import ingest
    from gpsfeed.ingest import load_gps_columns

    rows = "".join(f'"bus\n{i % 3}",{1705305600 + i},7.29,80.63,0,R1\n' for i in range(200))
    path = write(tmp_path, "gps.csv", HEADER + rows)
    monkeypatch.setattr(ingest, "PARALLEL_INGEST_MIN_BYTES", 0)
    mapping = FieldMapping(timestamp_format="epoch_s")
    with ProcessPoolExecutor(2) as pool:
        cols, rejects = load_gps_columns(path, mapping, pool=pool, blocks=8)
    assert rejects == [] and len(cols) == 200
    assert sorted(cols.device_names) == ["bus\n0", "bus\n1", "bus\n2"]


def test_corrupted_corpus_reasons(tmp_path, small_fixture):
    from corpus import corrupt

    paths, _, _ = small_fixture
    dirty = tmp_path / "dirty.csv"
    total, expected = corrupt(paths["gps"], dirty, 0.1, seed=1)
    records, rejects = load_gps(dirty)
    assert len(records) + len(rejects) == total
    assert {r.row_index: r.reason for r in rejects} == expected
