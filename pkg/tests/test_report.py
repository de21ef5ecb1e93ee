import json

import pytest

from slameval.errors import FormatError, InputNotFoundError, SchemaVersionError
from slameval.report import (SCHEMA_VERSION, ResultDocument, build_document, check_consistency,
                             comparison_table, frame_rate_table, read_document, read_series,
                             recompute_aggregate, write_document, write_plot_data, write_series)


def run(k, norm, kind="completed", crt=0.9, fps=10.0, seq="seq", failures=0):
    return {"run": k, "sequence": seq, "exit": {"kind": kind, "frame": None if kind == "completed" else 3},
            "restarts": 0, "failures": failures, "delivered_frames": 10,
            "ate": {"rmse": norm}, "rpe": None,
            "crt": {"correct_ratio": crt, "mode": "frame_count", "threshold": 1.0,
                    "counted_frames": 9, "total_frames": 10},
            "normalized_ate": norm, "frame_rate": fps, "error": None}


def doc(sut, seq, norms, platform="ws", crashed=()):
    runs = [run(k, v, "crashed" if k in crashed else "completed", seq=seq,
                failures=int(k in crashed)) for k, v in enumerate(norms)]
    return build_document("repeated", {"sut": sut, "sequence": seq, "seed": 1,
                                       "repetitions": len(norms), "platform": platform}, runs)


def test_round_trip(tmp_path):
    d = doc("a", "office_1", [0.1, 0.3, float("nan")])
    write_document(d, tmp_path / "d.json")
    back = read_document(tmp_path / "d.json")
    assert back.schema_version == SCHEMA_VERSION
    assert back.to_dict() == json.loads((tmp_path / "d.json").read_text())
    write_document(back, tmp_path / "e.json")
    assert (tmp_path / "d.json").read_text() == (tmp_path / "e.json").read_text()
    assert back.runs[2]["normalized_ate"] is None


def test_aggregate_recomputable():
    d = doc("a", "s", [0.5, 0.1, 0.3, 0.9], crashed={3})
    assert check_consistency(d)
    assert d.aggregate["median_normalized_ate"] == 0.3
    assert d.aggregate["crash_rate"] == 0.25
    d.aggregate["median_normalized_ate"] = 0.31
    assert not check_consistency(d)


def test_all_crashed_unavailable():
    agg = recompute_aggregate(doc("a", "s", [0.1, 0.2], crashed={0, 1}).runs)
    assert agg["median_normalized_ate"] is None and not agg["available"]
    assert agg["crash_rate"] == 1.0


def test_schema_mismatch(tmp_path):
    p = tmp_path / "d.json"
    d = doc("a", "s", [0.1]).to_dict()
    d["schema_version"] = "2.0"
    p.write_text(json.dumps(d))
    with pytest.raises(SchemaVersionError):
        read_document(p)
    del d["schema_version"]
    p.write_text(json.dumps(d))
    with pytest.raises(SchemaVersionError):
        read_document(p)
    d["schema_version"] = "1.7"
    p.write_text(json.dumps(d))
    assert read_document(p).schema_version == "1.7"


def test_read_errors(tmp_path):
    with pytest.raises(InputNotFoundError):
        read_document(tmp_path / "none.json")
    (tmp_path / "x.json").write_text("{oops")
    with pytest.raises(FormatError):
        read_document(tmp_path / "x.json")
    (tmp_path / "y.json").write_text(json.dumps({"schema_version": "1.0"}))
    with pytest.raises(FormatError):
        read_document(tmp_path / "y.json")


def test_single_document_table():
    d = doc("sim:a", "office_1", [0.001, 0.002, 0.003])
    lines = comparison_table([d]).splitlines()
    assert lines[0].split() == ["sequence", "sim:a"]
    assert lines[2].split() == ["office_1", "0.200%", "/", "90.000%"]


def test_columns_ordered_by_accuracy():
    worse = doc("zeta", "s1", [0.05])
    better = doc("alpha", "s1", [0.01])
    best = doc("omega", "s1", [0.001])
    header = comparison_table([worse, better, best]).splitlines()[0].split()
    assert header == ["sequence", "omega", "alpha", "zeta"]


def test_frame_rate_grid():
    ds = [doc("a", "s", [0.1], platform="laptop"), doc("b", "s", [0.1], platform="jetson")]
    ds[1].runs[0]["frame_rate"] = 0.2
    lines = frame_rate_table(ds).splitlines()
    assert lines[0].split() == ["platform", "a", "b"]
    assert lines[2].split() == ["jetson", "-", "0.2"]
    assert lines[3].split() == ["laptop", "10", "-"]


def test_series_and_plot_data(tmp_path):
    rows = [(0.0, None, None, 1), (0.1, 0.25, 0.125, 1), (0.2, None, None, 0)]
    write_series(tmp_path / "r.series.csv", rows)
    assert read_series(tmp_path / "r.series.csv") == rows
    assert (tmp_path / "r.series.csv").read_text().splitlines()[0] == "timestamp,ate_so_far,rpe,tracked"
    d = doc("a", "s", [0.1])
    d.runs[0]["series"] = "r.series.csv"
    write_document(d, tmp_path / "d.json")
    write_plot_data([d], [tmp_path / "d.json"], tmp_path / "plots")
    eot = (tmp_path / "plots" / "error_over_time.csv").read_text().splitlines()
    assert len(eot) == 4 and eot[2].startswith("a,s,0,0.1,0.25")
    bars = (tmp_path / "plots" / "crt_bars.csv").read_text().splitlines()
    assert bars[1] == "a,s,0,0.9,1.0"


def test_document_kind_required():
    with pytest.raises(FormatError):
        ResultDocument.from_dict({"schema_version": "1.0", "metadata": {}})
