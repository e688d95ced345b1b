import hashlib
import json

import numpy as np
import pytest

from dcsmoe.evalgrid import (CSV_HEADER, EvalRow, baseline_runner, eval_grid,
                             grid_cells, median_solved, overhead_report,
                             profile_experts, read_rows, single_runner,
                             solved_counts, solved_tables, write_manifest,
                             write_rows)
from dcsmoe.heatmap import heatmap_svg
from dcsmoe.qnet import ExpertCheckpoint, QNetwork


def rows_fixture():
    return [
        EvalRow("a", 1, 1, 0, True, 4, -4, 1.25),
        EvalRow("a", 1, 1, 1, True, 6, -6, 1.5),
        EvalRow("a", 2, 1, 0, True, 30, -30, 9.0),
        EvalRow("a", 2, 1, 1, False, 500, -500, 80.0),
        EvalRow("b", 1, 1, 0, True, 5, -5, 0.5),
        EvalRow("b", 1, 1, 1, True, 4, -4, 0.4),
        EvalRow("b", 2, 1, 0, False, 500, -500, 44.0),
        EvalRow("b", 2, 1, 1, False, 500, -500, 41.0),
    ]


def test_csv_roundtrip(tmp_path):
    path = str(tmp_path / "grid.csv")
    rows = rows_fixture()
    write_rows(path, rows)
    lines = open(path).read().splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1] == "a,1,1,0,true,4,-4,1.250"
    back = read_rows(path)
    assert back == rows


def test_read_rows_header_guard(tmp_path):
    path = str(tmp_path / "bad.csv")
    open(path, "w").write("nope\n")
    with pytest.raises(ValueError, match="header"):
        read_rows(path)


def test_grid_cells_order():
    assert grid_cells(2, 3) == [(1, 1), (1, 2), (1, 3),
                                (2, 1), (2, 2), (2, 3)]


def test_eval_grid_sequential_order_and_content():
    rows = eval_grid([("bfs", baseline_runner("bfs"))],
                     grid_cells(1, 2), [0, 1], budget=200, workers=1)
    keys = [(r.policy, r.n, r.k, r.seed) for r in rows]
    assert keys == [("bfs", 1, 1, 0), ("bfs", 1, 1, 1),
                    ("bfs", 1, 2, 0), ("bfs", 1, 2, 1)]
    assert all(r.solved for r in rows)
    # bfs is deterministic: both seeds take identical step counts
    assert rows[0].steps == rows[1].steps


def test_eval_grid_pool_matches_sequential():
    runners = [("bfs", baseline_runner("bfs")),
               ("dfs", baseline_runner("dfs"))]
    cells = grid_cells(2, 1)
    seq = eval_grid(runners, cells, [0], budget=300, workers=1)
    par = eval_grid(runners, cells, [0], budget=300, workers=2)
    strip = lambda rs: [(r.policy, r.n, r.k, r.seed, r.solved, r.steps,
                         r.return_value) for r in rs]
    assert strip(seq) == strip(par)


def test_solved_tables_and_counts():
    rows = rows_fixture()
    tab = solved_tables(rows)
    assert tab["a"] == {(1, 1): 4, (2, 1): 30}
    assert tab["b"] == {(1, 1): 4}
    counts = solved_counts(rows)
    assert counts["a"] == {0: 2, 1: 1}
    assert counts["b"] == {0: 1, 1: 1}
    assert median_solved(rows, "a") == 1.5
    assert median_solved(rows, "b") == 1.0
    assert median_solved(rows, "missing") == 0.0


def test_overhead_report_common_cells():
    rows = rows_fixture()
    rep = overhead_report(rows, heavy="a", light="b")
    # only (1,1) is solved by both policies at every seed
    assert rep["common_cells"] == 1.0
    assert rep["ms_per_step_heavy"] == pytest.approx(
        float(np.median([1.25 / 4, 1.5 / 6])))
    assert rep["ms_per_step_light"] == pytest.approx(
        float(np.median([0.5 / 5, 0.4 / 4])))
    assert rep["wall_ratio"] == pytest.approx((1.25 + 1.5) / (0.5 + 0.4))


def test_overhead_report_no_common_cells():
    rows = [EvalRow("a", 1, 1, 0, True, 4, -4, 1.0),
            EvalRow("b", 1, 1, 0, False, 99, -99, 1.0)]
    rep = overhead_report(rows, "a", "b")
    assert rep["common_cells"] == 0.0
    assert np.isnan(rep["wall_ratio"])


def test_profile_experts_builds_histories():
    cks = [ExpertCheckpoint(network=QNetwork.init(np.random.default_rng(s)),
                            metadata={}) for s in (0, 1)]
    hists, rows = profile_experts(cks, ["e0", "e1"], n_max=2, k_max=1,
                                  budget=500, workers=1)
    assert [h.expert_id for h in hists] == ["e0", "e1"]
    tab = solved_tables(rows)
    for h in hists:
        assert h.records == tab.get(h.expert_id, {})
    # untrained experts still close tiny instances within budget
    assert (1, 1) in hists[0].records


def test_manifest_hashes(tmp_path):
    data = str(tmp_path / "grid.csv")
    write_rows(data, rows_fixture())
    man = str(tmp_path / "grid.manifest.json")
    write_manifest(man, "eval-grid", {"budget": 100}, [data])
    doc = json.loads(open(man).read())
    assert doc["command"] == "eval-grid"
    assert doc["params"] == {"budget": 100}
    want = hashlib.sha256(open(data, "rb").read()).hexdigest()
    assert doc["files"]["grid.csv"] == want
    assert doc["environment"]["backend"] in ("numba", "numpy")


def test_heatmap_svg_cells_and_hatching():
    svg = heatmap_svg(rows_fixture(), "a")
    assert svg.startswith("<svg")
    # two shaded cells with their median labels, no hatch for policy a...
    assert ">5<" in svg          # median of 4 and 6
    assert ">30<" in svg
    assert 'fill="url(#miss)"' not in svg
    svg_b = heatmap_svg(rows_fixture(), "b")
    # ...but policy b never solves (2,1), so that cell is hatched
    assert 'fill="url(#miss)"' in svg_b
    with pytest.raises(ValueError, match="no rows"):
        heatmap_svg(rows_fixture(), "zipline")


def test_heatmap_respects_extent_override():
    svg = heatmap_svg(rows_fixture(), "a", n_max=3, k_max=2)
    # 3x2 grid: six cells drawn, four of them unsolved and hatched
    assert svg.count("<rect") == 6 + 1  # plus the pattern's own rect
    assert svg.count('url(#miss)') == 4
