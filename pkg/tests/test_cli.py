import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from construal.analysis import PREDICTORS, PredictorTable
from construal.cli import main
from construal.maze import TINY_OB


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_json(capsys):
    code, out, _ = run(capsys, "solve", "TINY3")
    assert code == 0
    data = json.loads(out)
    assert data["start_value"] == pytest.approx(-3.940437424215036, abs=1e-9)
    assert len(data["policy"]) == 9


def test_solve_csv(capsys):
    code, out, _ = run(capsys, "solve", "TINY-OB", "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "state,x,y,value,up,down,left,right" and len(lines) == 10


def test_vgc(capsys):
    code, out, _ = run(capsys, "vgc", "TINY-OB", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert data["marginals"][0] == pytest.approx(1.0, abs=1e-9)
    assert [e["construal_bits"] for e in data["vor"]] == [0, 1]
    assert sum(e["prob"] for e in data["vor"]) == pytest.approx(1.0)


def test_vgc_mod(capsys):
    code, out, _ = run(capsys, "vgc-mod", "TINY-OB")
    data = json.loads(out)
    assert code == 0 and data["mode"] == "exact"
    assert data["scores"][0] == pytest.approx(0.6979315124955827, abs=1e-9)
    assert data["params"]["inv_temp_action"] is None
    code, out, _ = run(capsys, "vgc-mod", "TINY-OB", "--params", "7,0,9,0")
    assert code == 0 and json.loads(out)["params"]["inv_temp_construal"] == 9.0


def test_vgc_mod_bad_params(capsys):
    code, _, err = run(capsys, "vgc-mod", "TINY-OB", "--params", "1,2")
    assert code == 1 and "four values" in err


def test_predictors_csv_default(capsys):
    code, out, _ = run(capsys, "predictors", "TINY-OB", "--n-sims", "3", "--opt-samples", "5")
    assert code == 0
    table = PredictorTable.from_csv(out)
    assert table.keys() == [("TINY-OB", 0)]
    assert out.splitlines()[1].split(",")[2:] == list(PREDICTORS)


def test_analyze(capsys, tmp_path):
    rows = []
    for i in range(5):
        r = {"maze_id": "m", "obstacle_id": i, "nav_dist": None, "nav_dist_step": None}
        r.update({p: float(i * (j + 1) % 5 + i) for j, p in enumerate(PREDICTORS)})
        r["nav_dist"] = r["nav_dist_step"] = None
        rows.append(r)
    table = tmp_path / "t.csv"
    table.write_text(PredictorTable(rows).to_csv())
    resp = tmp_path / "r.csv"
    resp.write_text("maze_id,obstacle_id,measure,mean_response\n"
                    + "".join(f"m,{i},awareness,{i * 0.1}\nm,{i},recall,{(i % 2) * 1.0}\n"
                              for i in range(5)))
    code, out, _ = run(capsys, "analyze", "--table", str(table), "--responses", str(resp))
    assert code == 0
    records = json.loads(out)
    pairs = {(r["predictor"], r["measure"]) for r in records}
    assert len(pairs) == len(records) == 2 * (len(PREDICTORS) - 2)


def test_fit_small_grid(capsys, tmp_path):
    resp = tmp_path / "r.csv"
    resp.write_text("maze_id,obstacle_id,measure,mean_response\nTINY-OB,0,awareness,0.7\n"
                    "TWO,0,awareness,0.9\nTWO,1,awareness,0.1\n")
    two = tmp_path / "TWO.maze"
    two.write_text("S.0.G\n.###.\n.....\n.###.\n..1..")
    grid = json.dumps({"inv_temp_action": [3.0], "eps_action": [0.0],
                       "inv_temp_construal": [1.0, 9.0], "eps_construal": [0.0]})
    code, out, err = run(capsys, "fit", "TINY-OB", str(two), "--responses", str(resp),
                         "--grid", grid, "--rollouts", "50")
    assert code == 0, err
    data = json.loads(out)
    assert data["measure"] == "awareness" and 0 <= data["r_squared"] <= 1


def test_render(capsys):
    code, out, _ = run(capsys, "render", "TINY3")
    assert code == 0
    root = ET.fromstring(out.encode())
    assert not [e for e in root.iter() if e.get("class") == "obstacle"]


def test_render_scores_and_out(capsys, tmp_path):
    dest = tmp_path / "ob.svg"
    code, out, _ = run(capsys, "render", "TINY-OB", "--scores", "1.0", "--out", str(dest))
    assert code == 0 and out == ""
    assert 'fill="#08306b"' in dest.read_text()


def test_config_and_override(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"format": "csv", "alpha": 0.5}))
    code, out, _ = run(capsys, "vgc", "TINY-OB", "--config", str(cfg))
    assert code == 0 and out.startswith("obstacle_id,marginal")
    code, out, _ = run(capsys, "vgc", "TINY-OB", "--config", str(cfg), "--format", "json")
    assert json.loads(out)["alpha"] == 0.5


def test_config_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, err = run(capsys, "vgc", "TINY-OB", "--config", str(cfg))
    assert code == 1 and "bogus" in err


@pytest.mark.parametrize("argv", [["bogus"], [], ["vgc"], ["solve", "TINY3", "--gamma", "x"]])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 1


def test_input_errors(capsys, tmp_path):
    assert run(capsys, "solve", "no_such_maze")[0] == 2
    bad = tmp_path / "bad.maze"
    bad.write_text("S.S\n..G")
    code, _, err = run(capsys, "vgc", str(bad))
    assert code == 2 and "line 1" in err


def test_maze_file_and_json(capsys, tmp_path):
    path = tmp_path / "ob.maze"
    path.write_text(TINY_OB)
    code, out, _ = run(capsys, "vgc", str(path))
    assert code == 0 and json.loads(out)["maze_id"] == "ob"


def test_seeded_runs_identical(capsys):
    argv = ["vgc-mod", "TINY-OB", "--mode", "rollouts", "--rollouts", "200", "--seed", "3"]
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "construal.cli", "vgc", "TINY-OB"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["marginals"][0] == pytest.approx(1.0)
