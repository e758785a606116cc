import csv
import json
import textwrap
from pathlib import Path

import pytest
import yaml

from pmnl.cli import main, run_sweep
from pmnl.config import content_hash, dump_yaml, emit_config, load_config, load_text
from pmnl.errors import ConfigParseError
from pmnl.model import validate

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = textwrap.dedent("""\
    mu: 2
    nu: 4
    a: 1
    l: 2
    horizon: 0.2
    domain: {type: interval, left: 0, right: 1}
    kernel: {type: constant, k0: 1}
    initial: {type: constant, value: 1}
    solver: {n_cells: 30, m_schedule: [8, 16], j_tol: 1.0e-4, n_output: 20}
""")


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def edit(text, **kw):
    data = yaml.safe_load(text)
    data.update(kw)
    return yaml.safe_dump(data)


# ---------------------------------------------------------------- config


def test_round_trip():
    run = load_text(BASE)
    again = load_text(dump_yaml(run))
    assert validate(again.spec) == validate(run.spec)
    assert again.solver == run.solver
    assert emit_config(again) == emit_config(run)


def test_fraction_exponents_stay_exact():
    run = load_text(BASE.replace("mu: 2", "mu: 3/2"))
    assert str(run.spec.mu) == "3/2"
    assert load_text(dump_yaml(run)).spec.mu == run.spec.mu


def test_missing_mu_names_field_and_line():
    text = BASE.replace("mu: 2\n", "")
    with pytest.raises(ConfigParseError) as err:
        load_text(text, "x.yaml")
    assert err.value.details["field"] == "mu"
    assert "mu" in str(err.value)


def test_bad_value_line():
    text = BASE.replace("k0: 1", "k0: lots")
    with pytest.raises(ConfigParseError) as err:
        load_text(text, "x.yaml")
    assert err.value.details["field"] == "kernel.k0"
    assert err.value.details["line"] == 7


def test_unknown_solver_field():
    with pytest.raises(ConfigParseError):
        load_text(BASE.replace("n_output: 20", "n_outputs: 20"))


def test_hash_ignores_order_and_tracks_edits():
    data = yaml.safe_load(BASE)
    shuffled = dict(reversed(list(data.items())))
    h = content_hash(emit_config(load_text(BASE)))
    assert content_hash(emit_config(load_text(yaml.safe_dump(shuffled, sort_keys=False)))) == h
    assert content_hash(emit_config(load_text(edit(BASE, a=1.5)))) != h
    assert content_hash(emit_config(load_text(BASE.replace("n_cells: 30", "n_cells: 31")))) != h


def test_shipped_configs_parse():
    for name in ("global.yaml", "blowup.yaml", "subcritical.yaml"):
        validate(load_config(CONFIGS / name).spec)


# ---------------------------------------------------------------- commands


def test_classify_stdout(tmp_path, capsys):
    p = write(tmp_path, edit(BASE, nu=1))
    assert main(["classify", "--config", str(p)]) == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "BlowUpForLargeData"
    p = write(tmp_path, edit(BASE, mu=1.5, l=0.5))
    assert main(["classify", "--config", str(p), "--out", str(tmp_path / "c")]) == 0
    rec = json.loads((tmp_path / "c" / "verdict.json").read_text())
    assert rec["verdict"] == "GlobalForAllData" and rec["clause"] == "global: l+mu<=2"
    assert (tmp_path / "c" / "manifest.json").exists()


def test_classify_missing_mu_exit(tmp_path, capsys):
    p = write(tmp_path, BASE.replace("mu: 2\n", ""))
    assert main(["classify", "--config", str(p)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["field"] == "mu"


def test_simulate_global(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(write(tmp_path, BASE)), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "CompletedBounded"
    with (out / "series.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "sup_norm", "l1_norm", "boundary_influx"]
    times = [float(r[0]) for r in rows[1:]]
    assert all(b > a for a, b in zip(times, times[1:]))
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["outcome"]["status"] == "CompletedBounded"
    assert sorted(p.name for p in out.iterdir()) == ["final_field.csv", "manifest.json", "series.csv",
                                                     "summary.json"]


def test_simulate_blowup(tmp_path):
    text = edit(BASE, nu=1, a=0.1, horizon=1.0, initial={"type": "constant", "value": 5})
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "BlowUpDetected"
    assert 0 < summary["t_star"] < 1


def test_simulate_absurd_dt_min(tmp_path):
    text = BASE.replace("n_output: 20", "n_output: 20, dt_min: 1.0")
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 3
    assert json.loads((out / "summary.json").read_text())["status"] == "InconclusiveResolutionLimit"


def test_simulate_is_deterministic(tmp_path):
    p = write(tmp_path, BASE)
    main(["simulate", "--config", str(p), "--out", str(tmp_path / "a")])
    main(["simulate", "--config", str(p), "--out", str(tmp_path / "b")])
    for name in ("series.csv", "final_field.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_certify_subcritical(tmp_path, capsys):
    out = tmp_path / "cert"
    code = main(["certify", "--config", str(CONFIGS / "subcritical.yaml"), "--family", "SubcriticalSuper",
                 "--out", str(out)])
    assert code == 0
    rec = json.loads((out / "certificate.json").read_text())
    assert rec["verdict"] == "Certified"
    with (out / "residuals.csv").open() as fh:
        assert next(csv.reader(fh)) == ["kind", "x", "t", "residual", "tolerance"]


def test_certify_incompatible(tmp_path):
    out = tmp_path / "cert"
    assert main(["certify", "--config", str(write(tmp_path, BASE)), "--family", "SubcriticalSuper",
                 "--out", str(out)]) == 4
    assert main(["certify", "--config", str(write(tmp_path, BASE)), "--family", "StationarySuper",
                 "--out", str(out)]) == 4
    assert json.loads((out / "certificate.json").read_text())["verdict"] == "FamilyIncompatible"


def test_certify_layer_sub(tmp_path):
    text = edit(BASE, nu=1, initial={"type": "constant", "value": 5})
    out = tmp_path / "cert"
    assert main(["certify", "--config", str(write(tmp_path, text)), "--family", "BoundaryLayerSub",
                 "--out", str(out)]) == 0
    assert json.loads((out / "certificate.json").read_text())["param_sigma"] == pytest.approx(2.5)


def test_certify_explicit_params_violated(tmp_path):
    text = edit(BASE, mu=1.4, nu=0.5, l=0.5,
                barrier={"family": "SubcriticalSuper", "params": {"alpha": 1, "beta": 1e-6, "b": 0.5}})
    out = tmp_path / "cert"
    assert main(["certify", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 1
    assert json.loads((out / "certificate.json").read_text())["verdict"] == "Violated"


def test_compare(tmp_path):
    text = edit(BASE, compare={"low": {"type": "constant", "value": 1},
                               "high": {"type": "constant", "value": 2}, "tolerance": 1e-6})
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 0
    rec = json.loads((out / "ordering.json").read_text())
    assert rec["passed"] and rec["min_gap"] >= -1e-6 * rec["sup_scale"]


def test_compare_unordered_inputs(tmp_path):
    text = edit(BASE, compare={"low": {"type": "constant", "value": 2},
                               "high": {"type": "constant", "value": 1}})
    assert main(["compare", "--config", str(write(tmp_path, text)), "--out", str(tmp_path / "c")]) == 2


# ---------------------------------------------------------------- sweep


def _plan(tmp_path, axes, simulate=False, name="plan.yaml"):
    plan = {"base": yaml.safe_load(BASE), "axes": axes, "simulate": simulate}
    return write(tmp_path, yaml.safe_dump(plan), name)


def test_empty_plan(tmp_path):
    path, n = run_sweep(_plan(tmp_path, {}), tmp_path / "s")
    assert n == 0
    assert path.read_text().strip() == "index,hash,verdict,clause,sim_status,t_star,error"


def test_sweep_rerun_is_noop(tmp_path):
    plan = _plan(tmp_path, {"nu": [1, 2, 3, 4], "l": {"start": 0.5, "stop": 2, "num": 3}})
    path, n = run_sweep(plan, tmp_path / "s")
    assert n == 12
    before, mtime = path.read_bytes(), path.stat().st_mtime_ns
    _, n2 = run_sweep(plan, tmp_path / "s")
    assert n2 == 0
    assert path.read_bytes() == before and path.stat().st_mtime_ns == mtime


def test_sweep_resumes_partial(tmp_path):
    run_sweep(_plan(tmp_path, {"nu": [1, 2]}), tmp_path / "s")
    _, n = run_sweep(_plan(tmp_path, {"nu": [1, 2, 3]}), tmp_path / "s")
    assert n == 1


def test_sweep_parallel_matches_serial(tmp_path):
    plan = _plan(tmp_path, {"nu": [1, 3, 5], "l": [0.5, 2]})
    a, _ = run_sweep(plan, tmp_path / "serial", jobs=1)
    b, _ = run_sweep(plan, tmp_path / "parallel", jobs=2)
    assert a.read_text() == b.read_text()


def test_sweep_bad_point_recorded(tmp_path):
    path, _ = run_sweep(_plan(tmp_path, {"mu": [2, -1]}), tmp_path / "s")
    rows = list(csv.DictReader(path.open()))
    assert rows[0]["error"] == "" and rows[1]["error"] != ""


def test_sweep_unknown_axis(tmp_path):
    with pytest.raises(ConfigParseError):
        run_sweep(_plan(tmp_path, {"rho": [1]}), tmp_path / "s")


def test_sweep_with_simulation(tmp_path):
    path, _ = run_sweep(_plan(tmp_path, {"u0": [1, 2]}, simulate=True), tmp_path / "s")
    rows = list(csv.DictReader(path.open()))
    assert [r["sim_status"] for r in rows] == ["CompletedBounded"] * 2
    assert len(list((tmp_path / "s" / "points").iterdir())) == 2
