import csv
import json
import logging

import numpy as np
import pytest

from socbayes import io
from socbayes import pipelines as P
from socbayes import synthetic
from socbayes.cli import main
from socbayes.errors import DataError, DomainError


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def consultas_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("consultas")
    assert main(["consultas", "--out", str(out), "--chains", "1"]) == 0
    return out


def test_consultas_reproduces_shares_table(consultas_out):
    table = {(r["group"], r["candidate"]): r for r in rows(consultas_out / "shares.csv")}
    assert len(table) == 15
    petro = table[("Pacto Histórico", "G. Petro")]
    assert abs(float(petro["mean_pct"]) - 78.18) <= 0.2
    fajardo = table[("Coalición Centro Esperanza", "S. Fajardo")]
    assert abs(float(fajardo["lower95_pct"]) - 29.11) <= 0.5 and abs(float(fajardo["upper95_pct"]) - 46.08) <= 0.5
    # two decimals in the presentation table, full precision in the summary
    assert all(len(r["mean_pct"].split(".")[1]) == 2 for r in table.values())


def test_consultas_bundle_layout(consultas_out):
    summary = json.loads((consultas_out / "summary.json").read_text())
    assert list(summary["models"]) == ["pacto_historico", "coalicion_equipo_por_colombia", "coalicion_centro_esperanza"]
    stats = summary["models"]["pacto_historico"]["parameters"]["G. Petro"]
    assert list(stats) == ["mean", "sd", "q025", "q50", "q975", "ess", "mcse", "rhat"]
    meta = json.loads((consultas_out / "meta.json").read_text())
    assert meta["seed"] == 2022 and meta["config"]["iterations"] == 50000 and "wall_seconds" in meta
    header = (consultas_out / "chains_pacto_historico.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("chain,iteration,G. Petro,")
    assert main(["audit", str(consultas_out)]) == 0


def test_zero_count_category_stays_on_simplex(tmp_path):
    src = tmp_path / "c.csv"
    src.write_text("group,candidate,count\nA,x,10\nA,y,0\nA,z,4\n", encoding="utf-8")
    bundle = P.run(P.RunConfig("consultas", input=str(src), iterations=2000, chains=1))
    draws = bundle.chains["a"][0].draws
    assert np.all(draws > 0) and np.allclose(draws.sum(axis=1), 1)


def test_consultas_input_errors(tmp_path):
    cases = {
        "group,candidate,count\nA,x,3\nA,y,-1\n": "negative",
        "group,candidate,count\nA,x,3\nB,y,1\nB,z,2\n": "fewer than 2",
        "group,candidate,votes\nA,x,3\n": "missing column",
        "group,candidate,count\nA,x,2.5\nA,y,1\n": "integer",
    }
    for k, (text, msg) in enumerate(cases.items()):
        path = tmp_path / f"bad{k}.csv"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(DataError, match=msg):
            io.read_consultas(path)


def test_rows_with_missing_fields_are_dropped_with_warning(tmp_path, caplog):
    path = tmp_path / "s.csv"
    path.write_text("offspring,age\n3,1\n,2\n4,NA\n2,3\n", encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        y, age = io.read_sparrows(path)
    assert y.tolist() == [3, 2] and age.tolist() == [1, 3]
    assert "dropped 2 row(s)" in caplog.text


def test_reader_validation(tmp_path):
    bad = tmp_path / "a.csv"
    bad.write_text("offspring,age\n-1,2\n", encoding="utf-8")
    with pytest.raises(DataError):
        io.read_sparrows(bad)
    bad.write_text("offspring,age\n", encoding="utf-8")
    with pytest.raises(DataError, match="no data"):
        io.read_sparrows(bad)
    bad.write_text("score,sex,work,department\n50,2,0,A\n", encoding="utf-8")
    with pytest.raises(DataError, match="0/1"):
        io.read_saber11(bad)


def test_synthetic_sparrows_file(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["synth", "sparrows", "--out", str(a), "--seed", "4"]) == 0
    assert main(["synth", "sparrows", "--out", str(b), "--seed", "4"]) == 0
    assert a.read_bytes() == b.read_bytes()
    y, age = io.read_sparrows(a)
    assert y.size == 52 and np.all(y >= 0) and set(age.tolist()) <= set(range(1, 7))


def test_synthetic_without_group_effects_recovered_by_ols():
    params = synthetic.SaberParams(tau2=0.0, coef_sd=(0.0, 0.0, 0.0), sigma_spread=0.0, n=4000)
    score, sex, work, dept = synthetic.saber11(params, seed=7)
    X = np.column_stack([np.ones(score.size), sex, work])
    beta, rss, _, _ = np.linalg.lstsq(X, score, rcond=None)
    s2 = rss[0] / (score.size - 3)
    se = np.sqrt(s2 * np.diag(np.linalg.inv(X.T @ X)))
    assert np.all(np.abs(beta - params.beta) < 3 * se)


def test_synthetic_errors(tmp_path):
    with pytest.raises(DomainError):
        P.generate_synthetic("sparrows", tmp_path / "x.csv", n=0)
    with pytest.raises(DomainError):
        P.generate_synthetic("saber11", tmp_path / "x.csv", n=10, groups=5)
    with pytest.raises(DomainError):
        P.generate_synthetic("nope", tmp_path / "x.csv")


@pytest.fixture(scope="module")
def sparrow_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "sparrows.csv"
    P.generate_synthetic("sparrows", path, seed=3)
    return path


def _sparrows(path, out, *extra):
    return main(["sparrows", "--input", str(path), "--out", str(out), "--iters", "600", "--burnin", "100",
                 "--chains", "2", "--L", "20", "--eps", "0.02", *extra])


def test_sparrows_bundle_audits_and_repeats(sparrow_file, tmp_path):
    assert _sparrows(sparrow_file, tmp_path / "a") == 0
    assert _sparrows(sparrow_file, tmp_path / "b", "--jobs", "2") == 0
    for name in ("chains_metropolis.csv", "chains_hmc.csv", "ppp_replicates.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert set(summary["ppp"]["hmc"]) == {"mean", "variance"}
    assert len(rows(tmp_path / "a" / "fitted_rates.csv")) == 12
    assert len(rows(tmp_path / "a" / "diagnostics.csv")) == 6
    assert main(["audit", str(tmp_path / "a")]) == 0


def test_audit_detects_tampering(sparrow_file, tmp_path, capsys):
    out = tmp_path / "a"
    assert _sparrows(sparrow_file, out, "--sampler", "metropolis") == 0
    summary = json.loads((out / "summary.json").read_text())
    summary["models"]["metropolis"]["parameters"]["beta[2]"]["mean"] += 1e-6
    summary["ppp"]["metropolis"]["variance"] = 0.5 if summary["ppp"]["metropolis"]["variance"] != 0.5 else 0.25
    (out / "summary.json").write_text(json.dumps(summary))
    assert main(["audit", str(out)]) == 1
    printed = capsys.readouterr().out
    assert "metropolis/beta[2]/mean" in printed and "ppp/metropolis/variance" in printed


def test_exit_codes(tmp_path, sparrow_file):
    bad = tmp_path / "bad.csv"
    bad.write_text("offspring,age\nx,1\n", encoding="utf-8")
    assert main(["sparrows", "--input", str(bad), "--out", str(tmp_path / "o")]) == 3
    assert main(["sparrows", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 3
    with pytest.raises(SystemExit) as exc:
        main(["sparrows", "--input", str(sparrow_file), "--out", str(tmp_path / "o"), "--chains", "0"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["saber11", "--model", "4", "--out", str(tmp_path / "o")])
    assert exc.value.code == 2
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["consultas", "--out", str(blocker / "sub"), "--iters", "100", "--chains", "1"]) == 5


def test_run_config_validation():
    assert P.RunConfig("saber11").schedule.retained == 50000
    for kw in [dict(chains=0), dict(thin=0), dict(iterations=10, burn_in=10), dict(focus="x"), dict(sigma2_rate=0.0)]:
        with pytest.raises(DomainError):
            P.RunConfig("saber11", **kw)


@pytest.fixture(scope="module")
def saber_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "saber.csv"
    P.generate_synthetic("saber11", path, seed=1, n=800, groups=6)
    return path


@pytest.mark.parametrize("focus", ["conditional", "marginal"])
def test_saber11_bundle(saber_file, tmp_path, focus):
    out = tmp_path / focus
    args = ["saber11", "--input", str(saber_file), "--out", str(out), "--iters", "500", "--burnin", "100",
            "--chains", "2", "--focus", focus]
    assert main(args) == 0
    dic = {r["model"]: float(r["dic"]) for r in rows(out / "dic.csv")}
    assert set(dic) == {"model1", "model2", "model3"}
    groups = rows(out / "group_intervals.csv")
    assert len(groups) == 6 * 3
    assert {r["excludes_ref_99"] for r in groups} <= {"0", "1"}
    coef = rows(out / "coefficients.csv")
    assert [r["parameter"] for r in coef if r["model"] == "model3"] == ["beta[1]", "beta[2]", "beta[3]", "sigma"]
    assert main(["audit", str(out)]) == 0


def test_saber11_single_model_repeats(saber_file, tmp_path):
    for name in ("a", "b"):
        P.run(P.RunConfig("saber11", input=str(saber_file), model="3", iterations=200, burn_in=50, chains=2)).write(
            tmp_path / name
        )
    assert (tmp_path / "a" / "chains_model3.csv").read_bytes() == (tmp_path / "b" / "chains_model3.csv").read_bytes()
    assert not (tmp_path / "a" / "chains_model1.csv").exists()


def test_zero_group_effects_paired_with_heterogeneous_control(tmp_path):
    def fit(name, **params):
        path = tmp_path / f"{name}.csv"
        P.generate_synthetic("saber11", path, seed=11, n=2500, **params)
        return P.run(P.RunConfig("saber11", input=str(path), iterations=2500, burn_in=500, chains=2))

    null = fit("null", beta=(50.0, 0.0, 0.0), tau2=0.0, coef_sd=(0.0, 0.0, 0.0), sigma_spread=0.0)
    control = fit("control", tau2=16.0)
    tau2 = {k: b.summary["models"]["model2"]["parameters"]["tau2"]["mean"] for k, b in (("null", null), ("control", control))}
    assert tau2["null"] < tau2["control"]
    header, table = null.tables["group_intervals.csv"]
    flag = header.index("excludes_ref_99")
    assert all(row[flag] == 0 for row in table)
