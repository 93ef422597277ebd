import hashlib
import json
from pathlib import Path
from types import SimpleNamespace

import pandas as pd
import pytest
import yaml

from smcbench import cli
from smcbench.dataio import write_synthetic_cohort
from smcbench.evalharness import matrix_from_metrics, write_accuracy_matrix

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli_data")
    write_synthetic_cohort(d, n_per_class=25, seed=1)
    return d


def _digest(d):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(Path(d).glob("*.csv"))}


def _run(cohort, out, *extra):
    return cli.main(["run", "--data-dir", str(cohort), "--models", "RVFL", "--modalities", "GM",
                     "--seeds", "1", "--out", str(out), *extra])


def test_minimal_run_single_cell(cohort, tmp_path, capsys):
    before = _digest(cohort)
    assert _run(cohort, tmp_path / "o") == cli.EXIT_OK
    M = pd.read_csv(tmp_path / "o" / "results" / "accuracy_matrix.csv", index_col=0)
    assert M.shape == (1, 1) and list(M.columns) == ["GM"]
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["seeds"] == [1] and len(man["config_hash"]) == 64
    assert man["cells"] == [{"model": "RVFL", "modality": "GM", "status": "ok", "error": None}]
    assert "numpy" in man["versions"] and "GM" in man["inputs"]
    assert _digest(cohort) == before  # inputs untouched
    assert "| RVFL |" in capsys.readouterr().out


def test_rerun_is_byte_identical(cohort, tmp_path):
    _run(cohort, tmp_path / "a", "--modalities", "CT,ALL", "--seeds", "1-2", "--models", "RVFL,LSSVM-L")
    _run(cohort, tmp_path / "b", "--modalities", "CT,ALL", "--seeds", "1-2", "--models", "RVFL,LSSVM-L")
    fa = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a" / "results").rglob("*.csv"))
    assert fa
    for rel in fa:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["config_hash"] == mb["config_hash"]


def test_failed_cell_gives_partial_exit(cohort, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({
        "data_dir": str(cohort), "models": ["RVFL", "IFRVFL"], "modalities": ["CT"], "seeds": [1],
        "grid_overrides": {"IFRVFL": {"N": [0]}}, "output_dir": str(tmp_path / "o"),
    }))
    assert cli.main(["run", "--config", str(cfg)]) == cli.EXIT_PARTIAL
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    status = {c["model"]: c["status"] for c in man["cells"]}
    assert status == {"RVFL": "ok", "IFRVFL": "failed"}
    assert "NA" in (tmp_path / "o" / "results" / "accuracy_matrix.csv").read_text()


def _args(**kw):
    base = dict(config=None, data_dir=None, models=None, modalities=None, seeds=None, repetitions=None,
                out=None, jobs=None, k=None, split_seed=None, train_fraction=None, full_grid=False,
                no_standardize=False, full_precision_ties=False)
    base.update(kw)
    return SimpleNamespace(**base)


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"models": "rnn", "jobs": 2, "output_dir": "from_file", "repetitions": 3}))
    c = cli.build_config(_args(config=str(cfg)), environ={})
    assert c["jobs"] == 2 and c["output_dir"] == "from_file" and c["seeds"] == [1, 2, 3]
    assert len(c["models"]) == 13
    c = cli.build_config(_args(config=str(cfg)), environ={cli.ENV_JOBS: "4", cli.ENV_OUTPUT: "env_out"})
    assert c["jobs"] == 4 and c["output_dir"] == "env_out"
    c = cli.build_config(_args(config=str(cfg), jobs=1, out="flag_out", full_grid=True),
                         environ={cli.ENV_JOBS: "4", cli.ENV_OUTPUT: "env_out"})
    assert c["jobs"] == 1 and c["output_dir"] == "flag_out" and c["full_grid"]
    # where and how fast do not change the numbers
    assert cli.config_hash(c) == cli.config_hash(dict(c, jobs=8, output_dir="elsewhere"))
    assert cli.config_hash(c) != cli.config_hash(dict(c, split_seed=9))


def test_config_validation(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("colour: red\n")
    with pytest.raises(cli.CliError, match="unknown config keys"):
        cli.build_config(_args(config=str(bad)), environ={})
    with pytest.raises(cli.CliError, match="valid tags"):
        cli.build_config(_args(models="RVFL,NOPE"), environ={})
    with pytest.raises(cli.CliError, match="modality"):
        cli.build_config(_args(modalities="XX"), environ={})


def test_parse_seeds():
    assert cli.parse_seeds("1-3,7") == [1, 2, 3, 7]
    assert cli.parse_seeds([4, 5]) == [4, 5]
    assert cli.parse_seeds(None) is None


def test_missing_data_is_hard_failure(tmp_path, capsys):
    assert cli.main(["run", "--data-dir", str(tmp_path), "--models", "RVFL", "--modalities", "CT",
                     "--out", str(tmp_path / "o")]) == cli.EXIT_FAIL
    assert "not found" in capsys.readouterr().err


def _matrix_file(tmp_path, fam):
    M = matrix_from_metrics(pd.read_csv(DATA / f"{fam}_metrics.csv"))
    p = tmp_path / fam / "results" / "accuracy_matrix.csv"
    p.parent.mkdir(parents=True)
    write_accuracy_matrix(M, p)
    return p


def test_stats_on_rnn_table_rejects(tmp_path, capsys):
    p = _matrix_file(tmp_path, "rnn")
    assert cli.main(["stats", str(p.parent.parent)]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "F_F = 4.75" in out and "critical = 1.96" in out and ": reject" in out
    assert (tmp_path / "rnn" / "stats" / "friedman.txt").exists()


def test_stats_on_hbc_table_fails_to_reject(tmp_path, capsys):
    p = _matrix_file(tmp_path, "hbc")
    assert cli.main(["stats", str(p), "--critical-value", "1.84"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "F_F = 1.09" in out and "fail to reject" in out


def test_stats_needs_two_models(tmp_path, capsys):
    p = tmp_path / "m.csv"
    p.write_text("model,CT,GM\nRVFL,70.00,71.00\n")
    assert cli.main(["stats", str(p)]) == cli.EXIT_FAIL
    assert "need >=2 models" in capsys.readouterr().err


def test_stats_rejects_missing_cells(tmp_path, capsys):
    p = tmp_path / "m.csv"
    p.write_text("model,CT,GM\nRVFL,70.00,NA\nELM,60.00,61.00\n")
    assert cli.main(["stats", str(p)]) == cli.EXIT_FAIL
    assert "missing" in capsys.readouterr().err


def test_explain_and_report(cohort, tmp_path, capsys):
    out = tmp_path / "o"
    assert _run(cohort, out) == cli.EXIT_OK
    capsys.readouterr()
    assert cli.main(["explain", str(out), "--model", "RVFL", "--modality", "GM", "--n-perms", "3"]) == cli.EXIT_OK
    text = capsys.readouterr().out
    assert "| Modality | Top 5 Features |" in text
    top = pd.read_csv(out / "shap" / "GM_top5.csv")
    assert len(top) == 5 and top["feature"].str.startswith("gm_").all()
    assert cli.main(["report", str(out)]) == cli.EXIT_OK
    assert "| RVFL |" in capsys.readouterr().out


def test_explain_errors(cohort, tmp_path, capsys):
    out = tmp_path / "o"
    _run(cohort, out)
    capsys.readouterr()
    assert cli.main(["explain", str(out), "--model", "RVFL", "--modality", "GM", "--k", "0"]) == cli.EXIT_FAIL
    assert "k must be" in capsys.readouterr().err
    assert cli.main(["explain", str(out), "--model", "Nope", "--modality", "GM"]) == cli.EXIT_FAIL
    assert "valid tags" in capsys.readouterr().err
    assert cli.main(["explain", str(out), "--model", "ELM", "--modality", "GM"]) == cli.EXIT_FAIL
    assert "missing model dump" in capsys.readouterr().err
