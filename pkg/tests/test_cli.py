import json

import pandas as pd
import pytest

from meld.__main__ import EXIT_CHECKPOINT, EXIT_CONFIG, EXIT_IO, build_parser, main
from meld.utils import read_jsonl

TINY = [
    "data.n_max=12",
    "schedule.embed_dim=8",
    "schedule.hidden_dim=8",
    "denoiser.layers=1",
    "denoiser.hidden_dim=16",
    "denoiser.heads=2",
    "denoiser.edge_dim=4",
    "denoiser.ffn_mult=2",
    "train.steps=3",
    "train.batch_size=4",
]


def _sets(items):
    args = []
    for item in items:
        args += ["--set", item]
    return args


def _run(*argv):
    return main(list(argv) + ["--workers", "1", "--quiet", "--log-level", "WARNING"])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A corpus and a three-step checkpoint shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus.jsonl"
    assert _run("synth", "--kind", "molecules", "--count", "24", "--max-atoms", "7",
                "--out", str(corpus)) == 0
    run_dir = root / "run"
    assert _run("train", "--out", str(run_dir), *_sets(TINY + [f"data.train_path={corpus}"])) == 0
    return corpus, run_dir / "model.ckpt"


def test_parse_and_write_round_trip(tmp_path):
    smiles = tmp_path / "mols.smi"
    smiles.write_text("CCO\n\nC1=CC=CC=C1\nCC(=O)N\n")
    records = tmp_path / "mols.jsonl"
    assert _run("parse", "--in", str(smiles), "--out", str(records)) == 0
    rows = read_jsonl(records)
    assert len(rows) == 3
    assert rows[0]["smiles"] == "CCO"

    back = tmp_path / "back.smi"
    assert _run("write", "--in", str(records), "--out", str(back)) == 0
    assert len(back.read_text().splitlines()) == 3


def test_parse_write_and_synth_leave_run_records(tmp_path):
    smiles = tmp_path / "mols.smi"
    smiles.write_text("CCO\nCC(=O)N\n")
    records = tmp_path / "mols.jsonl"
    assert _run("parse", "--in", str(smiles), "--out", str(records)) == 0
    assert _run("write", "--in", str(records), "--out", str(tmp_path / "back.smi")) == 0
    assert _run("synth", "--kind", "ring", "--count", "4", "--nodes", "5", "--seed", "9",
                "--out", str(tmp_path / "ring.jsonl")) == 0

    parse = json.loads((tmp_path / "mols.run.json").read_text())
    assert parse["command"] == "parse"
    assert parse["count"] == 2
    assert parse["input"] == str(smiles)
    assert parse["config"]["data"]["atom_types"] == ["C", "N", "O", "F"]
    write = json.loads((tmp_path / "back.run.json").read_text())
    assert (write["command"], write["count"]) == ("write", 2)
    synth = json.loads((tmp_path / "ring.run.json").read_text())
    assert (synth["command"], synth["seed"], synth["kind"], synth["count"]) == ("synth", 9, "ring", 4)


def test_parse_error_reports_kind(tmp_path, capsys):
    smiles = tmp_path / "bad.smi"
    smiles.write_text("CCO\nCBr\n")
    assert _run("parse", "--in", str(smiles), "--out", str(tmp_path / "x.jsonl")) == 1
    assert "error: UnknownAtom" in capsys.readouterr().err


def test_missing_input_is_an_io_error(tmp_path, capsys):
    code = _run("parse", "--in", str(tmp_path / "absent.smi"), "--out", str(tmp_path / "x.jsonl"))
    assert code == EXIT_IO
    assert "error: FileNotFoundError" in capsys.readouterr().err


def test_unknown_config_key_is_a_config_error(tmp_path):
    code = _run("synth", "--out", str(tmp_path / "x.jsonl"), "--set", "train.bogus=1")
    assert code == EXIT_CONFIG


def test_synth_ring_corpus(tmp_path):
    out = tmp_path / "ring.jsonl"
    assert _run("synth", "--kind", "ring", "--count", "10", "--nodes", "6", "--out", str(out)) == 0
    rows = read_jsonl(out)
    assert len(rows) == 10
    assert all(len(r["nodes"]) == 6 for r in rows)


def test_train_writes_run_outputs(trained):
    _, ckpt = trained
    run_dir = ckpt.parent
    assert ckpt.exists()
    record = json.loads((run_dir / "run.json").read_text())
    assert record["command"] == "train"
    assert record["config"]["train"]["steps"] == 3
    assert len(pd.read_csv(run_dir / "train_log.csv")) == 3


def test_sample_and_eval(trained, tmp_path):
    corpus, ckpt = trained
    out = tmp_path / "samples.jsonl"
    assert _run("sample", "--ckpt", str(ckpt), "--count", "4", "--steps", "5", "--seed", "1",
                "--trace", "--out", str(out)) == 0
    rows = read_jsonl(out)
    assert [r["index"] for r in rows] == [0, 1, 2, 3]
    assert (tmp_path / "samples.run.json").exists()
    assert len(list((tmp_path / "samples_traces").glob("sample_*.csv"))) == 4

    report = tmp_path / "metrics.json"
    assert _run("eval", "--generated", str(out), "--train", str(corpus), "--out", str(report)) == 0
    metrics = json.loads(report.read_text())
    assert metrics["generated"] == 4
    assert 0 <= metrics["validity_pct"] <= 100
    assert (tmp_path / "metrics.txt").exists()


def test_sample_rejects_bad_requests(trained, tmp_path):
    _, ckpt = trained
    out = str(tmp_path / "s.jsonl")
    assert _run("sample", "--ckpt", str(ckpt), "--count", "0", "--out", out) == EXIT_CONFIG
    assert _run("sample", "--ckpt", str(ckpt), "--cond", "logp=1.0", "--out", out) == EXIT_CONFIG
    assert _run("sample", "--ckpt", str(ckpt), "--cond", "logp", "--out", out) == EXIT_CONFIG


def test_damaged_checkpoint(trained, tmp_path):
    _, ckpt = trained
    broken = tmp_path / "broken.ckpt"
    broken.write_bytes(ckpt.read_bytes()[:-8])
    assert _run("sample", "--ckpt", str(broken), "--out", str(tmp_path / "s.jsonl")) == EXIT_CHECKPOINT


def test_clash_with_named_schedule(tmp_path):
    corpus = tmp_path / "ring.jsonl"
    assert _run("synth", "--kind", "ring", "--count", "8", "--nodes", "5", "--out", str(corpus)) == 0
    out = tmp_path / "clash.csv"
    assert _run("clash", "--data", str(corpus), "--ckpt-or-schedule", "fixed_powerlaw",
                "--timesteps", "0,T-50,1", "--seeds", "2", "--nodes", "5", "--out", str(out)) == 0
    table = pd.read_csv(out, index_col=0)
    assert list(table.index) == [0.0, 0.5, 1.0]
    assert list(table.columns) == ["seed_0", "seed_1", "mean"]
    assert table.loc[1.0, "mean"] == 1
    record = json.loads((tmp_path / "clash.run.json").read_text())
    assert (record["seed"], record["seed_count"], record["seeds"]) == (0, 2, [0, 1])

    shifted = tmp_path / "shifted.csv"
    assert _run("clash", "--data", str(corpus), "--ckpt-or-schedule", "fixed_powerlaw",
                "--timesteps", "0,1", "--seeds", "2", "--seed", "3", "--out", str(shifted)) == 0
    assert list(pd.read_csv(shifted, index_col=0).columns) == ["seed_3", "seed_4", "mean"]
    record = json.loads((tmp_path / "shifted.run.json").read_text())
    assert (record["seed"], record["seed_count"], record["seeds"]) == (3, 2, [3, 4])

    code = _run("clash", "--data", str(corpus), "--ckpt-or-schedule", "not_a_schedule",
                "--out", str(out))
    assert code == EXIT_CONFIG
    code = _run("clash", "--data", str(corpus), "--ckpt-or-schedule", "fixed_cosine",
                "--timesteps", "1.5", "--out", str(out))
    assert code == EXIT_CONFIG


def test_inspect_reports(trained, tmp_path):
    _, ckpt = trained
    variance = tmp_path / "variance.csv"
    assert _run("inspect", "--ckpt", str(ckpt), "--schedule-variance", "--perms", "3",
                "--n", "4", "--out", str(variance)) == 0
    assert {"node_std", "edge_std"} <= set(pd.read_csv(variance).columns)

    similarity = tmp_path / "similarity.csv"
    assert _run("inspect", "--ckpt", str(ckpt), "--embedding-similarity", "--n", "4",
                "--out", str(similarity)) == 0

    mols = tmp_path / "mols.smi"
    mols.write_text("CCN\nCC(=O)N\n")
    alpha = tmp_path / "alpha.csv"
    assert _run("inspect", "--ckpt", str(ckpt), "--alpha-table", str(mols), "--out", str(alpha)) == 0
    assert alpha.exists()

    entropy_dir = tmp_path / "entropy"
    assert _run("inspect", "--ckpt", str(ckpt), "--entropy", str(mols), "--carry-over",
                "--out", str(entropy_dir)) == 0
    summary = pd.read_csv(entropy_dir / "entropy_summary.csv")
    assert list(summary["masked_edges"]) == [1, 1]
    assert (entropy_dir / "entropy_1_edges.csv").exists()
    assert (entropy_dir / "run.json").exists()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["--version"])
    assert info.value.code == 0
    assert "meld" in capsys.readouterr().out
