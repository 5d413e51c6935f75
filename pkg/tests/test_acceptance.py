import json

import numpy as np
import pandas as pd
import pytest

from meld.__main__ import main
from meld.evaluation import basic_metrics, clash_count
from meld.graphmol import Dataset, random_molecules, symmetric_ring_corpus
from meld.sampler import generate
from meld.schedules import CosineSchedule
from meld.schemas import load_config
from meld.training import Trainer


@pytest.mark.slow
def test_ablation_end_to_end(tmp_path):
    corpus = tmp_path / "train.jsonl"
    assert main(["synth", "--count", "200", "--max-atoms", "9", "--out", str(corpus), "--quiet"]) == 0
    out = tmp_path / "ablation"
    code = main([
        "ablate", "--modes", "fixed_powerlaw,learn_classwise,learn_elementwise", "--out", str(out),
        "--quiet", "--workers", "2",
        "--set", f"data.train_path={corpus}",
        "--set", "data.n_max=16",
        "--set", "train.steps=60",
        "--set", "train.batch_size=16",
        "--set", "sample.steps=40",
        "--set", "sample.count=32",
    ])
    assert code == 0
    table = pd.read_csv(out / "ablation.csv")
    assert list(table["mode"]) == ["fixed_powerlaw", "learn_classwise", "learn_elementwise"]
    params = dict(zip(table["mode"], table["schedule_params"]))
    assert params["fixed_powerlaw"] == 0
    assert params["learn_classwise"] == 8
    assert params["learn_elementwise"] > params["learn_classwise"]
    for mode in table["mode"]:
        metrics = json.loads((out / mode / "metrics.json").read_text())
        assert metrics["generated"] == 32
        assert set(metrics["mmd"]) == {"degree", "clustering", "spectral"}
        summary = json.loads((out / mode / "summary.json").read_text())
        assert summary["steps"] == 60


@pytest.mark.slow
def test_generated_molecules_are_mostly_valid(tmp_path):
    """2000 steps on 500 molecules, then 512 samples pass the valence check at least 90% of the time."""
    config = load_config(overrides=[
        "data.n_max=16",
        "train.steps=2000",
        "train.batch_size=16",
        "train.learning_rate=1e-3",
        "train.ema_decay=0.99",
        f"train.out_dir={tmp_path}",
        "sample.count=512",
    ])
    vocab = config.data.vocabulary()
    dataset = Dataset.from_samples(random_molecules(500, 9, vocab, np.random.default_rng(0), min_atoms=2))
    trainer = Trainer(config, dataset, tmp_path / "run")
    trainer.run(save=False)
    graphs, _ = generate(trainer.ema, trainer.schedule, config.sample, vocab, dataset.size_histogram)
    report = basic_metrics(graphs, dataset.samples, vocab)
    assert report.generated == 512
    assert report.validity_pct >= 90.0


@pytest.mark.slow
def test_clash_counts_of_trained_elementwise_schedule(tmp_path):
    config = load_config(overrides=[
        "data.n_max=16",
        "train.steps=300",
        "train.batch_size=8",
        f"train.out_dir={tmp_path}",
    ])
    vocab = config.data.vocabulary()
    rings = symmetric_ring_corpus(50, 8, vocab, np.random.default_rng(0))
    trainer = Trainer(config, Dataset.from_samples(rings), tmp_path / "run")
    trainer.run(save=False)

    timesteps = [0.75, 0.999999, 1.0]
    learned = clash_count(rings, trainer.schedule, vocab, timesteps, seeds=3)
    cosine = clash_count(rings, CosineSchedule(epsilon=config.schedule.epsilon, n_max=16), vocab,
                         timesteps, seeds=3)
    assert learned.loc[1.0, "mean"] == cosine.loc[1.0, "mean"] == 1
    # near t = 1 only epsilon-sized survival remains
    assert learned.loc[0.999999, "mean"] <= 2 and cosine.loc[0.999999, "mean"] <= 2
    # both schedules keep the ring corpus nearly clash-free at t = 0.75
    assert learned.loc[0.75, "mean"] >= 0.9 * cosine.loc[0.75, "mean"]
    assert cosine.loc[0.75, "mean"] >= 45
