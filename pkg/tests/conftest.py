import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from asvattack.asv.model import load_model
from asvattack.synth import CorpusConfig, make_corpus
from asvattack.toy import ARCHS, EVAL_CORPUS, EVAL_OFFSET, data_dir

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def toy_models():
    """The shipped embedders in float64, keyed by architecture."""
    return {a: load_model(data_dir() / "models" / f"{a}.asvm") for a in ARCHS}


@pytest.fixture(scope="session")
def toy_models32(toy_models):
    return {a: m.with_dtype(torch.float32) for a, m in toy_models.items()}


@pytest.fixture(scope="session")
def eval_corpus():
    return make_corpus(EVAL_CORPUS, offset=EVAL_OFFSET)


@pytest.fixture(scope="session")
def small_corpus():
    """4 speakers x 5 utterances of 0.5 s; cheap input for unit tests."""
    return make_corpus(CorpusConfig(n_speakers=4, utterances_per_speaker=5, duration=0.5, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(models=("xvec", "ecapa", "resnet"), speakers=("speaker_high", "speaker_low"),
                mics=("mic_ios",), **over) -> dict:
    """A campaign small enough for unit tests (about 20 attacked trials, 2 PGD steps)."""
    import copy
    cfg = {
        "master_seed": 0,
        "output_root": "out",
        "models": [{"id": m, "path": str(data_dir() / "models" / f"{m}.asvm")} for m in models],
        "data": {"trial_list": str(data_dir() / "toy_trials.txt"), "fraction": 0.02,
                 "synthetic": {"n_speakers": 8, "utterances_per_speaker": 10, "seed": 1, "offset": 100}},
        "attack": {"steps": 2, "max_ensemble_rounds": 1, "chunk_size": 8},
        "channel": {"speakers": list(speakers), "mics": list(mics)},
        "detection": {"train": {"n_speakers": 6, "utterances_per_speaker": 9, "seed": 7, "offset": 300},
                      "max_per_cell": 10},
    }
    cfg = copy.deepcopy(cfg)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(cfg.get(k), dict):
            cfg[k].update(v)
        else:
            cfg[k] = v
    return cfg


def write_config(dest, cfg) -> Path:
    import yaml
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    p = dest / "campaign.yaml"
    p.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return p


@pytest.fixture
def monkeypatch_env(monkeypatch):
    monkeypatch.delenv("ASVATTACK_OUTPUT_ROOT", raising=False)
    return monkeypatch
