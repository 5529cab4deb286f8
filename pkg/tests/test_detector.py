import numpy as np
import pytest

from asvattack.audio import Waveform
from asvattack.detector.features import FeatureConfig, ResidualFeature, pooled_statistics, residual_features
from asvattack.detector.model import (
    BONAFIDE,
    SPOOF,
    DetectorConfig,
    DetectorModel,
    detection_eer,
    eval_detection,
    read_score_file,
    train_detector,
    write_score_file,
)
from asvattack.detector.resynth import register_resynthesizer, resynthesize
from asvattack.errors import InsufficientDataError, SilenceAnalysisError
from asvattack.synth import CorpusConfig, make_corpus
from asvattack.trials import GENUINE, IMPOSTOR
from oracles import dominant_frequency

SR = 16000


@pytest.fixture(scope="module")
def bonafide():
    """60 training and 12 held-out utterances from the same six speakers."""
    corpus = make_corpus(CorpusConfig(n_speakers=6, utterances_per_speaker=12, seed=21))
    train = [w for k, (w, _) in enumerate(corpus) if k % 12 < 10]
    held = [w for k, (w, _) in enumerate(corpus) if k % 12 >= 10]
    return train, held


@pytest.fixture(scope="module")
def detector(bonafide):
    return train_detector(bonafide[0])


def test_silence_rejected():
    with pytest.raises(SilenceAnalysisError, match="silence"):
        resynthesize(Waveform(np.zeros(4000)))


@pytest.mark.parametrize("method", ["vocoder", "codec"])
@pytest.mark.parametrize("f0", [220.0, 440.0, 1000.0])
def test_sine_keeps_its_frequency(method, f0):
    n = SR
    x = Waveform(0.5 * np.sin(2 * np.pi * f0 * np.arange(n) / SR))
    y = resynthesize(x, method)
    assert len(y) == n and y.sample_rate == SR
    assert abs(dominant_frequency(y.samples, SR) - dominant_frequency(x.samples, SR)) <= SR / n


def test_unknown_and_external_methods(eval_corpus):
    x = eval_corpus[0][0]
    with pytest.raises(ValueError):
        resynthesize(x, "nope")
    register_resynthesizer("halve", lambda w: w.samples / 2)
    np.testing.assert_array_equal(resynthesize(x, "halve").samples, x.samples / 2)
    register_resynthesizer("short", lambda w: w.samples[:-1])
    with pytest.raises(ValueError):
        resynthesize(x, "short")


def test_resynthesized_input_has_smaller_residual(eval_corpus):
    for w, _ in eval_corpus[::8][:10]:
        raw = residual_features(w).matrix
        again = residual_features(resynthesize(w)).matrix
        assert np.linalg.norm(again) < np.linalg.norm(raw)


def test_feature_shape(eval_corpus):
    cfg = FeatureConfig()
    w = eval_corpus[0][0]
    f = residual_features(w, cfg)
    assert f.shape == (1 + (len(w) - cfg.frame) // cfg.hop, cfg.n_bins)
    assert pooled_statistics(f, cfg).shape == (2 * cfg.n_bands,)


def test_too_little_training_data(bonafide):
    with pytest.raises(InsufficientDataError):
        train_detector(bonafide[0][:49])


def test_bonafide_outscores_corrupted_residual(detector, bonafide):
    rng = np.random.default_rng(0)
    cfg = detector.config.features
    clean, corrupt = [], []
    for w in bonafide[1]:
        f = residual_features(w, cfg)
        noisy = ResidualFeature(f.matrix + rng.normal(0, 5 * np.abs(f.matrix).mean(), f.shape), f.frame, f.hop)
        clean.append(pooled_statistics(f, cfg))
        corrupt.append(pooled_statistics(noisy, cfg))
    clean_s, corrupt_s = detector.score_stats(np.stack(clean)), detector.score_stats(np.stack(corrupt))
    assert np.all(clean_s <= 0) and np.all(clean_s > -1)
    assert np.all(clean_s > corrupt_s)
    np.testing.assert_allclose(clean_s, detector.score(bonafide[1]), rtol=1e-12)


def test_training_is_deterministic(bonafide, detector):
    again = train_detector(bonafide[0])
    np.testing.assert_array_equal(again.projection, detector.projection)


def test_indistinguishable_classes_give_chance(detector, bonafide):
    held = bonafide[1]
    out = eval_detection(detector, held, {"same": held})
    assert out["overall"] == pytest.approx(0.5)


def test_eval_cells_are_bounded(detector, bonafide):
    rng = np.random.default_rng(1)
    held = bonafide[1]
    cells = {f"snr{k}": [w.with_samples(np.clip(w.samples + rng.normal(0, s, len(w)), -1, 1)) for w in held]
             for k, s in enumerate((0.001, 0.05))}
    out = eval_detection(detector, held, cells)
    assert set(out["cells"]) == set(cells)
    for v in list(out["cells"].values()) + [out["overall"]]:
        assert 0.0 <= v <= 1.0
    with pytest.raises(InsufficientDataError):
        eval_detection(detector, held, {"a": []})


def test_model_roundtrip(tmp_path, detector, bonafide):
    back = DetectorModel.load(detector.save(tmp_path / "det.json"))
    assert back.config == detector.config and back.condition == detector.condition
    np.testing.assert_array_equal(back.score(bonafide[1][:3]), detector.score(bonafide[1][:3]))


def test_score_file_roundtrip(tmp_path):
    p = write_score_file(tmp_path / "s.txt", ["a/1.wav", "b/2.wav"], [-0.25, -0.75], [BONAFIDE, SPOOF])
    back = read_score_file(p)
    assert [(t.score, t.label) for t in back] == [(-0.25, GENUINE), (-0.75, IMPOSTOR)]
    with pytest.raises(ValueError):
        write_score_file(tmp_path / "t.txt", ["a"], [0.0], ["real"])


def test_unknown_condition(bonafide):
    with pytest.raises(ValueError):
        train_detector(bonafide[0], DetectorConfig(codec_augment=False), condition="studio")
