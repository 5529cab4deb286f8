import numpy as np

from asvattack.synth import CorpusConfig, make_corpus


def test_corpus_is_deterministic_and_valid():
    cfg = CorpusConfig(n_speakers=2, utterances_per_speaker=3, duration=0.25, seed=5)
    a, b = make_corpus(cfg), make_corpus(cfg)
    assert [w.id for w, _ in a] == ["spk000/00000.wav", "spk000/00001.wav", "spk000/00002.wav",
                                    "spk001/00000.wav", "spk001/00001.wav", "spk001/00002.wav"]
    for (wa, _), (wb, _) in zip(a, b):
        np.testing.assert_array_equal(wa.samples, wb.samples)
        assert len(wa) == 4000 and wa.peak <= 0.95 + 1 / 32768


def test_offset_gives_new_speakers():
    cfg = CorpusConfig(n_speakers=1, utterances_per_speaker=1, duration=0.25)
    (w0, s0), = make_corpus(cfg)
    (w1, s1), = make_corpus(cfg, offset=100)
    assert s0 != s1 and not np.array_equal(w0.samples, w1.samples)
