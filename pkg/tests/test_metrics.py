import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asvattack.asv.metrics import (
    ScoredTrial,
    clear_threshold_cache,
    compute_eer,
    decision_threshold,
    eer_from_scores,
    score_trials,
)
from asvattack.errors import SingleClassError
from asvattack.trials import GENUINE, IMPOSTOR, TrialPair
from asvattack.toy import toy_trials
from oracles import brute_force_eer


def _trials(gen, imp):
    return [ScoredTrial(None, s, GENUINE) for s in gen] + [ScoredTrial(None, s, IMPOSTOR) for s in imp]


def test_separable_scores_give_zero_eer():
    eer, thr = compute_eer(_trials([0.9, 0.8, 0.7], [0.1, 0.2]))
    assert eer == 0.0
    assert 0.2 < thr <= 0.7


def test_identical_scores_give_chance():
    eer, _ = compute_eer(_trials([0.3] * 5, [0.3] * 7))
    assert eer == pytest.approx(0.5)


def test_single_class_rejected():
    with pytest.raises(SingleClassError):
        compute_eer(_trials([0.1, 0.2], []))


def test_score_bounds_enforced():
    with pytest.raises(ValueError):
        ScoredTrial(None, 1.5, GENUINE)


def test_twenty_handcrafted_scores():
    gen = [0.91, 0.85, 0.80, 0.77, 0.62, 0.55, 0.49, 0.40, 0.33, 0.12]
    imp = [0.70, 0.58, 0.45, 0.41, 0.30, 0.22, 0.18, 0.05, -0.10, -0.30]
    eer, thr = compute_eer(_trials(gen, imp))
    ref_eer, ref_thr = brute_force_eer(gen, imp)
    assert abs(eer - ref_eer) < 1e-9 and abs(thr - ref_thr) < 1e-9
    assert eer == pytest.approx(0.3)


def test_hundred_random_sets_match_brute_force():
    rng = np.random.default_rng(2024)
    for k in range(100):
        n = int(rng.integers(2, 1001))
        ng = int(rng.integers(1, n))
        # coarse rounding on half of the sets forces ties
        scores = np.clip(rng.normal(0, 0.3, n), -1, 1)
        if k % 2:
            scores = np.round(scores, 1)
        scores[:ng] = np.clip(scores[:ng] + rng.uniform(0, 0.6), -1, 1)
        eer, thr = eer_from_scores(scores[:ng], scores[ng:])
        ref_eer, ref_thr = brute_force_eer(scores[:ng], scores[ng:])
        assert abs(eer - ref_eer) < 1e-9
        assert abs(thr - ref_thr) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=40), st.lists(st.floats(-1, 1), min_size=1, max_size=40))
def test_eer_oracle_property(gen, imp):
    eer, thr = eer_from_scores(gen, imp)
    ref_eer, ref_thr = brute_force_eer(gen, imp)
    assert abs(eer - ref_eer) < 1e-9 and abs(thr - ref_thr) < 1e-9
    assert 0.0 <= eer <= 1.0


def test_symmetric_distributions_threshold_near_zero():
    rng = np.random.default_rng(0)
    gen = np.clip(rng.normal(0.5, 0.2, 4000), -1, 1)
    _, thr = eer_from_scores(gen, -gen)
    assert abs(thr) < 0.02


def test_decision_threshold_matches_brute_force(toy_models, eval_corpus):
    audio = {w.id: w for w, _ in eval_corpus}
    trials = toy_trials()[::6]
    assert len(trials) == 200
    m = toy_models["xvec"]
    clear_threshold_cache()
    thr = decision_threshold(m, trials, audio)
    scored = score_trials(m, trials, audio)
    _, ref = brute_force_eer([s.score for s in scored if s.label == GENUINE],
                             [s.score for s in scored if s.label == IMPOSTOR])
    assert abs(thr - ref) < 1e-9
    # cached: a lookup that would fail if it re-read the audio
    assert decision_threshold(m, trials, {}) == thr


def test_trial_scores_are_symmetric_cosines(toy_models, eval_corpus):
    audio = {w.id: w for w, _ in eval_corpus}
    t = TrialPair(IMPOSTOR, "spk100/00000.wav", "spk101/00000.wav")
    rev = TrialPair(IMPOSTOR, "spk101/00000.wav", "spk100/00000.wav")
    m = toy_models["ecapa"]
    assert score_trials(m, [t], audio)[0].score == score_trials(m, [rev], audio)[0].score
