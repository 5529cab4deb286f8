"""Sign-gradient PGD and round-robin ensemble PGD against speaker embedders.

Each iteration is ``x <- clip_{ball(x0, eps) & [-1, 1]}(x + alpha * sign(grad J))``
where J is the cosine between the test embedding and the (fixed) enrollment
embedding. Internally everything runs on ``(batch, samples)`` arrays so many
trials of equal length share one forward/backward pass; the single-trial
functions are thin wrappers.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..audio import Waveform
from ..asv.model import EmbedderModel, Target, _target_vector, cosine_objective
from ..errors import EmptyEnsembleError, LengthMismatchError

STEPS_COMPLETED = "steps-completed"
ALL_ATTACKED = "all-surrogates-attacked"
MAX_ROUNDS = "max-rounds-reached"


@dataclass(frozen=True)
class AttackConfig:
    alpha: float = 0.004
    steps: int = 20
    epsilon: float = 0.08
    loss: str = "cosine"
    max_ensemble_rounds: int = 10

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.max_ensemble_rounds < 1:
            raise ValueError(f"max_ensemble_rounds must be >= 1, got {self.max_ensemble_rounds}")
        if self.loss != "cosine":
            raise ValueError(f"unsupported loss {self.loss!r}; only 'cosine' is implemented")


@dataclass
class AttackTrace:
    losses: list[float] = field(default_factory=list)
    linf: list[float] = field(default_factory=list)
    iteration_models: list[str] = field(default_factory=list)
    final_scores: dict[str, float] = field(default_factory=dict)
    success: dict[str, bool | None] = field(default_factory=dict)
    termination: str = STEPS_COMPLETED
    rounds: int = 0

    def to_json(self, trial_id: str, config: AttackConfig, **extra) -> str:
        record = {"trial": trial_id, "config": asdict(config), **extra, **asdict(self)}
        return json.dumps(record, sort_keys=True)


def _project(x_adv: np.ndarray, x_orig: np.ndarray, epsilon: float) -> np.ndarray:
    out = np.clip(x_adv, x_orig - epsilon, x_orig + epsilon)
    np.clip(out, -1.0, 1.0, out=out)
    # (x0 - eps) - x0 can round to slightly more than eps; walk those samples inward
    bad = np.abs(out - x_orig) > epsilon
    while np.any(bad):
        out[bad] = np.nextafter(out[bad], x_orig[bad])
        bad = np.abs(out - x_orig) > epsilon
    return out


def project_linf(x_adv: Waveform, x_orig: Waveform, epsilon: float) -> Waveform:
    """Clamp ``x_adv`` into ``[x_orig - eps, x_orig + eps]`` intersected with ``[-1, 1]``."""
    if len(x_adv) != len(x_orig):
        raise LengthMismatchError(f"length mismatch: {len(x_adv)} vs {len(x_orig)}")
    return x_adv.with_samples(_project(np.array(x_adv.samples), x_orig.samples, epsilon))


def _run_steps(model: EmbedderModel, x: np.ndarray, origin: np.ndarray, targets: np.ndarray,
               cfg: AttackConfig, traces: list[AttackTrace], maximize: bool) -> np.ndarray:
    direction = 1.0 if maximize else -1.0
    for _ in range(cfg.steps):
        j, g = cosine_objective(model, x, targets)
        x = _project(x + direction * cfg.alpha * np.sign(g), origin, cfg.epsilon)
        dist = np.max(np.abs(x - origin), axis=1)
        for k, tr in enumerate(traces):
            tr.losses.append(float(j[k]))
            tr.linf.append(float(dist[k]))
            tr.iteration_models.append(model.model_id)
    return x


def _stack(waves: Sequence[Waveform]) -> np.ndarray:
    lengths = {len(w) for w in waves}
    if len(lengths) != 1:
        raise LengthMismatchError(f"batched attacks need equal-length inputs, got lengths {sorted(lengths)}")
    if 0 in lengths:
        raise LengthMismatchError("zero-length input")
    return np.stack([w.samples for w in waves])


def _final_scores(models, x, targets, thresholds, traces):
    for m in models:
        s, _ = cosine_objective(m, x, targets[m.model_id], need_grad=False)
        thr = None if thresholds is None else thresholds.get(m.model_id)
        for k, tr in enumerate(traces):
            tr.final_scores[m.model_id] = float(s[k])
            tr.success[m.model_id] = None if thr is None else bool(s[k] >= thr)


def pgd_attack_batch(model: EmbedderModel, xs: Sequence[Waveform], enrolls: Sequence[Target],
                     cfg: AttackConfig = AttackConfig(), threshold: float | None = None,
                     maximize: bool = True) -> list[tuple[Waveform, AttackTrace]]:
    for w in xs:
        model.check_input(w)
    origin = _stack(xs)
    targets = np.stack([_target_vector(model, e) for e in enrolls])
    traces = [AttackTrace(rounds=1) for _ in xs]
    x = _run_steps(model, origin.copy(), origin, targets, cfg, traces, maximize)
    thr = None if threshold is None else {model.model_id: threshold}
    _final_scores([model], x, {model.model_id: targets}, thr, traces)
    return [(w.with_samples(x[k]), traces[k]) for k, w in enumerate(xs)]


def pgd_attack(model: EmbedderModel, x: Waveform, x_enroll: Target, cfg: AttackConfig = AttackConfig(),
               threshold: float | None = None, maximize: bool = True) -> tuple[Waveform, AttackTrace]:
    """Run exactly ``cfg.steps`` PGD iterations against one model.

    ``maximize=True`` pushes the test embedding towards the enrollment
    (targeted acceptance of an impostor); ``threshold`` only feeds the
    trace's success flag.
    """
    return pgd_attack_batch(model, [x], [x_enroll], cfg, threshold, maximize)[0]


def ensemble_pgd_attack_batch(models: Sequence[EmbedderModel], xs: Sequence[Waveform],
                              enrolls: Sequence[Target], cfg: AttackConfig,
                              thresholds: Mapping[str, float],
                              maximize: bool = True) -> list[tuple[Waveform, AttackTrace]]:
    if not models:
        raise EmptyEnsembleError("ensemble attack needs at least one surrogate model")
    missing = [m.model_id for m in models if m.model_id not in thresholds]
    if missing:
        raise KeyError(f"no decision threshold for surrogates {missing}")
    for m in models:
        for w in xs:
            m.check_input(w)
    origin = _stack(xs)
    targets = {m.model_id: np.stack([_target_vector(m, e) for e in enrolls]) for m in models}
    traces = [AttackTrace(termination=MAX_ROUNDS) for _ in xs]
    x = origin.copy()
    active = np.arange(len(xs))
    for _ in range(cfg.max_ensemble_rounds):
        live = [traces[k] for k in active]
        for m in models:
            x[active] = _run_steps(m, x[active], origin[active], targets[m.model_id][active], cfg, live, maximize)
        for tr in live:
            tr.rounds += 1
        attacked = np.ones(active.size, dtype=bool)
        for m in models:
            s, _ = cosine_objective(m, x[active], targets[m.model_id][active], need_grad=False)
            thr = thresholds[m.model_id]
            ok = s >= thr if maximize else s < thr
            attacked &= ok
            # samples never change after leaving the active set, so this pass is final for them
            for k, score_k, ok_k in zip(active, s, ok):
                traces[k].final_scores[m.model_id] = float(score_k)
                traces[k].success[m.model_id] = bool(ok_k)
        for k in active[attacked]:
            traces[k].termination = ALL_ATTACKED
        active = active[~attacked]
        if active.size == 0:
            break
    return [(w.with_samples(x[k]), traces[k]) for k, w in enumerate(xs)]


def ensemble_pgd_attack(models: Sequence[EmbedderModel], x: Waveform, x_enroll: Target,
                        cfg: AttackConfig, thresholds: Mapping[str, float],
                        maximize: bool = True) -> tuple[Waveform, AttackTrace]:
    """Round-robin PGD over ``models`` until every surrogate accepts the sample.

    Each round runs ``cfg.steps`` PGD iterations per surrogate in list order,
    always projecting around the original input. Stops after
    ``cfg.max_ensemble_rounds`` rounds otherwise; ``trace.termination`` says
    which condition fired.
    """
    return ensemble_pgd_attack_batch(models, [x], [x_enroll], cfg, thresholds, maximize)[0]
