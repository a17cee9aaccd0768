"""Thermodynamic Probability Filter: early-abort classifier and energy books.

A small feed-forward network scores success probability from features of
the first k compression rounds; an abort policy stops predicted failures
early and the ledger tracks realized savings against the 1 - k/n bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import infotheory
from .infotheory import JointRun, NonIndependenceCertificate, Predictor
from .twin import DeviceProfile, DigitalTwin, Job, _job_trace, early_round_features

LAYER_SIZES = (3, 16, 8, 4, 2)
ROUNDS_TOTAL = 64
SAFETY_KEEP_RATE = 0.02


class TpfError(ValueError):
    """Raised for invalid TPF inputs."""


def theoretical_savings(k: int, n: int = ROUNDS_TOTAL) -> float:
    """Upper bound 1 - k/n on the energy saved by aborting after round k."""
    if n <= 0 or not 0 <= k <= n:
        raise TpfError(f"need 0 <= k <= n with n > 0, got k={k} n={n}")
    return float(1 - Fraction(k, n))


def equivalent_hashrate(savings: float) -> float:
    """Effective hashrate multiplier 1 / (1 - savings)."""
    if not 0 <= savings < 1:
        raise TpfError(f"savings must be in [0, 1), got {savings}")
    return 1.0 / (1.0 - savings)


@dataclass(frozen=True)
class EnergyLedger:
    jobs: int
    jobs_aborted: int
    rounds_executed: int
    rounds_nominal: int
    false_aborts: int
    decision_round: int
    n: int = ROUNDS_TOTAL

    def __post_init__(self):
        if self.rounds_executed > self.rounds_nominal:
            raise TpfError("executed rounds exceed nominal rounds")
        if self.false_aborts > self.jobs_aborted:
            raise TpfError("false aborts exceed aborted jobs")


def realized_savings(ledger: EnergyLedger) -> float:
    if ledger.rounds_nominal == 0:
        return 0.0
    return 1.0 - ledger.rounds_executed / ledger.rounds_nominal


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed (predicted, actual) over classes (success, failure)."""

    true_success: int    # predicted success, actually succeeded
    false_success: int   # predicted success, actually failed
    false_failure: int   # predicted failure, actually succeeded
    true_failure: int    # predicted failure, actually failed

    def __post_init__(self):
        if min(self.true_success, self.false_success,
               self.false_failure, self.true_failure) < 0:
            raise TpfError("confusion counts must be >= 0")

    @property
    def total(self) -> int:
        return (self.true_success + self.false_success
                + self.false_failure + self.true_failure)

    @property
    def accuracy(self) -> float:
        return (self.true_success + self.true_failure) / self.total


@dataclass(frozen=True)
class Classifier:
    """3-16-8-4-2 network, tanh hidden layers, two-way softmax output."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    feature_mean: tuple[float, float, float]
    feature_scale: tuple[float, float, float]

    def __post_init__(self):
        shapes = [(a, b) for a, b in zip(LAYER_SIZES, LAYER_SIZES[1:])]
        if [w.shape for w in self.weights] != shapes:
            raise TpfError("weight shapes disagree with the layer sizes")
        if [b.shape for b in self.biases] != [(b,) for _, b in shapes]:
            raise TpfError("bias shapes disagree with the layer sizes")

    @property
    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def _forward(self, x: np.ndarray) -> list[np.ndarray]:
        mean = np.array(self.feature_mean)
        scale = np.array(self.feature_scale)
        acts = [(x - mean) / scale]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            acts.append(np.tanh(z) if i < len(self.weights) - 1 else z)
        return acts

    def scores(self, features: Sequence[float]) -> tuple[float, float]:
        x = np.asarray(features, dtype=float)
        if x.shape != (3,):
            raise TpfError(f"expected a 3-vector, got shape {x.shape}")
        logits = self._forward(x[None, :])[-1][0]
        shifted = np.exp(logits - logits.max())
        p = shifted / shifted.sum()
        return float(p[1]), float(p[0])


def classify(c: Classifier, features: Sequence[float]) -> tuple[float, float]:
    """(score_success, score_failure), normalized to sum to 1."""
    return c.scores(features)


def zero_classifier(feature_mean=(0.0, 0.0, 0.0),
                    feature_scale=(1.0, 1.0, 1.0)) -> Classifier:
    weights = tuple(np.zeros((a, b)) for a, b in zip(LAYER_SIZES, LAYER_SIZES[1:]))
    biases = tuple(np.zeros(b) for b in LAYER_SIZES[1:])
    return Classifier(weights, biases, tuple(feature_mean), tuple(feature_scale))


@dataclass(frozen=True)
class Hyperparams:
    epochs: int = 300
    learning_rate: float = 0.05
    init_scale: float = 0.5
    seed: int = 0
    balance_classes: bool = True


def _init_classifier(mean, scale, hp: Hyperparams) -> Classifier:
    rng = np.random.Generator(np.random.Philox(key=hp.seed ^ 0x5450465F696E6974))
    weights, biases = [], []
    for a, b in zip(LAYER_SIZES, LAYER_SIZES[1:]):
        weights.append(rng.normal(0.0, hp.init_scale / math.sqrt(a), size=(a, b)))
        biases.append(np.zeros(b))
    return Classifier(tuple(weights), tuple(biases), tuple(mean), tuple(scale))


def loss_and_gradients(c: Classifier, features: np.ndarray, labels: np.ndarray,
                       sample_weights: Optional[np.ndarray] = None):
    """Weighted cross-entropy and its analytic parameter gradients."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    w_s = np.ones(len(y)) if sample_weights is None else np.asarray(sample_weights)
    w_s = w_s / w_s.sum()

    acts = c._forward(x)
    logits = acts[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(y)), y] = 1.0
    loss = float(-(w_s * np.log(probs[np.arange(len(y)), y] + 1e-300)).sum())

    grad_w, grad_b = [], []
    delta = (probs - onehot) * w_s[:, None]
    for i in reversed(range(len(c.weights))):
        grad_w.insert(0, acts[i].T @ delta)
        grad_b.insert(0, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ c.weights[i].T) * (1.0 - acts[i] ** 2)
    return loss, tuple(grad_w), tuple(grad_b)


def train_classifier(features: Sequence[Sequence[float]], labels: Sequence[int],
                     hp: Hyperparams = Hyperparams()) -> Classifier:
    """Deterministic full-batch gradient descent on cross-entropy."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if x.ndim != 2 or x.shape[1] != 3:
        raise TpfError("features must be an (n, 3) array")
    classes = set(int(v) for v in y)
    if classes != {0, 1}:
        raise TpfError(f"need both labels 0 and 1, got {sorted(classes)}")

    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    c = _init_classifier(tuple(mean), tuple(scale), hp)

    if hp.balance_classes:
        counts = np.bincount(y, minlength=2)
        sample_w = np.where(y == 1, 1.0 / counts[1], 1.0 / counts[0])
    else:
        sample_w = None

    initial_loss, _, _ = loss_and_gradients(c, x, y, sample_w)
    lr = hp.learning_rate
    vel_w = [np.zeros_like(w) for w in c.weights]
    vel_b = [np.zeros_like(b) for b in c.biases]
    for _ in range(hp.epochs):
        _, gw, gb = loss_and_gradients(c, x, y, sample_w)
        new_w, new_b = [], []
        for i in range(len(vel_w)):
            vel_w[i] = 0.9 * vel_w[i] - lr * gw[i]
            vel_b[i] = 0.9 * vel_b[i] - lr * gb[i]
            new_w.append(c.weights[i] + vel_w[i])
            new_b.append(c.biases[i] + vel_b[i])
        c = Classifier(tuple(new_w), tuple(new_b), c.feature_mean, c.feature_scale)

    final_loss, _, _ = loss_and_gradients(c, x, y, sample_w)
    if final_loss >= initial_loss:
        raise TpfError("training failed to reduce the loss")
    return c


@dataclass(frozen=True)
class AbortPolicy:
    """Abort when score_success falls below theta; theta=0 never aborts."""

    classifier: Classifier
    decision_round: int = 5
    theta: float = 0.0
    safety_keep_rate: float = SAFETY_KEEP_RATE

    def __post_init__(self):
        if not 1 <= self.decision_round <= ROUNDS_TOTAL:
            raise TpfError("decision_round must be in 1..64")
        if not 0.0 <= self.theta <= 1.0:
            raise TpfError("theta must be in [0, 1]")
        if not 0.0 <= self.safety_keep_rate <= 1.0:
            raise TpfError("safety_keep_rate must be in [0, 1]")


def _logit(p: float) -> float:
    p = min(max(p, 1e-12), 1.0 - 1e-12)
    return math.log(p / (1.0 - p))


def calibrate_theta(success_scores: Sequence[float],
                    failure_scores: Sequence[float], top_k: int = 300) -> float:
    """Threshold in the widest score gap just below the weakest success.

    Scores cluster by underlying signal level; cutting mid-cluster would
    abort borderline successes, so the threshold goes into the largest
    logit gap among the strongest sub-success failures.
    """
    if len(success_scores) == 0:
        raise TpfError("no success scores to calibrate against")
    floor = _logit(min(success_scores))
    below = sorted((_logit(s) for s in failure_scores if _logit(s) < floor),
                   reverse=True)[:top_k]
    if not below:
        cut = floor - 1.0
    else:
        seq = [floor] + below
        widest = max(range(len(seq) - 1), key=lambda i: seq[i] - seq[i + 1])
        # sit 30% of the way up from the failure side: false aborts cost
        # shares, missed aborts only cost rounds
        cut = seq[widest + 1] + 0.3 * (seq[widest] - seq[widest + 1])
    return 1.0 / (1.0 + math.exp(-cut))


def collect_training_set(profile: DeviceProfile, n_jobs: int, k: int,
                         difficulty: float, seed: int, tag: str = "train",
                         full_execution_rate: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Features at round k and success labels.

    ``full_execution_rate`` < 1 runs most jobs for only k rounds so the
    thermal regime matches deployment under an abort policy; the label is
    exact either way because the share outcome is fixed per job.
    """
    if not 0.0 <= full_execution_rate <= 1.0:
        raise TpfError("full_execution_rate must be in [0, 1]")
    twin = DigitalTwin(profile)
    rng = np.random.Generator(np.random.Philox(key=seed ^ 0x5450465F6D697800))
    feats, labels = [], []
    for i in range(n_jobs):
        job = Job(extranonce2=f"tpf-{tag}-{seed}-{i}".encode())
        probe = twin.probe_timing(job, rounds=k)
        trace = _job_trace(job, k)
        feats.append(early_round_features(trace, probe, profile, k))
        rounds = ROUNDS_TOTAL if rng.random() < full_execution_rate else k
        labels.append(int(twin.execute_job(job, difficulty=difficulty,
                                           rounds_executed=rounds).success))
    return np.array(feats), np.array(labels)


def train_tpf_pipeline(profile: DeviceProfile, n_train: int = 4000, k: int = 5,
                       difficulty: float = 64.0, seed: int = 0,
                       hp: Hyperparams = Hyperparams(),
                       full_execution_rate: float = 0.05) -> AbortPolicy:
    """Collect, train and calibrate an abort policy for one device profile."""
    feats, labels = collect_training_set(profile, n_train, k, difficulty, seed,
                                         full_execution_rate=full_execution_rate)
    classifier = train_classifier(feats, labels, hp)
    scores = np.array([classify(classifier, f)[0] for f in feats])
    theta = calibrate_theta(scores[labels == 1], scores[labels == 0])
    return AbortPolicy(classifier=classifier, decision_round=k, theta=theta)


@dataclass(frozen=True)
class TpfReport:
    confusion: ConfusionMatrix
    ledger: EnergyLedger
    metrics: dict = field(compare=False)

    def to_text(self) -> str:
        lines = [f"{k}={v}" for k, v in sorted(self.metrics.items())]
        return "\n".join(lines) + "\n"


def run_tpf_experiment(twin: DigitalTwin, policy: AbortPolicy, n_jobs: int,
                       seed: int, difficulty: float = 64.0) -> TpfReport:
    if n_jobs < 1:
        raise TpfError("n_jobs must be >= 1")
    k = policy.decision_round
    profile = twin.profile
    keep_rng = np.random.Generator(np.random.Philox(key=seed ^ 0x5450465F6B656570))
    bound = theoretical_savings(k)

    aborted = false_aborts = rounds_exec = 0
    ts = fs = ff = tf = 0
    for i in range(n_jobs):
        job = Job(extranonce2=f"tpf-eval-{seed}-{i}".encode())
        probe = twin.probe_timing(job, rounds=k)
        trace = _job_trace(job, k)
        feats = early_round_features(trace, probe, profile, k)
        score_success, _ = classify(policy.classifier, feats)
        predicted_fail = score_success < policy.theta
        kept = predicted_fail and keep_rng.random() < policy.safety_keep_rate
        do_abort = predicted_fail and not kept

        rounds = k if do_abort else ROUNDS_TOTAL
        result = twin.execute_job(job, difficulty=difficulty, rounds_executed=rounds)
        rounds_exec += rounds
        if do_abort:
            aborted += 1
            if result.success:
                false_aborts += 1
        if predicted_fail:
            ff += int(result.success)
            tf += int(not result.success)
        else:
            ts += int(result.success)
            fs += int(not result.success)

        # machine-proven ceiling must hold at every step
        assert 1.0 - rounds_exec / ((i + 1) * ROUNDS_TOTAL) <= bound + 1e-12

    confusion = ConfusionMatrix(ts, fs, ff, tf)
    ledger = EnergyLedger(
        jobs=n_jobs, jobs_aborted=aborted, rounds_executed=rounds_exec,
        rounds_nominal=n_jobs * ROUNDS_TOTAL, false_aborts=false_aborts,
        decision_round=k,
    )

    actual_success_rate = (ts + ff) / n_jobs
    baseline = max(actual_success_rate, 1.0 - actual_success_rate)
    accuracy = confusion.accuracy
    # a classifier losing to max-mass would never be deployed, so the
    # usable advantage is clamped at zero
    advantage = max(0.0, accuracy - baseline)
    sigma = math.sqrt(baseline * (1.0 - baseline) / n_jobs)
    no_signal = advantage <= 3.0 * sigma
    savings = realized_savings(ledger)
    metrics = {
        "jobs": n_jobs,
        "abort_fraction": aborted / n_jobs,
        "false_aborts": false_aborts,
        "realized_savings": savings,
        "theoretical_bound": bound,
        "equivalent_hashrate": equivalent_hashrate(savings) if savings < 1 else None,
        "accuracy": accuracy,
        "baseline": baseline,
        "advantage": advantage,
        "advantage_sigma": sigma,
        "no_signal": no_signal,
        "theta": policy.theta,
        "decision_round": k,
    }
    return TpfReport(confusion=confusion, ledger=ledger, metrics=metrics)


def quantize_feature(value: float, edges: Sequence[float]) -> int:
    """Bucket index under the given ascending quantile edges."""
    return int(np.searchsorted(np.asarray(edges), value, side="right"))


def quantile_edges(values: Sequence[float], buckets: int = 8) -> tuple[float, ...]:
    if buckets < 2:
        raise TpfError("need at least 2 buckets")
    qs = np.linspace(0, 1, buckets + 1)[1:-1]
    return tuple(float(v) for v in np.quantile(np.asarray(values), qs))


def certify_nonindependence(
    records: Sequence[tuple[object, object]],
    predictor: Optional[Predictor] = None,
) -> Optional[NonIndependenceCertificate]:
    """Nonindependence certificate from (bucket, label) records, if warranted.

    Without an explicit predictor the first half trains a MAP predictor and
    the second half is the evaluation joint, so in-sample optimism cannot
    manufacture a certificate.
    """
    if len(records) < 4:
        return None
    if predictor is None:
        half = len(records) // 2
        train, eval_records = records[:half], records[half:]
        train_joint = JointRun(infotheory.empirical_distribution(list(train)))
        predictor = infotheory.map_predictor(train_joint)
        eval_records = [r for r in eval_records if r[0] in predictor.mapping]
        if not eval_records:
            return None
    else:
        eval_records = list(records)

    joint = JointRun(infotheory.empirical_distribution(list(eval_records)))
    accuracy = infotheory.predictor_accuracy(joint, predictor)
    baseline = infotheory.max_mass(infotheory.marginals(joint)[1])
    sigma = math.sqrt(max(baseline * (1.0 - baseline), 1e-12) / len(eval_records))
    if accuracy - baseline <= 3.0 * sigma:
        return None
    return infotheory.nonindependence_certificate(joint, predictor)


CLASSIFIER_FORMAT = "tpf-classifier v1"


def classifier_to_text(c: Classifier) -> str:
    lines = [CLASSIFIER_FORMAT,
             "sizes " + " ".join(str(s) for s in LAYER_SIZES),
             "mean " + " ".join(f"{v:.17g}" for v in c.feature_mean),
             "scale " + " ".join(f"{v:.17g}" for v in c.feature_scale)]
    for i, (w, b) in enumerate(zip(c.weights, c.biases)):
        lines.append(f"layer {i}")
        for row in w:
            lines.append(" ".join(f"{v:.17g}" for v in row))
        lines.append(" ".join(f"{v:.17g}" for v in b))
    return "\n".join(lines) + "\n"


def classifier_from_text(text: str) -> Classifier:
    lines = text.strip().split("\n")
    if not lines or lines[0] != CLASSIFIER_FORMAT:
        raise TpfError("unrecognized classifier format header")
    if lines[1] != "sizes " + " ".join(str(s) for s in LAYER_SIZES):
        raise TpfError("unsupported layer sizes")
    mean = tuple(float(v) for v in lines[2].split()[1:])
    scale = tuple(float(v) for v in lines[3].split()[1:])
    weights, biases = [], []
    pos = 4
    for i, (a, b) in enumerate(zip(LAYER_SIZES, LAYER_SIZES[1:])):
        if lines[pos] != f"layer {i}":
            raise TpfError(f"expected 'layer {i}' at line {pos + 1}")
        pos += 1
        rows = [[float(v) for v in lines[pos + r].split()] for r in range(a)]
        weights.append(np.array(rows))
        pos += a
        biases.append(np.array([float(v) for v in lines[pos].split()]))
        pos += 1
    return Classifier(tuple(weights), tuple(biases), mean, scale)
