"""Feature engineering: derived electrical quantities, exponentially weighted
moving averages (EWMA) and standard deviations (EWMS) over several spans, and
train-set standardization.

EW statistics use the finite normalized form: weights (1 - alpha)^i on the
i-th most recent sample, divided by the sum of the weights seen so far. The
recursive updates keep that normalizer, so streaming and batch results agree
from the very first sample of a profile.
"""
import hashlib
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from pmbench.data import COLUMNS
from pmbench.errors import ArgumentError, PmbenchError

logger = logging.getLogger(__name__)


class SIGNALS:
    U_S = "u_s"
    I_S = "i_s"
    S_EL = "s_el"
    I_S_X_W = "i_s_x_w"
    S_EL_X_W = "s_el_x_w"
    DERIVED = [U_S, I_S, S_EL, I_S_X_W, S_EL_X_W]
    BASE = COLUMNS.INPUTS + DERIVED


@dataclass(frozen=True)
class SpanSet:
    spans: Tuple[int, ...]

    def __post_init__(self):
        spans = tuple(int(s) for s in self.spans)
        if len(spans) == 0:
            raise ArgumentError("A span set needs at least one span.")
        if any(s != orig for s, orig in zip(spans, self.spans)):
            raise ArgumentError(
                "Spans must be integers, got {}.".format(self.spans)
            )
        if spans[0] < 1 or any(b <= a for a, b in zip(spans, spans[1:])):
            raise ArgumentError(
                "Spans must be >= 1 and strictly increasing, got {}."
                .format(spans)
            )
        object.__setattr__(self, "spans", spans)

    def __len__(self):
        return len(self.spans)

    def __iter__(self):
        return iter(self.spans)

    @property
    def alphas(self):
        return np.array([2.0 / (s + 1.0) for s in self.spans])

    @classmethod
    def from_seconds(cls, seconds, sample_rate_hz):
        return cls(tuple(
            max(1, int(round(s * sample_rate_hz))) for s in seconds
        ))

    def to_list(self):
        return list(self.spans)


class EwStreamState:
    """Recursive EW filter state for an array of (signal, span) pairs.

    Attributes:
        mean: Bias-corrected EWMA
        sq_dev: Weighted sum of squared deviations from the mean
        w_sum: Sum of the weights seen so far, in (0, 1/alpha]
    """

    def __init__(self, shape=()):
        self.mean = np.zeros(shape)
        self.sq_dev = np.zeros(shape)
        self.w_sum = np.zeros(shape)

    def __repr__(self):
        return "<EwStreamState shape={}>".format(np.shape(self.mean))

    @property
    def variance(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            var = np.where(self.w_sum > 0, self.sq_dev / self.w_sum, 0.0)
        return np.maximum(var, 0.0)

    @property
    def nbytes(self):
        return self.mean.nbytes + self.sq_dev.nbytes + self.w_sum.nbytes

    def to_dict(self):
        return {
            "mean": np.asarray(self.mean).tolist(),
            "sq_dev": np.asarray(self.sq_dev).tolist(),
            "w_sum": np.asarray(self.w_sum).tolist(),
        }


def _check_alpha(alpha):
    alpha = np.asarray(alpha, dtype=float)
    if not np.all((alpha > 0) & (alpha <= 1)):
        raise ArgumentError(
            "The smoothing factor must lie in (0, 1], got {}.".format(alpha)
        )
    return alpha


def ewma_update(state, x, alpha):
    """mu_t = (1 - alpha) mu_{t-1} + alpha x_t, normalized by the running
    weight sum so that the output is the finite weighted average.

    Returns:
        tuple: The updated state and mu_t
    """
    alpha = _check_alpha(alpha)
    state.w_sum = (1.0 - alpha) * state.w_sum + 1.0
    state.mean = state.mean + (x - state.mean) / state.w_sum
    return state, state.mean


def ewms_update(state, x, alpha):
    """Update mean and weighted squared deviations (West's weighted
    recursion) and return the EW standard deviation.

    Returns:
        tuple: The updated state and sigma_t
    """
    alpha = _check_alpha(alpha)
    decay = 1.0 - alpha
    state.w_sum = decay * state.w_sum + 1.0
    delta = x - state.mean
    state.mean = state.mean + delta / state.w_sum
    state.sq_dev = decay * state.sq_dev + delta * (x - state.mean)
    return state, np.sqrt(np.maximum(state.sq_dev / state.w_sum, 0.0))


def alpha_from_rc(rc, h):
    """Smoothing factor of the backward-difference RC low-pass filter."""
    if not h > 0:
        raise ArgumentError(
            "The step size must be positive, got {}.".format(h)
        )
    if rc < 0:
        raise ArgumentError(
            "The RC time constant must be nonnegative, got {}.".format(rc)
        )
    return h / (rc + h)


def span_from_rc(rc, h):
    """Span whose EWMA has the same smoothing factor as an RC filter."""
    alpha = alpha_from_rc(rc, h)
    return max(1, int(round(2.0 / alpha - 1.0)))


def spans_from_time_constants(time_constants, h):
    spans = sorted({span_from_rc(tc, h) for tc in time_constants})
    return SpanSet(tuple(spans))


def recent_weight_fraction(span):
    """Share of the total weight mass carried by the latest `span` samples."""
    alpha = 2.0 / (span + 1.0)
    return 1.0 - (1.0 - alpha) ** span


def _derived(u_d, u_q, i_d, i_q, motor_speed):
    u_s = np.sqrt(u_d ** 2 + u_q ** 2)
    i_s = np.sqrt(i_d ** 2 + i_q ** 2)
    s_el = 1.5 * u_s * i_s
    # Mechanical angular speed in rad/s from 1/min
    omega = 2 * np.pi * motor_speed / 60.0
    return u_s, i_s, s_el, i_s * omega, s_el * omega


def derive_inputs(sample):
    """Extend a raw sample with the derived inputs.

    Returns:
        OrderedDict: The twelve base signals, keyed by name
    """
    record = OrderedDict(
        (name, float(getattr(sample, name))) for name in COLUMNS.INPUTS
    )
    for name, value in zip(SIGNALS.DERIVED, _derived(
        record[COLUMNS.U_D], record[COLUMNS.U_Q],
        record[COLUMNS.I_D], record[COLUMNS.I_Q],
        record[COLUMNS.MOTOR_SPEED],
    )):
        record[name] = float(value)
    return record


def derive_frame(frame):
    base = frame[COLUMNS.INPUTS].astype(float).copy()
    derived = _derived(
        base[COLUMNS.U_D].to_numpy(), base[COLUMNS.U_Q].to_numpy(),
        base[COLUMNS.I_D].to_numpy(), base[COLUMNS.I_Q].to_numpy(),
        base[COLUMNS.MOTOR_SPEED].to_numpy(),
    )
    for name, values in zip(SIGNALS.DERIVED, derived):
        base[name] = values
    return base[SIGNALS.BASE]


def feature_names(spans):
    names = list(SIGNALS.BASE)
    for span in spans:
        names += ["ewma_{}_s{}".format(s, span) for s in SIGNALS.BASE]
        names += ["ewms_{}_s{}".format(s, span) for s in SIGNALS.BASE]
    return names


@dataclass
class FeatureMatrix:
    X: np.ndarray
    y: Optional[np.ndarray]
    names: List[str]
    groups: np.ndarray
    spans: SpanSet
    scaler_id: Optional[str] = None

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def select(self, mask):
        return FeatureMatrix(
            X=self.X[mask],
            y=None if self.y is None else self.y[mask],
            names=list(self.names),
            groups=self.groups[mask],
            spans=self.spans,
            scaler_id=self.scaler_id,
        )

    def select_profiles(self, profile_ids):
        return self.select(np.isin(self.groups, list(profile_ids)))

    def to_frame(self):
        frame = pd.DataFrame(self.X, columns=self.names)
        if self.y is not None:
            frame[COLUMNS.TARGET] = self.y
        frame[COLUMNS.PROFILE] = self.groups
        return frame

    def to_csv(self, path):
        try:
            self.to_frame().to_csv(path, index=False, float_format="%.17g")
        except (IOError, OSError) as err:
            raise PmbenchError(
                "The feature matrix could not be written to {}.\n{}\n"
                .format(path, str(err))
            )


def build_features(dataset, spans) -> FeatureMatrix:
    """Raw and derived inputs plus their EWMA and EWMS at every span. The
    filters restart at every profile boundary.
    """
    if len(dataset) == 0:
        raise ArgumentError("Cannot build features of an empty dataset.")
    if not isinstance(spans, SpanSet):
        spans = SpanSet(tuple(spans))

    base = derive_frame(dataset.frame)
    n_base = base.shape[1]
    smoothed = np.empty((len(base), 2 * n_base * len(spans)))
    for _, start, stop in dataset.profile_slices():
        segment = base.iloc[start:stop]
        blocks = []
        for span in spans:
            ewm = segment.ewm(span=span, adjust=True)
            blocks.append(ewm.mean().to_numpy())
            blocks.append(ewm.std(bias=True).to_numpy())
        smoothed[start:stop] = np.hstack(blocks)

    X = np.hstack([base.to_numpy(), smoothed])
    if not np.all(np.isfinite(X)):
        raise PmbenchError("Feature computation produced non-finite values.")
    return FeatureMatrix(
        X=X,
        y=dataset.target,
        names=feature_names(spans),
        groups=dataset.groups,
        spans=spans,
    )


class FeatureStreamer:
    """Constant-memory feature builder fed one sample at a time."""

    def __init__(self, spans):
        if not isinstance(spans, SpanSet):
            spans = SpanSet(tuple(spans))
        self._spans = spans
        self._alphas = spans.alphas[:, None]
        self.reset()

    def reset(self):
        self._state = EwStreamState((len(self._spans), len(SIGNALS.BASE)))
        self._profile = None

    @property
    def nbytes(self):
        return self._state.nbytes

    def push(self, sample):
        if sample.profile_id != self._profile:
            self.reset()
            self._profile = sample.profile_id
        base = np.fromiter(derive_inputs(sample).values(), dtype=float)
        _, stds = ewms_update(self._state, base[None, :], self._alphas)
        parts = [base]
        for k in range(len(self._spans)):
            parts.append(self._state.mean[k])
            parts.append(stds[k])
        return np.concatenate(parts)


@dataclass
class Scaler:
    names: List[str]
    means: np.ndarray
    stds: np.ndarray
    keep: np.ndarray
    input_names: List[str]
    dropped: List[str] = field(default_factory=list)

    @property
    def scaler_id(self):
        digest = hashlib.sha1()
        digest.update(np.ascontiguousarray(self.means).tobytes())
        digest.update(np.ascontiguousarray(self.stds).tobytes())
        return digest.hexdigest()[:12]

    def to_dict(self):
        return {
            "names": list(self.names),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "keep": self.keep.tolist(),
            "input_names": list(self.input_names),
            "dropped": list(self.dropped),
        }

    @classmethod
    def from_dict(cls, args):
        try:
            return cls(
                names=list(args["names"]),
                means=np.asarray(args["means"], dtype=float),
                stds=np.asarray(args["stds"], dtype=float),
                keep=np.asarray(args["keep"], dtype=int),
                input_names=list(args["input_names"]),
                dropped=list(args.get("dropped", [])),
            )
        except KeyError as err:
            raise ArgumentError(
                "The scaler description is missing the key '{}'."
                .format(err.args[0])
            )


def fit_scaler(train, names=None) -> Scaler:
    if isinstance(train, FeatureMatrix):
        X, names = train.X, train.names
    else:
        X = np.asarray(train, dtype=float)
        names = names or ["x{}".format(i) for i in range(X.shape[1])]
    if X.shape[0] == 0:
        raise ArgumentError("Cannot fit a scaler on zero rows.")

    means = X.mean(axis=0)
    stds = X.std(axis=0)
    constant = stds <= 1e-12 * np.maximum(1.0, np.abs(means))
    dropped = [n for n, c in zip(names, constant) if c]
    if dropped:
        logger.warning(
            "Dropping %d zero-variance feature(s): %s",
            len(dropped), ", ".join(dropped)
        )
    keep = np.flatnonzero(~constant)
    return Scaler(
        names=[names[i] for i in keep],
        means=means[keep],
        stds=stds[keep],
        keep=keep,
        input_names=list(names),
        dropped=dropped,
    )


def apply_scaler(scaler, X):
    if isinstance(X, FeatureMatrix):
        matrix = X
        scaled = apply_scaler(scaler, matrix.X)
        return FeatureMatrix(
            X=scaled,
            y=matrix.y,
            names=list(scaler.names),
            groups=matrix.groups,
            spans=matrix.spans,
            scaler_id=scaler.scaler_id,
        )
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != len(scaler.input_names):
        raise ArgumentError(
            "Expected {} features, got {}."
            .format(len(scaler.input_names), X.shape[-1])
        )
    return (X[..., scaler.keep] - scaler.means) / scaler.stds
