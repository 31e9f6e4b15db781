"""Measurement sessions of the motor-temperature test bench.

A dataset is an ordered table of sensor rows sampled at a constant rate and
grouped into profiles (independent recording sessions). Rows of one profile
are always contiguous and time ordered.
"""
import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from pmbench.errors import ArgumentError, ParseError, PmbenchError, SchemaError

logger = logging.getLogger(__name__)


class COLUMNS:
    AMBIENT = "ambient"
    COOLANT = "coolant"
    U_D = "u_d"
    U_Q = "u_q"
    I_D = "i_d"
    I_Q = "i_q"
    MOTOR_SPEED = "motor_speed"
    TARGET = "pm"
    PROFILE = "profile_id"
    # Model inputs, in the order of the measured-inputs table
    INPUTS = [AMBIENT, COOLANT, U_D, U_Q, I_D, I_Q, MOTOR_SPEED]
    REQUIRED = [
        AMBIENT, COOLANT, U_D, U_Q, MOTOR_SPEED, I_D, I_Q, TARGET, PROFILE
    ]
    # Present in the public dataset, never used as model inputs
    OPTIONAL = ["torque", "stator_yoke", "stator_tooth", "stator_winding"]


class MOTOR:
    """Electrical constants used to derive d/q voltages for synthetic rows."""
    STATOR_RESISTANCE = 0.015  # Ohm
    L_D = 0.25e-3  # H
    L_Q = 0.35e-3  # H
    FLUX_LINKAGE = 0.07  # Vs
    POLE_PAIRS = 4


@dataclass(frozen=True)
class RawSample:
    ambient: float
    coolant: float
    u_d: float
    u_q: float
    i_d: float
    i_q: float
    motor_speed: float
    pm: Optional[float] = None
    profile_id: str = ""


class Dataset:
    def __init__(self, frame, sample_rate_hz=2.0):
        if not sample_rate_hz > 0:
            raise ArgumentError(
                "The sample rate must be positive, got {}."
                .format(sample_rate_hz)
            )
        self._frame = Dataset.Utils.group_profiles(frame)
        self._sample_rate_hz = float(sample_rate_hz)

    class Utils:
        @staticmethod
        def group_profiles(frame):
            """Reorder rows so that every profile is contiguous, profiles
            appearing in order of first occurrence and rows keeping their
            relative file order.
            """
            frame = frame.reset_index(drop=True)
            if len(frame) == 0:
                return frame
            codes, _ = pd.factorize(frame[COLUMNS.PROFILE], sort=False)
            order = np.argsort(codes, kind="stable")
            return frame.iloc[order].reset_index(drop=True)

    def __len__(self):
        return len(self._frame)

    def __repr__(self):
        return "<Dataset of {} samples in {} profiles at {} Hz>".format(
            len(self), len(self.profile_ids), self._sample_rate_hz
        )

    @property
    def frame(self):
        return self._frame

    @property
    def sample_rate_hz(self):
        return self._sample_rate_hz

    @property
    def profile_ids(self) -> List[str]:
        return list(pd.unique(self._frame[COLUMNS.PROFILE]))

    @property
    def groups(self):
        """Profile id of every row."""
        return self._frame[COLUMNS.PROFILE].to_numpy()

    @property
    def inputs(self):
        return self._frame[COLUMNS.INPUTS].to_numpy(dtype=float)

    @property
    def target(self):
        return self._frame[COLUMNS.TARGET].to_numpy(dtype=float)

    def profile_slices(self) -> List[Tuple[str, int, int]]:
        """(profile id, start row, stop row) of every profile."""
        slices = []
        groups = self.groups
        start = 0
        for stop in range(1, len(groups) + 1):
            if stop == len(groups) or groups[stop] != groups[start]:
                slices.append((groups[start], start, stop))
                start = stop
        return slices

    def profile_sizes(self):
        return {pid: stop - start for pid, start, stop in self.profile_slices()}

    def hours(self):
        return len(self) / self._sample_rate_hz / 3600.0

    def select_profiles(self, profile_ids):
        wanted = set(profile_ids)
        mask = self._frame[COLUMNS.PROFILE].isin(wanted).to_numpy()
        return Dataset(self._frame[mask], self._sample_rate_hz)

    def samples(self) -> Iterator[RawSample]:
        columns = COLUMNS.INPUTS + [COLUMNS.TARGET, COLUMNS.PROFILE]
        for row in self._frame[columns].itertuples(index=False):
            yield RawSample(*row)


@dataclass
class SyntheticConfig:
    """Two-node RC network (stator, magnet) and its random excitation."""
    # Node time constants (stator, magnet), s
    rc_time_constants: Tuple[float, float] = (120.0, 300.0)
    # Conductances to ambient of (stator, magnet) and between nodes, W/K
    conductances: Tuple[float, float] = (50.0, 10.0)
    coupling_conductance: float = 2.0
    # Rows (stator, magnet) x columns (i_s^2 in A^2, |n_mech| in 1/min), W
    loss_coefficients: Tuple[Tuple[float, float], ...] = (
        (0.02, 0.05), (0.0005, 0.1)
    )
    duration_s: float = 7200.0
    n_profiles: int = 4
    idle_s: float = 600.0
    min_hold_s: float = 30.0
    max_hold_s: float = 300.0
    max_speed: float = 6000.0
    max_current: float = 250.0
    ambient_c: float = 25.0
    coolant_c: float = 25.0
    temperature_spread: float = 5.0
    sample_rate_hz: float = 2.0

    def validate(self):
        if not self.duration_s > 0:
            raise ArgumentError(
                "The synthetic duration must be positive, got {}."
                .format(self.duration_s)
            )
        if len(self.rc_time_constants) != 2 or \
                min(self.rc_time_constants) <= 0:
            raise ArgumentError(
                "Two positive RC time constants are required, got {}."
                .format(self.rc_time_constants)
            )
        if min(self.conductances) <= 0 or self.coupling_conductance < 0:
            raise ArgumentError(
                "Conductances to ambient must be positive and the coupling "
                "conductance nonnegative."
            )
        coefficients = np.asarray(self.loss_coefficients, dtype=float)
        if coefficients.shape != (2, 2) or np.any(coefficients < 0):
            raise ArgumentError(
                "Loss coefficients must be a nonnegative 2x2 table."
            )
        if self.n_profiles < 1 or not self.sample_rate_hz > 0:
            raise ArgumentError(
                "At least one profile and a positive sample rate are "
                "required."
            )
        if not 0 < self.min_hold_s <= self.max_hold_s:
            raise ArgumentError(
                "Hold durations must satisfy 0 < min_hold_s <= max_hold_s."
            )

    @property
    def capacitances(self):
        return np.asarray(self.rc_time_constants, dtype=float) * \
            np.asarray(self.conductances, dtype=float)

    @classmethod
    def from_dict(cls, args):
        try:
            return cls(**args)
        except TypeError as err:
            raise ArgumentError(
                "The synthetic configuration is not valid: {}".format(err)
            )


def load_dataset(path, sample_rate_hz=2.0) -> Dataset:
    try:
        frame = pd.read_csv(
            path,
            dtype={COLUMNS.PROFILE: str},
            float_precision="round_trip",
            encoding="utf-8",
        )
    except (IOError, OSError) as err:
        raise PmbenchError(
            "The dataset file could not be opened: {}.\n{}\n"
            .format(path, str(err))
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise ParseError(
            "There was an error during the parsing of '{}'.\n{}\n"
            .format(path, err)
        )

    for column in COLUMNS.REQUIRED:
        if column not in frame.columns:
            raise SchemaError(
                "The dataset '{}' is missing the required column '{}'."
                .format(path, column)
            )

    numeric = [c for c in COLUMNS.REQUIRED if c != COLUMNS.PROFILE]
    numeric += [c for c in COLUMNS.OPTIONAL if c in frame.columns]
    for column in numeric:
        values = pd.to_numeric(frame[column], errors="coerce")
        bad = ~np.isfinite(values.to_numpy(dtype=float))
        if bad.any():
            raise ParseError(
                "Non-numeric or missing value '{}' in column '{}' at row {}."
                .format(
                    frame[column].iloc[int(np.argmax(bad))],
                    column,
                    int(np.argmax(bad)),
                )
            )
        frame[column] = values.astype(float)

    profiles = frame[COLUMNS.PROFILE]
    empty = profiles.isna().to_numpy() | \
        (profiles.astype(str).str.strip() == "").to_numpy()
    if empty.any():
        raise ParseError(
            "Empty profile id at row {}.".format(int(np.argmax(empty)))
        )

    dataset = Dataset(frame, sample_rate_hz)
    logger.info("Loaded %r from %s", dataset, path)
    return dataset


def save_dataset(dataset, path):
    try:
        dataset.frame.to_csv(path, index=False, float_format="%.17g")
    except (IOError, OSError) as err:
        raise PmbenchError(
            "The dataset could not be written to {}.\n{}\n"
            .format(path, str(err))
        )


def split_profiles(dataset, test_profile_ids) -> Tuple[Dataset, Dataset]:
    test_ids = {str(pid) for pid in test_profile_ids}
    known = set(dataset.profile_ids)
    unknown = sorted(test_ids - known)
    if unknown:
        raise ArgumentError(
            "Unknown test profile id(s): {}.".format(", ".join(unknown))
        )
    train_ids = [pid for pid in dataset.profile_ids if pid not in test_ids]
    return (
        dataset.select_profiles(train_ids),
        dataset.select_profiles(test_ids),
    )


def simulate_network(config, losses, reference, initial=None):
    """Integrate the two-node RC network with the backward difference
    y_t = y_{t-1} + h/C * (P_t - G (y_t - y_ref,t) - G_c (y_t - y_other,t)).

    Args:
        config (SyntheticConfig): The network definition
        losses (ndarray): Injected heat, shape (n, 2), W
        reference (ndarray): Heat sink temperature per step, shape (n,)
        initial (ndarray): Node temperatures before the first step,
            defaults to the first reference value

    Returns:
        ndarray: Node temperatures (stator, magnet), shape (n, 2)
    """
    h = 1.0 / config.sample_rate_hz
    losses = np.asarray(losses, dtype=float)
    reference = np.asarray(reference, dtype=float)
    capacitance = config.capacitances
    conductance = np.asarray(config.conductances, dtype=float)
    g_c = float(config.coupling_conductance)

    system = np.diag(capacitance / h + conductance) + \
        g_c * np.array([[1.0, -1.0], [-1.0, 1.0]])
    inverse = np.linalg.inv(system)

    nodes = np.empty((len(losses), 2))
    if initial is None:
        state = np.full(2, reference[0] if len(reference) else 0.0)
    else:
        state = np.asarray(initial, dtype=float).copy()
    for t in range(len(losses)):
        rhs = capacitance / h * state + losses[t] + conductance * reference[t]
        state = inverse @ rhs
        nodes[t] = state
    return nodes


def _excitation(config, n_samples, rng):
    h = 1.0 / config.sample_rate_hz
    speed = np.zeros(n_samples)
    current = np.zeros(n_samples)
    angle = np.zeros(n_samples)
    t = int(round(config.idle_s / h))
    while t < n_samples:
        hold = int(round(rng.uniform(config.min_hold_s, config.max_hold_s) / h))
        stop = min(n_samples, t + max(hold, 1))
        speed[t:stop] = rng.uniform(0.0, config.max_speed)
        current[t:stop] = rng.uniform(0.0, config.max_current)
        angle[t:stop] = rng.uniform(0.0, np.pi / 3)
        t = stop
    return speed, current, angle


def generate_synthetic(config, seed) -> Dataset:
    config.validate()
    rng = np.random.default_rng(seed)
    coefficients = np.asarray(config.loss_coefficients, dtype=float)
    total = int(round(config.duration_s * config.sample_rate_hz))
    sizes = [total // config.n_profiles] * config.n_profiles
    sizes[-1] += total - sum(sizes)

    frames = []
    for index, size in enumerate(sizes):
        if size == 0:
            continue
        speed, current, angle = _excitation(config, size, rng)
        ambient = config.ambient_c + rng.uniform(
            -config.temperature_spread, config.temperature_spread
        )
        coolant = config.coolant_c + rng.uniform(
            -config.temperature_spread, config.temperature_spread
        )

        i_d = -current * np.sin(angle)
        i_q = current * np.cos(angle)
        omega_el = MOTOR.POLE_PAIRS * 2 * np.pi * speed / 60.0
        u_d = MOTOR.STATOR_RESISTANCE * i_d - omega_el * MOTOR.L_Q * i_q
        u_q = MOTOR.STATOR_RESISTANCE * i_q + \
            omega_el * (MOTOR.L_D * i_d + MOTOR.FLUX_LINKAGE)
        torque = 1.5 * MOTOR.POLE_PAIRS * (
            MOTOR.FLUX_LINKAGE * i_q + (MOTOR.L_D - MOTOR.L_Q) * i_d * i_q
        )

        drivers = np.column_stack([current ** 2, np.abs(speed)])
        losses = drivers @ coefficients.T
        # Both nodes dissipate into ambient, the coolant reading is a
        # side channel measured in the same drive
        reference = np.full(size, ambient)
        nodes = simulate_network(config, losses, reference)

        frames.append(pd.DataFrame({
            COLUMNS.AMBIENT: reference,
            COLUMNS.COOLANT: np.full(size, coolant),
            COLUMNS.U_D: u_d,
            COLUMNS.U_Q: u_q,
            COLUMNS.MOTOR_SPEED: speed,
            COLUMNS.I_D: i_d,
            COLUMNS.I_Q: i_q,
            COLUMNS.TARGET: nodes[:, 1],
            COLUMNS.PROFILE: "synth-{:02d}".format(index + 1),
            "torque": torque,
            "stator_winding": nodes[:, 0],
        }))

    dataset = Dataset(pd.concat(frames, ignore_index=True),
                      config.sample_rate_hz)
    logger.info("Generated synthetic %r (seed %s)", dataset, seed)
    return dataset
