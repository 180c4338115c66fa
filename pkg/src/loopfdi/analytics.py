"""Per-sensor rolling buffers and batch statistical/spectral metrics.

A buffer retains up to `capacity` closed batches of raw samples.  Mean, std
and their batch-to-batch rates are fixed when a batch closes; the spectral KL
divergence is evaluated against the reference spectrum (the oldest retained
batch) at query time, so it follows eviction as the reference moves.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import BinMismatch, EmptyBuffer, OutOfOrderSample, TooFewSamples

MIN_SPECTRUM_SAMPLES = 8
KL_EPS = 1e-9


def power_spectrum(samples: np.ndarray) -> np.ndarray:
    """Detrended periodogram with the zero-frequency bin dropped."""
    x = np.asarray(samples, dtype=float)
    if x.size < MIN_SPECTRUM_SAMPLES:
        raise TooFewSamples(f"need >= {MIN_SPECTRUM_SAMPLES} samples, got {x.size}")
    x = x - x.mean()
    power = np.abs(np.fft.rfft(x)) ** 2
    return power[1:]


def spectral_entropy(samples: np.ndarray) -> float:
    """Entropy (nats) of the normalized periodogram; all-zero spectrum -> 0."""
    return kernels.entropy_from_power(power_spectrum(samples))


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats after eps-smoothing and renormalization of both."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise BinMismatch(f"distribution bins differ: {p.shape} vs {q.shape}")
    return kernels.kl_smoothed(p, q, KL_EPS)


@dataclass
class BatchMetrics:
    batch_index: int
    mean: float
    std: float
    d_mean: float
    d_std: float
    spectral_entropy: float
    kl_divergence: float

    def to_dict(self) -> dict:
        return {
            "batch_index": self.batch_index,
            "mean": self.mean,
            "std": self.std,
            "d_mean": self.d_mean,
            "d_std": self.d_std,
            "spectral_entropy": self.spectral_entropy,
            "kl_divergence": self.kl_divergence,
        }


@dataclass
class _ClosedBatch:
    index: int
    samples: np.ndarray
    mean: float
    std: float
    d_mean: float
    d_std: float
    entropy: float
    spectrum: np.ndarray


class SensorBuffer:
    """Ring of closed sample batches for one sensor; single writer."""

    def __init__(self, sensor_id: str, batch_len: int = 30, capacity: int = 20):
        self.sensor_id = sensor_id
        self.batch_len = batch_len
        self.capacity = capacity
        self._batches: deque[_ClosedBatch] = deque()
        self._open: list[float] = []
        self._last_time = -np.inf
        self._next_index = 1
        self._prev_mean: float | None = None
        self._prev_std: float | None = None

    def __len__(self) -> int:
        return len(self._batches)

    @property
    def batch_indices(self) -> list[int]:
        return [b.index for b in self._batches]

    def push_sample(self, time_s: float, value: float) -> bool:
        """Append one sample; returns True when this sample closed a batch."""
        if time_s < self._last_time:
            raise OutOfOrderSample(
                f"{self.sensor_id}: sample at {time_s} precedes {self._last_time}"
            )
        self._last_time = time_s
        self._open.append(float(value))
        if len(self._open) < self.batch_len:
            return False
        self._close_batch(np.array(self._open))
        self._open = []
        return True

    def _close_batch(self, samples: np.ndarray) -> None:
        mean, std = kernels.batch_mean_std(samples)
        d_mean = 0.0 if self._prev_mean is None else mean - self._prev_mean
        d_std = 0.0 if self._prev_std is None else std - self._prev_std
        spectrum = power_spectrum(samples)
        self._batches.append(
            _ClosedBatch(
                self._next_index,
                samples,
                mean,
                std,
                d_mean,
                d_std,
                kernels.entropy_from_power(spectrum),
                spectrum,
            )
        )
        self._prev_mean, self._prev_std = mean, std
        self._next_index += 1
        while len(self._batches) > self.capacity:
            self._batches.popleft()

    def batch_metrics(self) -> list[BatchMetrics]:
        """Metrics for every retained batch, KL taken against the reference.

        The reference is the first closed batch while retained; once evicted,
        the oldest retained batch takes over (its own KL is then 0).
        """
        if not self._batches:
            raise EmptyBuffer(f"{self.sensor_id}: no closed batch")
        reference = self._batches[0].spectrum
        return [
            BatchMetrics(
                b.index,
                b.mean,
                b.std,
                b.d_mean,
                b.d_std,
                b.entropy,
                kl_divergence(b.spectrum, reference),
            )
            for b in self._batches
        ]


class AnalyticsBank:
    """One SensorBuffer per physical sensor, fed by the ingestion path."""

    def __init__(self, sensor_ids: list[str], batch_len: int = 30, capacity: int = 20):
        self.buffers = {sid: SensorBuffer(sid, batch_len, capacity) for sid in sensor_ids}

    def push(self, time_s: float, values: dict[str, float]) -> None:
        for sid, buf in self.buffers.items():
            if sid in values:
                buf.push_sample(time_s, values[sid])

    def metrics_table(self, sensor_id: str) -> list[BatchMetrics]:
        return self.buffers[sensor_id].batch_metrics()
