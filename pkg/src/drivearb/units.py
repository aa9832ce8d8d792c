"""Unit helpers.

Everything inside the library is SI: meters, seconds, m/s, m/s^2.
Speeds quoted in km/h (lane limits, cost penalties) are converted once
at configuration load time.
"""

KMH = 3.6


def kmh_to_ms(value: float) -> float:
    return value / KMH


def ms_to_kmh(value: float) -> float:
    return value * KMH
