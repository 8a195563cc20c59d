"""Injectable time source.

Mock runs use a frozen clock so every persisted timestamp is identical
across runs, which is what makes artifact bytes reproducible.
"""

from __future__ import annotations

import time
from datetime import datetime, timezone


class SystemClock:
    """Real wall clock."""

    def now_iso(self) -> str:
        return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

    def monotonic(self) -> float:
        return time.monotonic()


class FixedClock:
    """Frozen clock returning one constant instant.

    Timestamps carry no information in deterministic replay runs, so a
    single constant keeps serialized artifacts byte-stable.
    """

    def __init__(self, instant: str = "2024-01-01T00:00:00Z"):
        self.instant = instant

    def now_iso(self) -> str:
        return self.instant

    def monotonic(self) -> float:
        return 0.0
