"""Monitored-site registry."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import NotFoundError


@dataclass(frozen=True)
class SiteRecord:
    site_id: str
    name: str
    country: str
    latitude: float
    longitude: float
    facility_type: str = "unknown"
    operator: str | None = None
    offshore: bool = False

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range")


class SiteRegistry:
    def __init__(self, sites: list[SiteRecord]):
        self._sites: dict[str, SiteRecord] = {}
        for site in sites:
            if site.site_id in self._sites:
                raise ValueError(f"duplicate site_id {site.site_id!r}")
            self._sites[site.site_id] = site

    def get(self, site_id: str) -> SiteRecord:
        try:
            return self._sites[site_id]
        except KeyError:
            raise NotFoundError(f"unknown site {site_id!r}") from None

    def __contains__(self, site_id: str) -> bool:
        return site_id in self._sites

    def __iter__(self):
        return iter(sorted(self._sites.values(), key=lambda s: s.site_id))

    def __len__(self) -> int:
        return len(self._sites)

    @staticmethod
    def from_json(path) -> "SiteRegistry":
        entries = json.loads(Path(path).read_text())
        return SiteRegistry([SiteRecord(**e) for e in entries])

    def to_json(self, path) -> None:
        Path(path).write_text(
            json.dumps([dict(s.__dict__) for s in self], indent=2)
        )
