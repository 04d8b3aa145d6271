from .pipeline import PipelineConfig, run_pipeline
from .registry import SiteRecord, SiteRegistry
from .store import AlertStore, NotificationRecord

__all__ = [
    "AlertStore", "NotificationRecord", "PipelineConfig", "SiteRecord",
    "SiteRegistry", "run_pipeline",
]
