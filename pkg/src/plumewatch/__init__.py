"""plumewatch: methane plume monitoring from multispectral satellite imagery.

Pipeline pieces: scene raster model, SWIR band-ratio retrievals, physics-based
plume simulation, a trainable UNet detector, scene scoring and flux
quantification, evaluation metrics, and an operational alert store with an
HTTP review API.
"""

__version__ = "0.1.0"

from .raster import PlumeLabel, SceneImage, load_scene, passes_clear_filter, resample_to_10m, save_scene
from .retrieval import RetrievalProduct, invert_to_concentration, mbmp, mbsp, select_reference
from .spectra import AbsorptionModel, SpectralContext, TransmittanceLUT, band_transmittance, build_toy_lut, default_spectral_context
from .simulate import BankPlume, SiteData, TrainingSampler, inject_plume, rotate_plume, wind_compatible
from .inputs import ChannelStats, assemble_input
from .detector import PlumeDetector, TrainConfig
from .analysis import DetectionRecord, co2_equivalent, connected_components, extract_mask, flux, ime, scene_score
from .evaluation import PoDCurve, ScoredScene, average_precision, confusion_metrics, fit_pod, mbmp_baseline_score, recall_by_flux, segmentation_metrics, workload_curve
from .fixtures import FixtureConfig, controlled_release_scenario, generate_site_series

__all__ = [
    "AbsorptionModel", "BankPlume", "ChannelStats", "DetectionRecord",
    "FixtureConfig", "PlumeDetector", "PlumeLabel", "PoDCurve",
    "RetrievalProduct", "SceneImage", "ScoredScene", "SiteData",
    "SpectralContext", "TrainConfig", "TrainingSampler", "TransmittanceLUT",
    "assemble_input", "average_precision", "band_transmittance",
    "build_toy_lut", "co2_equivalent", "confusion_metrics",
    "connected_components", "controlled_release_scenario",
    "default_spectral_context", "extract_mask", "fit_pod", "flux",
    "generate_site_series", "ime", "inject_plume", "invert_to_concentration",
    "load_scene", "mbmp", "mbmp_baseline_score", "mbsp",
    "passes_clear_filter", "recall_by_flux", "resample_to_10m",
    "rotate_plume", "save_scene", "scene_score", "segmentation_metrics",
    "select_reference", "wind_compatible", "workload_curve",
]
