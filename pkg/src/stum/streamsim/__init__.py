"""Synthetic multimodal world: view rings, fixation streams and spoken-name spectrograms."""

from .categories import (
    ANGLES,
    N_BANDS,
    NOISE_FLOOR,
    BandTrajectory,
    CategorySpec,
    make_categories,
    make_category,
    name_length,
    render_ring,
    render_view,
    synth_spectrogram,
)
from .splits import CategorySplit, ViewRing, split_views_and_variants
from .stream import (
    BLANK,
    Fixation,
    MultimodalStream,
    ObservedStream,
    Placement,
    StreamConfig,
    World,
    build_world,
    generate_stream,
)

__all__ = [
    "ANGLES", "BLANK", "N_BANDS", "NOISE_FLOOR", "BandTrajectory", "CategorySpec", "CategorySplit", "Fixation",
    "MultimodalStream", "ObservedStream", "Placement", "StreamConfig", "ViewRing", "World", "build_world",
    "generate_stream", "make_categories", "make_category", "name_length", "render_ring", "render_view",
    "split_views_and_variants", "synth_spectrogram",
]
