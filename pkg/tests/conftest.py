import numpy as np
import pytest

from src.config import PipelineConfig
from src.models import ClassTaxonomy
from src.skills.classify_skill import HistogramThumbnailExtractor
from src.skills.synthesis_skill import SynthesisSkill, SyntheticSessionSpec
from src.workflow.orchestrator import PipelineResources


@pytest.fixture
def taxonomy():
    return ClassTaxonomy()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def extractor():
    return HistogramThumbnailExtractor()


@pytest.fixture
def small_session():
    """60-frame synthetic session with a fixed script over all seven classes"""
    spec = SyntheticSessionSpec(
        n_frames=60, seed=3,
        script=((0, 8), (1, 8), (2, 8), (3, 8), (4, 8), (5, 8), (6, 12)),
    )
    return SynthesisSkill().generate_synthetic_session(spec)


@pytest.fixture
def synthetic_resources(small_session, taxonomy, extractor):
    """Zero-shot resources with prototype class embeddings for the synthetic palette"""
    cfg = PipelineConfig(classifier="zero-shot")
    ce = SynthesisSkill().prototype_class_embeddings(small_session, extractor)
    return cfg, PipelineResources.from_config(cfg, taxonomy, class_embeddings=ce)
