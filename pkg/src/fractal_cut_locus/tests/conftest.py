import math

import pytest

from fractal_cut_locus.algo.params import ConstructionParams


@pytest.fixture
def params() -> ConstructionParams:
    return ConstructionParams(k=3, n=3, phi=math.pi / 4, epsilon=0.1)


@pytest.fixture
def params_k2() -> ConstructionParams:
    return ConstructionParams(k=2, n=3, phi=math.pi / 4, epsilon=0.1)


@pytest.fixture
def canonical_params() -> ConstructionParams:
    return ConstructionParams.canonical_for(3)


@pytest.fixture
def demo_geometry():
    from fractal_cut_locus.algo.hull import HullGeometry

    return HullGeometry.demo(depth=0, n=2)


@pytest.fixture
def demo_surface(demo_geometry):
    from fractal_cut_locus.algo.hull import assemble_boundary

    return assemble_boundary(demo_geometry)


@pytest.fixture(scope="session")
def demo_seam():
    from fractal_cut_locus.algo.smoothing import SeamGeometry

    return SeamGeometry.from_demo(epsilon=0.1)


@pytest.fixture(scope="session")
def demo_profile(demo_seam):
    from fractal_cut_locus.algo.smoothing import smooth_profile

    return smooth_profile(demo_seam, fraction=0.5)


@pytest.fixture(scope="session")
def demo_decomposition():
    from fractal_cut_locus.algo.randers import RegionDecomposition

    return RegionDecomposition(epsilon=0.1)


@pytest.fixture(scope="session")
def demo_randers(demo_decomposition):
    from fractal_cut_locus.algo.randers import RandersMetric, single_profile_beta

    return RandersMetric(form=single_profile_beta(demo_decomposition, c=0.5, delta=0.5))
