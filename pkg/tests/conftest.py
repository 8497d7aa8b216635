import numpy as np
import pytest

from kgnav.nn import layers
from kgnav.scene_sim import GeneratorConfig, generate_scene, load_scene

TINY_SCENE = """\
kgnav-scene 1
width 3
height 3
grid_step 0.5
seed 0
vocab Fridge Apple Mug
object id=0 cat=2 cell=2,0 level=counter openable=0 pickupable=1 blocks=0
target object=0
"""

# a receptacle on the east wall with an apple inside, a mug on the floor
ROOM_SCENE = """\
kgnav-scene 1
width 6
height 6
grid_step 0.5
seed 3
vocab Fridge Apple Mug Chair
wall 2 2
wall 2 3
object id=0 cat=0 cell=5,2 level=counter openable=1 pickupable=0 blocks=1
object id=1 cat=1 in=0 level=counter openable=0 pickupable=1 blocks=0
object id=2 cat=2 cell=0,5 level=floor openable=0 pickupable=1 blocks=0
object id=3 cat=3 cell=4,5 level=counter openable=0 pickupable=0 blocks=1
target object=1
target object=2
"""


@pytest.fixture(scope="session")
def tiny_scene():
    return load_scene(TINY_SCENE)


@pytest.fixture(scope="session")
def room_scene():
    return load_scene(ROOM_SCENE)


@pytest.fixture(scope="session")
def scene6():
    return generate_scene(0)


@pytest.fixture(scope="session")
def scene8():
    return generate_scene(1, GeneratorConfig(width=8, height=8, n_walls=3))


@pytest.fixture
def checked():
    layers.set_checked(True)
    yield
    layers.set_checked(False)


def rel_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    den = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def numeric_grad(f, x, eps=1e-6):
    """Central differences of scalar f() w.r.t. array x (perturbed in place)."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


# filled by tests/test_acceptance.py, one line per criterion
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
