import subriemann
from subriemann import core

def test_init():
    assert subriemann.__version__ == "0.1.0"
    assert issubclass(core.UsageError, subriemann.SubRiemannError)
