import numpy as np
import pytest

from cfnet import CFNet, ModelConfig
from cfnet.tensor import backward
from cfnet.tensor.core import Tensor
from cfnet.tensor.gradcheck import relative_error

TINY = ModelConfig(width_multiplier=0.125, content_width=4, cbam_reduction=2, dtype="float64")


def _loss(model, a, b, gt):
    out = model(Tensor(a), Tensor(b))
    return model.loss(out, gt, np.random.default_rng(0), 1.0, 0.3, 0.7)


def test_forward_shapes():
    model = CFNet(ModelConfig(), seed=0)
    x = Tensor(np.zeros((2, 3, 64, 64), np.float32))
    out = model(x, x)
    assert out.change_map.shape == (2, 1, 64, 64)
    assert [r.shape[2:] for r in out.rms] == [(32, 32), (16, 16), (8, 8), (4, 4)]
    assert out.change_map.dtype == np.float32


def test_decoders_have_separate_storage():
    model = CFNet(ModelConfig(), seed=0)
    pa = dict(model.content_a.named_parameters())
    pb = dict(model.content_b.named_parameters())
    assert pa.keys() == pb.keys()
    assert all(not np.shares_memory(pa[k].data, pb[k].data) for k in pa)


@pytest.mark.parametrize("module", ["encoder", "content_a", "content_b", "change"])
def test_end_to_end_gradients(module, rng):
    """Finite differences through the whole network for a few entries of every parameter."""
    model = CFNet(TINY, seed=1)
    a = rng.uniform(-1, 1, size=(2, 3, 32, 32))
    b = rng.uniform(-1, 1, size=(2, 3, 32, 32))
    gt = (rng.uniform(size=(2, 1, 32, 32)) > 0.8).astype(np.float64)
    bundle = _loss(model, a, b, gt)
    backward(bundle.total)
    params = dict(getattr(model, module).named_parameters())
    h = 1e-5
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        for idx in rng.choice(flat.size, size=min(2, flat.size), replace=False):
            old = flat[idx]
            flat[idx] = old + h
            up = float(_loss(model, a, b, gt).total.data)
            flat[idx] = old - h
            down = float(_loss(model, a, b, gt).total.data)
            flat[idx] = old
            num = (up - down) / (2 * h)
            worst = max(worst, relative_error(np.array([p.grad.reshape(-1)[idx]]), np.array([num])))
    assert worst <= 1e-4
