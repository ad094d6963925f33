import numpy as np
import pytest

from cfnet import CFNet, ModelConfig
from cfnet import checkpoint as ckpt_io
from cfnet.tensor.core import Tensor
from cfnet.train import TrainConfig, load_checkpoint, make_checkpoint, restore_optimizer
from cfnet.tensor.optim import AdamW


def test_raw_roundtrip(tmp_path):
    tensors = {"a": np.arange(6, dtype=np.float32).reshape(2, 3),
               "b/c": np.array([1, -2], dtype=np.int64),
               "d": np.array(3.5)}
    path = ckpt_io.save(tmp_path / "x.ckpt", ckpt_io.Checkpoint(tensors, {"k": [1, 2]}))
    back = ckpt_io.load(path)
    assert back.meta == {"k": [1, 2]}
    for k, v in tensors.items():
        assert back.tensors[k].dtype == v.dtype
        np.testing.assert_array_equal(back.tensors[k], v)
    assert set(back.section("b")) == {"c"}


def test_bad_magic(tmp_path):
    p = tmp_path / "junk.ckpt"
    p.write_bytes(b"NOTACKPT" + bytes(32))
    with pytest.raises(ckpt_io.CheckpointError, match="magic"):
        ckpt_io.load(p)


def test_truncated(tmp_path):
    path = ckpt_io.save(tmp_path / "x.ckpt", ckpt_io.Checkpoint({"a": np.ones(100)}))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ckpt_io.CheckpointError):
        ckpt_io.load(path)


def test_model_forward_bitwise(tmp_path, rng):
    cfg = TrainConfig(width_multiplier=0.25, content_width=8)
    model = CFNet(cfg.model_config(), seed=3)
    # one training-mode pass moves the batch-norm buffers off their defaults
    x = rng.normal(size=(2, 3, 32, 32)).astype(np.float32)
    model(Tensor(x), Tensor(x[::-1].copy()))
    model.eval()
    opt = AdamW(model.named_parameters(), lr=1e-3)
    path = ckpt_io.save(tmp_path / "m.ckpt", make_checkpoint(model, opt, cfg, epoch=1))
    clone, ck = load_checkpoint(path)
    assert not clone.training
    a, b = Tensor(x), Tensor(x[::-1].copy())
    ref = model(a, b)
    out = clone(a, b)
    assert np.array_equal(ref.change_map.data, out.change_map.data)
    for r1, r2 in zip(ref.rms, out.rms):
        assert np.array_equal(r1.data, r2.data)
    assert ck.meta["epoch"] == 1
    opt2 = restore_optimizer(ck, clone)
    assert opt2.lr == opt.lr
