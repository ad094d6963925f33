"""Layer containers with named parameters and buffers."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .core import Tensor


def kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    """Minimal module tree: parameters, buffers and a train/eval flag."""

    training = True

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, Module] = {}
        self.training = True

    def __setattr__(self, key, value):
        if isinstance(value, Module) and key != "_children":
            self.__dict__.setdefault("_children", {})[key] = value
        super().__setattr__(key, value)

    def param(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        object.__setattr__(self, name, t)
        return t

    def buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        self._buffers[name] = data
        object.__setattr__(self, name, data)
        return data

    def add(self, name: str, module: "Module") -> "Module":
        setattr(self, name, module)
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for n, p in self._params.items():
            yield prefix + n, p
        for cn, child in self._children.items():
            yield from child.named_parameters(prefix + cn + ".")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for n, b in self._buffers.items():
            yield prefix + n, b
        for cn, child in self._children.items():
            yield from child.named_buffers(prefix + cn + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def modules(self) -> Iterator["Module"]:
        yield self
        for child in self._children.values():
            yield from child.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {n: p.data for n, p in self.named_parameters()}
        state.update({n: b for n, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"state is missing {sorted(missing)[:5]}")
        for n, p in params.items():
            if state[n].shape != p.shape:
                raise ValueError(f"{n}: shape {state[n].shape} != {p.shape}")
            p.data = np.array(state[n], dtype=p.dtype)
        for n, b in buffers.items():
            b[...] = state[n]

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int | None = None, pad_mode: str = "constant",
                 bias: bool = True, dtype=np.float32):
        super().__init__()
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.pad_mode = pad_mode
        fan_in = cin * kernel * kernel
        self.param("weight", kaiming_uniform(rng, (cout, cin, kernel, kernel), fan_in, dtype))
        if bias:
            self.param("bias", np.zeros(cout, dtype=dtype))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        if self.pad_mode == "edge" and self.padding:
            return ops.conv2d(ops.pad2d(x, self.padding, "edge"), self.weight, self.bias,
                              self.stride, 0)
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class DepthwiseConv2d(Module):
    def __init__(self, channels: int, kernel: int, rng: np.random.Generator, stride: int = 1,
                 dtype=np.float32):
        super().__init__()
        self.stride = stride
        self.padding = kernel // 2
        self.param("weight", kaiming_uniform(rng, (channels, 1, kernel, kernel),
                                             kernel * kernel, dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ops.depthwise_conv2d(x, self.weight, None, self.stride, self.padding)


class Conv3d(Module):
    def __init__(self, cin: int, cout: int, kernel: tuple[int, int, int],
                 rng: np.random.Generator, padding: int = 1, dtype=np.float32):
        super().__init__()
        self.padding = padding
        fan_in = cin * int(np.prod(kernel))
        self.param("weight", kaiming_uniform(rng, (cout, cin) + tuple(kernel), fan_in, dtype))
        self.param("bias", np.zeros(cout, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv3d(x, self.weight, self.bias, self.padding)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5,
                 dtype=np.float32):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.param("weight", np.ones(channels, dtype=dtype))
        self.param("bias", np.zeros(channels, dtype=dtype))
        self.buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ops.batch_norm(x, self.weight, self.bias, self.running_mean, self.running_var,
                              self.training, self.momentum, self.eps)


class ConvBNAct(Module):
    """conv -> batch norm -> optional activation."""

    def __init__(self, cin: int, cout: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, act: str | None = "silu", pad_mode: str = "constant",
                 dtype=np.float32):
        super().__init__()
        self.conv = Conv2d(cin, cout, kernel, rng, stride=stride, pad_mode=pad_mode,
                           bias=False, dtype=dtype)
        self.bn = BatchNorm2d(cout, dtype=dtype)
        self.act = act

    def forward(self, x: Tensor) -> Tensor:
        y = self.bn(self.conv(x))
        if self.act == "silu":
            return ops.silu(y)
        if self.act == "relu":
            return ops.relu(y)
        return y
