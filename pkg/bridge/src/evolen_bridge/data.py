"""Dataset access for the bridge.

Real benchmarks come from torchvision (cached under EVOLEN_DATA_DIR); the
synthetic dataset is generated deterministically in memory so the protocol
and build paths are testable without any downloads.
"""

from __future__ import annotations

import os

import torch

DEFAULT_DATA_DIR = os.path.join(os.path.expanduser("~"), ".cache", "evolen")


class DatasetUnavailable(RuntimeError):
    """The requested dataset is not cached and cannot be downloaded."""


class SyntheticData:
    """Deterministic random tensors for any input shape / class count.

    Labels are derived from the images (mean-intensity quantiles), so there is
    some signal to fit; accuracy stays near chance in a couple of epochs, which
    is all protocol tests need.
    """

    name = "synthetic"

    def __init__(self, samples: int = 512):
        self.samples = samples
        self._cache: dict[tuple, tuple[torch.Tensor, torch.Tensor]] = {}

    def arrays(self, input_shape: tuple[int, int, int], num_classes: int):
        key = (tuple(input_shape), num_classes)
        if key not in self._cache:
            h, w, c = input_shape
            gen = torch.Generator().manual_seed(20_24)
            x = torch.rand((self.samples, c, h, w), generator=gen)
            means = x.mean(dim=(1, 2, 3))
            edges = torch.quantile(means, torch.linspace(0, 1, num_classes + 1)[1:-1])
            y = torch.bucketize(means, edges).long()
            self._cache[key] = (x, y)
        return self._cache[key]


class TorchvisionData:
    """MNIST / Fashion-MNIST / CIFAR-10 / CIFAR-100 from the torchvision cache."""

    SHAPES = {
        "mnist": ((28, 28, 1), 10),
        "fashion_mnist": ((28, 28, 1), 10),
        "cifar10": ((32, 32, 3), 10),
        "cifar100": ((32, 32, 3), 100),
    }

    def __init__(self, name: str, root: str | None = None, download: bool = True):
        if name not in self.SHAPES:
            raise DatasetUnavailable(f"unknown dataset {name!r}; have {sorted(self.SHAPES)}")
        self.name = name
        self.root = root or os.environ.get("EVOLEN_DATA_DIR", DEFAULT_DATA_DIR)
        self.download = download
        self._arrays: tuple[torch.Tensor, torch.Tensor] | None = None

    def _load(self):
        from torchvision import datasets

        cls = {
            "mnist": datasets.MNIST,
            "fashion_mnist": datasets.FashionMNIST,
            "cifar10": datasets.CIFAR10,
            "cifar100": datasets.CIFAR100,
        }[self.name]
        try:
            ds = cls(self.root, train=True, download=self.download)
        except Exception as e:
            raise DatasetUnavailable(f"cannot load {self.name} into {self.root}: {e}") from e

        raw = torch.as_tensor(
            ds.data if isinstance(ds.data, torch.Tensor) else torch.from_numpy(ds.data)
        )
        if raw.ndim == 3:  # N,H,W grayscale -> N,1,H,W
            x = raw.unsqueeze(1).float() / 255.0
        else:  # N,H,W,C -> N,C,H,W
            x = raw.permute(0, 3, 1, 2).float() / 255.0
        y = torch.as_tensor(ds.targets).long()
        self._arrays = (x, y)

    def arrays(self, input_shape: tuple[int, int, int], num_classes: int):
        expected_shape, expected_classes = self.SHAPES[self.name]
        if tuple(input_shape) != expected_shape or num_classes != expected_classes:
            raise DatasetUnavailable(
                f"{self.name} is {expected_shape} with {expected_classes} classes; "
                f"request asked for {tuple(input_shape)} / {num_classes}"
            )
        if self._arrays is None:
            self._load()
        return self._arrays


def open_dataset(name: str, root: str | None = None, download: bool = True):
    if name == "synthetic":
        return SyntheticData()
    return TorchvisionData(name, root=root, download=download)
