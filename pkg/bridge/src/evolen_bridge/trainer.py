"""Train a built model under a requested budget and score it on a held-out
validation split: SGD with momentum, cross-entropy, no augmentation.

The validation split is the last 20% of the budget's data subset after a
seeded shuffle, so results are reproducible per request seed.
"""

from __future__ import annotations

import torch
from torch import nn

from .model import BuiltModel, build_model

VAL_FRACTION = 0.2


def train_and_score(
    model: BuiltModel,
    x: torch.Tensor,
    y: torch.Tensor,
    budget: dict,
    seed: int = 0,
) -> tuple[float, float]:
    """Returns (validation accuracy, validation loss) after `budget.epochs`
    of SGD on `budget.data_fraction` of the data."""
    epochs = int(budget.get("epochs", 5))
    fraction = float(budget.get("data_fraction", 1.0))
    batch_size = max(1, int(budget.get("batch_size", 128)))
    lr = float(budget.get("learning_rate", 1e-3))
    momentum = float(budget.get("momentum", 0.9))

    gen = torch.Generator().manual_seed(seed)
    order = torch.randperm(len(x), generator=gen)
    take = max(2, int(len(x) * fraction))
    subset = order[:take]
    split = max(1, int(len(subset) * (1 - VAL_FRACTION)))
    train_idx, val_idx = subset[:split], subset[split:]

    criterion = nn.CrossEntropyLoss()
    optimizer = torch.optim.SGD(model.parameters(), lr=lr, momentum=momentum)

    model.train()
    for epoch in range(epochs):
        epoch_order = train_idx[torch.randperm(len(train_idx), generator=gen)]
        for start in range(0, len(epoch_order), batch_size):
            batch = epoch_order[start:start + batch_size]
            if len(batch) == 1:
                continue  # a lone sample breaks batchnorm statistics
            optimizer.zero_grad()
            loss = criterion(model(x[batch]), y[batch])
            loss.backward()
            optimizer.step()

    model.eval()
    correct = 0
    loss_sum = 0.0
    with torch.no_grad():
        for start in range(0, len(val_idx), batch_size):
            batch = val_idx[start:start + batch_size]
            logits = model(x[batch])
            loss_sum += criterion(logits, y[batch]).item() * len(batch)
            correct += (logits.argmax(dim=1) == y[batch]).sum().item()
    accuracy = correct / len(val_idx)
    return accuracy, loss_sum / len(val_idx)


# A two-layer standard candidate (conv+pool, small dense head), used for the
# training smoke check.
SMOKE_GENOME = {
    "blocks": [
        {
            "kind": "feature",
            "layers": [
                {"kind": "conv", "filters": 32, "kernel": 3, "padding": "same", "stride": 1},
                {"kind": "pool", "mode": "max", "window": 2, "stride": 2},
            ],
        },
        {
            "kind": "head",
            "layers": [
                {"kind": "dense", "units": 128},
                {"kind": "dropout", "rate": 0.5},
                {"kind": "dense", "units": 10},
            ],
        },
    ]
}


def smoke_train(dataset, fraction: float = 0.05, epochs: int = 2, seed: int = 0) -> float:
    """Train the smoke candidate briefly on a sliver of the dataset and return
    its validation accuracy. Sanity check, not a benchmark."""
    expected_shape, num_classes = (
        dataset.SHAPES[dataset.name] if hasattr(dataset, "SHAPES") else ((28, 28, 1), 10)
    )
    x, y = dataset.arrays(expected_shape, num_classes)
    torch.manual_seed(seed)
    model = build_model(SMOKE_GENOME, expected_shape, num_classes)
    budget = {
        "epochs": epochs,
        "data_fraction": fraction,
        "batch_size": 128,
        "learning_rate": 1e-3,
        "momentum": 0.9,
    }
    accuracy, _ = train_and_score(model, x, y, budget, seed=seed)
    return accuracy
