import logging
import math
from dataclasses import dataclass

import numpy as np

from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Errors.NumericalOverflowError import NumericalOverflowError
from ODgen.Transfer.TinyNet import TinyNet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FreezeSchedule:
    """
    The first `frozen_prefix_layers` layers receive no updates; from `unfreeze_at_step` on (if set)
    every layer is trained.
    """
    name: str
    frozen_prefix_layers: int = 0
    unfreeze_at_step: int = None

    def __post_init__(self):
        if self.frozen_prefix_layers < 0:
            raise InvalidParamError("frozen_prefix_layers", self.frozen_prefix_layers, ">= 0")
        if self.unfreeze_at_step is not None and self.unfreeze_at_step < 0:
            raise InvalidParamError("unfreeze_at_step", self.unfreeze_at_step, ">= 0")

    def check(self, net: TinyNet):
        if self.frozen_prefix_layers > len(net):
            raise InvalidParamError("frozen_prefix_layers", self.frozen_prefix_layers,
                                    "<= layer count {}".format(len(net)))

    def frozen_at(self, step_index: int) -> int:
        if self.unfreeze_at_step is not None and step_index >= self.unfreeze_at_step:
            return 0
        return self.frozen_prefix_layers


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    steps: int = 400
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidParamError("learning_rate", self.learning_rate, "> 0")
        if not 0 <= self.momentum < 1:
            raise InvalidParamError("momentum", self.momentum, "within [0, 1)")
        if self.batch_size < 1:
            raise InvalidParamError("batch_size", self.batch_size, ">= 1")
        if self.steps < 0:
            raise InvalidParamError("steps", self.steps, ">= 0")


def backward_and_step(net: TinyNet, batch, labels, schedule: FreezeSchedule, config: TrainConfig,
                      step_index: int) -> float:
    """
    One momentum SGD step on the mean cross-entropy of the batch.

    Layers inside the frozen prefix at this step are not touched at all, their weights and
    momentum buffers stay bit-identical.

    :param net: network, updated in place
    :param batch: (N, H, W, C) inputs
    :param labels: (N,) class indices
    :param schedule: FreezeSchedule
    :param config: TrainConfig
    :param step_index: index of this step, decides whether the schedule has unfrozen
    :return: loss before the update
    """
    loss = net.loss_and_gradients(batch, labels)
    if not math.isfinite(loss):
        raise NumericalOverflowError(step_index, loss)

    frozen = schedule.frozen_at(step_index)
    for layer in net.layers[frozen:]:
        for name, value in layer.params.items():
            velocity = config.momentum * layer.velocity[name] - config.learning_rate * layer.grads[name]
            layer.velocity[name] = velocity
            value += velocity
    return loss


def train(net: TinyNet, images: np.ndarray, labels: np.ndarray, schedule: FreezeSchedule,
          config: TrainConfig) -> list:
    """
    Trains for config.steps minibatch steps; batches come from shuffled passes over the data.

    :return: loss of every step
    """
    schedule.check(net)
    rng = np.random.default_rng(config.seed)
    order, cursor, losses = rng.permutation(len(images)), 0, []
    for step in range(config.steps):
        if cursor + config.batch_size > len(order):
            order, cursor = rng.permutation(len(images)), 0
        chosen = order[cursor:cursor + config.batch_size]
        cursor += config.batch_size
        losses.append(backward_and_step(net, images[chosen], labels[chosen], schedule, config, step))
        if (step + 1) % 100 == 0:
            logger.debug("%s step %d loss %.4f", schedule.name, step + 1, losses[-1])
    return losses


def accuracy(net: TinyNet, images: np.ndarray, labels: np.ndarray, batch_size: int = 256) -> float:
    if not len(images):
        return 0.0
    correct = 0
    for start in range(0, len(images), batch_size):
        correct += int((net.predict(images[start:start + batch_size]) == labels[start:start + batch_size]).sum())
    return correct / len(images)
