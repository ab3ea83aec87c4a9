import logging

import numpy as np

from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Errors.InvalidRangeError import InvalidRangeError
from ODgen.Transfer.TinyNet import ReLU, TinyNet

logger = logging.getLogger(__name__)


def _relu_pattern(net: TinyNet) -> list:
    return [layer.x > 0 for layer in net.layers if isinstance(layer, ReLU)]


def _same_pattern(first: list, second: list) -> bool:
    return all(np.array_equal(a, b) for a, b in zip(first, second))


def gradient_errors(net: TinyNet, sample: tuple, epsilon: float = 1e-5, count: int = 200,
                    rng: np.random.Generator = None, min_grad: float = 1e-5) -> np.ndarray:
    """
    Relative errors between analytic and central finite-difference gradients of the loss.

    Weights are visited in random order until `count` of them have been checked. A weight is
    skipped when its +-epsilon perturbation changes the on/off pattern of any ReLU (the loss is
    not differentiable across that boundary) or when both the analytic and the finite-difference
    gradient are below `min_grad`. A vanishing analytic gradient against a finite difference
    above `min_grad` is checked and scores an error of 1.

    :param net: network; its weights are restored afterwards
    :param sample: (inputs, labels)
    :param epsilon: finite-difference step
    :param count: number of weights to check
    :param rng: random stream choosing the weights
    :param min_grad: weights whose gradients are both below this magnitude are skipped
    :return: array of |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8)
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise InvalidRangeError("epsilon must be within [1e-7, 1e-3], got {}".format(epsilon))
    rng = np.random.default_rng(0) if rng is None else rng
    inputs, labels = sample

    net.loss_and_gradients(inputs, labels)
    analytic = [(index, name, value, net.layers[index].grads[name].copy())
                for index, name, value in net.parameters()]
    base_pattern = _relu_pattern(net)

    candidates = [(k, flat) for k, (_, _, value, _) in enumerate(analytic) for flat in range(value.size)]
    errors = []
    for choice in rng.permutation(len(candidates)):
        if len(errors) >= count:
            break
        k, flat = candidates[choice]
        index, name, value, grads = analytic[k]
        g_a = grads.flat[flat]

        original = value.flat[flat]
        value.flat[flat] = original + epsilon
        loss_plus = net.loss(inputs, labels)
        same = _same_pattern(base_pattern, _relu_pattern(net))
        value.flat[flat] = original - epsilon
        loss_minus = net.loss(inputs, labels)
        same = same and _same_pattern(base_pattern, _relu_pattern(net))
        value.flat[flat] = original
        if not same:
            continue

        g_fd = (loss_plus - loss_minus) / (2 * epsilon)
        if max(abs(g_a), abs(g_fd)) < min_grad:
            continue
        errors.append(abs(g_a - g_fd) / max(abs(g_a), abs(g_fd), 1e-8))

    if len(errors) < count:
        logger.warning("only %d of the requested %d weights qualified for the gradient check", len(errors), count)
    logger.debug("checked %d of %d weights", len(errors), len(candidates))
    return np.array(errors)


def grad_check(net: TinyNet, sample: tuple, epsilon: float = 1e-5, count: int = 200,
               rng: np.random.Generator = None, min_grad: float = 1e-5) -> float:
    """
    Maximum relative gradient error over the checked weights.

    :raises InvalidParamError: when no weight qualified for the check
    """
    errors = gradient_errors(net, sample, epsilon, count, rng, min_grad)
    if not len(errors):
        raise InvalidParamError("count", 0, "at least one weight with a gradient above {}".format(min_grad))
    return float(errors.max())
