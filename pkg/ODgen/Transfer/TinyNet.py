import copy
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Errors.ShapeMismatchError import ShapeMismatchError


class Layer:
    """
    Base of the network layers. Inputs are float64 batches in (N, H, W, C) layout, or (N, D)
    after pooling. Parameters live in `params`, their gradients in `grads` after backward and
    the momentum buffers in `velocity`.
    """
    kind = None
    cache = ()

    def __init__(self):
        self.params = dict()
        self.grads = dict()
        self.velocity = dict()

    def __str__(self):
        return self.kind

    def __repr__(self):
        return str(self)

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def initialize(self, rng: np.random.Generator):
        for name, value in self.params.items():
            self.velocity[name] = np.zeros_like(value)

    def clone(self) -> 'Layer':
        """
        Copy with the same weights, zero momentum and no cached activations.
        """
        other = copy.copy(self)
        other.params = {name: value.copy() for name, value in self.params.items()}
        other.grads = dict()
        other.velocity = {name: np.zeros_like(value) for name, value in self.params.items()}
        for attribute in self.cache:
            setattr(other, attribute, None)
        return other


class Conv2D(Layer):
    kind = 'conv'
    cache = ('windows', 'input_shape')

    def __init__(self, kernel: int, in_channels: int, out_channels: int, stride: int = 1):
        super(Conv2D, self).__init__()
        if kernel < 1 or stride < 1 or in_channels < 1 or out_channels < 1:
            raise InvalidParamError("conv", (kernel, in_channels, out_channels, stride), "positive sizes")
        self.kernel = kernel
        self.stride = stride
        self.params['W'] = np.zeros((kernel, kernel, in_channels, out_channels))
        self.params['b'] = np.zeros(out_channels)
        self.windows = None
        self.input_shape = None

    def __str__(self):
        _, _, cin, cout = self.params['W'].shape
        return "conv({0}x{0}, {1}->{2}, s{3})".format(self.kernel, cin, cout, self.stride)

    def output_shape(self, shape: tuple) -> tuple:
        height, width, channels = shape
        if channels != self.params['W'].shape[2] or height < self.kernel or width < self.kernel:
            raise ShapeMismatchError((None, None, self.params['W'].shape[2]), shape)
        return ((height - self.kernel) // self.stride + 1, (width - self.kernel) // self.stride + 1,
                self.params['W'].shape[3])

    def initialize(self, rng: np.random.Generator):
        fan_in = self.kernel * self.kernel * self.params['W'].shape[2]
        self.params['W'] = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=self.params['W'].shape)
        self.params['b'] = np.zeros_like(self.params['b'])
        super(Conv2D, self).initialize(rng)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.input_shape = x.shape
        # (N, Ho, Wo, C, k, k)
        self.windows = sliding_window_view(x, (self.kernel, self.kernel), axis=(1, 2))[:, ::self.stride,
                                                                                       ::self.stride]
        return np.tensordot(self.windows, self.params['W'], axes=([3, 4, 5], [2, 0, 1])) + self.params['b']

    def backward(self, grad: np.ndarray) -> np.ndarray:
        weights = self.params['W']
        self.grads['W'] = np.tensordot(self.windows, grad, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
        self.grads['b'] = grad.sum(axis=(0, 1, 2))

        dx = np.zeros(self.input_shape)
        out_h, out_w = grad.shape[1:3]
        s = self.stride
        for i in range(self.kernel):
            for j in range(self.kernel):
                dx[:, i:i + s * (out_h - 1) + 1:s, j:j + s * (out_w - 1) + 1:s, :] += grad @ weights[i, j].T
        return dx

    def operator_norm_bound(self) -> float:
        """
        Upper bound of the spectral norm of the (bias-free) convolution as a linear map.
        """
        _, _, cin, cout = self.params['W'].shape
        matrix = self.params['W'].reshape(-1, cout)
        overlap = math.ceil(self.kernel / self.stride) ** 2
        return math.sqrt(overlap) * float(np.linalg.norm(matrix, 2))


class ReLU(Layer):
    kind = 'relu'
    cache = ('x',)

    def __init__(self):
        super(ReLU, self).__init__()
        self.x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        return np.maximum(x, 0.0)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return np.where(self.x > 0, grad, 0.0)


class GlobalAvgPool(Layer):
    kind = 'gap'
    cache = ('input_shape',)

    def __init__(self):
        super(GlobalAvgPool, self).__init__()
        self.input_shape = None

    def output_shape(self, shape: tuple) -> tuple:
        return (shape[-1],)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.input_shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, grad: np.ndarray) -> np.ndarray:
        n, height, width, channels = self.input_shape
        return np.broadcast_to(grad[:, None, None, :] / (height * width), self.input_shape).copy()


class Linear(Layer):
    kind = 'linear'
    cache = ('x',)

    def __init__(self, in_features: int, out_features: int):
        super(Linear, self).__init__()
        if in_features < 1 or out_features < 1:
            raise InvalidParamError("linear", (in_features, out_features), "positive sizes")
        self.params['W'] = np.zeros((in_features, out_features))
        self.params['b'] = np.zeros(out_features)
        self.x = None

    def __str__(self):
        return "linear({}->{})".format(*self.params['W'].shape)

    def output_shape(self, shape: tuple) -> tuple:
        if shape != (self.params['W'].shape[0],):
            raise ShapeMismatchError((self.params['W'].shape[0],), shape)
        return (self.params['W'].shape[1],)

    def initialize(self, rng: np.random.Generator):
        limit = 1.0 / math.sqrt(self.params['W'].shape[0])
        self.params['W'] = rng.uniform(-limit, limit, size=self.params['W'].shape)
        self.params['b'] = np.zeros_like(self.params['b'])
        super(Linear, self).initialize(rng)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        return x @ self.params['W'] + self.params['b']

    def backward(self, grad: np.ndarray) -> np.ndarray:
        self.grads['W'] = self.x.T @ grad
        self.grads['b'] = grad.sum(axis=0)
        return grad @ self.params['W'].T


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple:
    """
    Mean softmax cross-entropy and its gradient with respect to the logits.
    """
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -float(log_probs[np.arange(n), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


class TinyNet:
    def __init__(self, layers: list, feature_cut: int, input_shape: tuple = (64, 64, 3)):
        """
        Sequential network. Layers before `feature_cut` form the feature extractor, the rest is the head.

        :param layers: list of Layer
        :param feature_cut: index of the first head layer
        :param input_shape: (H, W, C) of one input image
        """
        if not 0 <= feature_cut <= len(layers):
            raise InvalidParamError("feature_cut", feature_cut, "within [0, {}]".format(len(layers)))
        self.layers = layers
        self.feature_cut = feature_cut
        self.input_shape = tuple(input_shape)
        self.shapes = [self.input_shape]
        for layer in layers:
            self.shapes.append(layer.output_shape(self.shapes[-1]))

    def __str__(self):
        return "-".join(map(str, self.layers))

    def __repr__(self):
        return "TinyNet({}, feature_cut={})".format(self, self.feature_cut)

    def __len__(self):
        return len(self.layers)

    @property
    def classes(self) -> int:
        return self.shapes[-1][0]

    @staticmethod
    def default(classes: int, rng: np.random.Generator, input_size: int = 64, channels: tuple = (8, 16)) -> 'TinyNet':
        """
        conv(5x5, 3->c1, s2) - relu - conv(3x3, c1->c2, s2) - relu - gap - linear(c2->classes),
        with the feature extractor ending at the pooling layer.
        """
        c1, c2 = channels
        net = TinyNet([Conv2D(5, 3, c1, 2), ReLU(), Conv2D(3, c1, c2, 2), ReLU(), GlobalAvgPool(),
                       Linear(c2, classes)], feature_cut=5, input_shape=(input_size, input_size, 3))
        net.initialize(rng)
        return net

    def initialize(self, rng: np.random.Generator, start: int = 0):
        for layer in self.layers[start:]:
            layer.initialize(rng)

    def reinitialize_head(self, rng: np.random.Generator):
        self.initialize(rng, self.feature_cut)

    def copy(self) -> 'TinyNet':
        return TinyNet([layer.clone() for layer in self.layers], self.feature_cut, self.input_shape)

    def snapshot(self) -> list:
        return [{name: value.copy() for name, value in layer.params.items()} for layer in self.layers]

    def parameters(self):
        for index, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield index, name, value

    def _batch(self, x) -> tuple:
        x = np.asarray(x, dtype=np.float64)
        single = x.shape == self.input_shape
        if single:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatchError(self.input_shape, x.shape[1:] if x.ndim == 4 else x.shape)
        return x, single

    def forward(self, x, upto: int = None) -> np.ndarray:
        """
        Activations after the first `upto` layers; the full network yields logits.

        :param x: one image (H, W, C) or a batch (N, H, W, C), values in [0, 1]
        :param upto: number of layers to evaluate, feature_cut gives the feature vector
        :return: activations with the batch axis only if a batch was given
        """
        x, single = self._batch(x)
        upto = len(self.layers) if upto is None else upto
        if not 0 <= upto <= len(self.layers):
            raise InvalidParamError("upto", upto, "within [0, {}]".format(len(self.layers)))
        for layer in self.layers[:upto]:
            x = layer.forward(x)
        return x[0] if single else x

    def features(self, x) -> np.ndarray:
        return self.forward(x, self.feature_cut)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def loss_and_gradients(self, batch, labels) -> float:
        """
        Mean cross-entropy of the batch; fills `grads` of every layer.
        """
        logits = self.forward(batch)
        if logits.ndim == 1:
            logits = logits[None]
        loss, grad = cross_entropy(logits, np.atleast_1d(np.asarray(labels)))
        self.backward(grad)
        return loss

    def loss(self, batch, labels) -> float:
        logits = self.forward(batch)
        if logits.ndim == 1:
            logits = logits[None]
        return cross_entropy(logits, np.atleast_1d(np.asarray(labels)))[0]

    def predict(self, batch) -> np.ndarray:
        return np.argmax(self.forward(batch), axis=-1)

    def lipschitz_bound(self, upto: int = None) -> float:
        """
        Upper bound L with |f(x) - f(y)| <= L |x - y| for the first `upto` layers (Euclidean norms
        per image), from operator norms of the convolutions and linear layers.
        """
        upto = self.feature_cut if upto is None else upto
        bound = 1.0
        for layer, shape in zip(self.layers[:upto], self.shapes[:upto]):
            if isinstance(layer, Conv2D):
                bound *= layer.operator_norm_bound()
            elif isinstance(layer, Linear):
                bound *= float(np.linalg.norm(layer.params['W'], 2))
            elif isinstance(layer, GlobalAvgPool):
                bound /= math.sqrt(shape[0] * shape[1])
        return bound


def to_input(images) -> np.ndarray:
    """
    uint8 images scaled to float64 values in [0, 1].
    """
    return np.asarray(images, dtype=np.float64) / 255.0
