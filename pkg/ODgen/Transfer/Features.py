from dataclasses import dataclass

import numpy as np

from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Errors.ShapeMismatchError import ShapeMismatchError
from ODgen.Transfer.TinyNet import TinyNet, to_input


@dataclass
class FeatureHistogram:
    edges: np.ndarray
    counts: np.ndarray
    distances: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.distances.mean())

    @property
    def median(self) -> float:
        return float(np.median(self.distances))

    def to_dict(self) -> dict:
        return {'edges': self.edges.tolist(), 'counts': self.counts.tolist(), 'mean': self.mean,
                'median': self.median, 'distances': self.distances.tolist()}


def pair_distances(pairs: list, net: TinyNet) -> np.ndarray:
    """
    Euclidean distance between the extractor features of the two images of every pair.

    :param pairs: list of (image_a, image_b), uint8 (H, W, 3)
    :param net: network whose first feature_cut layers are evaluated
    :return: (len(pairs),) distances
    """
    if not pairs:
        raise InvalidParamError("pairs", [], "at least one pair")
    first = np.stack([a for a, _ in pairs])
    second = np.stack([b for _, b in pairs])
    if first.shape != second.shape:
        raise ShapeMismatchError(first.shape, second.shape)
    features_a = net.features(to_input(first))
    features_b = net.features(to_input(second))
    return np.linalg.norm(features_a - features_b, axis=1)


def feature_distance_histogram(pairs: list, net: TinyNet, bins: int = 20, bin_range: tuple = None) -> FeatureHistogram:
    """
    Histogram of feature distances between paired images.

    :param pairs: list of (image_a, image_b)
    :param net: feature extractor
    :param bins: number of bins
    :param bin_range: (lo, hi) of the bins, defaults to (0, largest distance) so that zero
        distances always land in the first bin
    :return: FeatureHistogram
    """
    distances = pair_distances(pairs, net)
    if bin_range is None:
        top = float(distances.max())
        bin_range = (0.0, top if top > 0 else 1.0)
    counts, edges = np.histogram(distances, bins=bins, range=bin_range)
    return FeatureHistogram(edges, counts, distances)
