import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1


def mix64(value: int) -> int:
    """
    64-bit avalanche mixer (the SplitMix64 finalizer).

    :param value: any integer, reduced modulo 2^64
    :return: mixed 64-bit unsigned integer
    """
    z = value & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def substream_seed(master_seed: int, index: int) -> int:
    """
    Seed of the private random stream of sample `index`.

    :param master_seed: dataset master seed
    :param index: sample index
    :return: 64-bit seed
    """
    return mix64((master_seed & MASK64) ^ ((GOLDEN_GAMMA * (index + 1)) & MASK64))


def substream(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(substream_seed(master_seed, index))


def readonly(array) -> np.ndarray:
    """
    Copy of the given array with writes disabled.
    """
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def normalize(vector) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64)
    return vector / np.linalg.norm(vector, axis=-1, keepdims=True)
