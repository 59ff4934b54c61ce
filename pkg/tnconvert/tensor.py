"""Dense tensors with labelled modes, matricization and pairwise contraction."""

from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .errors import ArgumentError


class DenseTensor:
    """
    An immutable array of 64-bit floats whose modes carry distinct string labels.

    Data is stored row-major (last mode fastest). The underlying array is read-only,
    so instances can be shared freely between networks and threads.

    Args:
        data: Anything numpy can turn into a float64 array.
        labels: One label per mode, no duplicates.
    """

    __slots__ = ("_data", "_labels")

    def __init__(self, data, labels: Sequence[str]):
        array = np.array(data, dtype=np.float64, order="C", copy=True)
        labels = tuple(labels)
        if array.ndim != len(labels):
            raise ArgumentError(f"Tensor of order {array.ndim} needs {array.ndim} labels, got {len(labels)}.")
        if len(set(labels)) != len(labels):
            raise ArgumentError(f"Duplicate mode labels: {list(labels)}")
        if any(extent < 1 for extent in array.shape):
            raise ArgumentError(f"Every extent must be positive, got shape {array.shape}.")
        if not np.all(np.isfinite(array)):
            raise ArgumentError("Tensor entries must be finite.")
        array.setflags(write=False)
        self._data = array
        self._labels = labels

    @classmethod
    def zeros(cls, shape: Sequence[int], labels: Sequence[str]) -> "DenseTensor":
        return cls(np.zeros(tuple(shape)), labels)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def labels(self) -> Tuple[str, ...]:
        return self._labels

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    def extent(self, label: str) -> int:
        return self._data.shape[self.axis(label)]

    def axis(self, label: str) -> int:
        try:
            return self._labels.index(label)
        except ValueError:
            raise ArgumentError(f"Label {label!r} is not a mode of tensor with labels {list(self._labels)}.") from None

    def norm(self) -> float:
        return frobenius_norm(self)

    def transpose(self, labels: Sequence[str]) -> "DenseTensor":
        """Reorder modes so that they follow `labels`."""
        labels = list(labels)
        if sorted(labels) != sorted(self._labels):
            raise ArgumentError(f"Cannot transpose {list(self._labels)} to {labels}.")
        if tuple(labels) == self._labels:
            return self
        return DenseTensor(np.transpose(self._data, [self.axis(label) for label in labels]), labels)

    def relabel(self, mapping: Dict[str, str]) -> "DenseTensor":
        return DenseTensor(self._data, [mapping.get(label, label) for label in self._labels])

    def scale(self, factor: float) -> "DenseTensor":
        return DenseTensor(self._data * factor, self._labels)

    def equals(self, other: "DenseTensor") -> bool:
        """Bit-exact equality of labels, shape and entries."""
        return self._labels == other._labels and np.array_equal(self._data, other._data)

    def __repr__(self):
        dims = ", ".join(f"{label}={extent}" for label, extent in zip(self._labels, self.shape))
        return f"DenseTensor({dims})"


def _check_partition(t: DenseTensor, row_labels: Sequence[str], col_labels: Sequence[str]):
    rows, cols = list(row_labels), list(col_labels)
    everything = rows + cols
    if len(set(everything)) != len(everything):
        raise ArgumentError(f"Row labels {rows} and column labels {cols} overlap or repeat.")
    missing = set(everything) - set(t.labels)
    if missing:
        raise ArgumentError(f"Labels {sorted(missing)} are not modes of {t!r}.")
    if set(everything) != set(t.labels):
        raise ArgumentError(f"Labels {sorted(set(t.labels) - set(everything))} of {t!r} are not assigned.")


def matricize(
    t: DenseTensor,
    row_labels: Sequence[str],
    col_labels: Sequence[str],
    row_label: str = "row",
    col_label: str = "col",
) -> DenseTensor:
    """
    Reshape a tensor into a matrix, flattening row-major over the given label orders.

    Args:
        t: The tensor.
        row_labels: Modes that become the row index, slowest first.
        col_labels: Modes that become the column index, slowest first.
        row_label: Label of the resulting row mode.
        col_label: Label of the resulting column mode.

    Returns:
        A two-mode DenseTensor of shape (prod of row extents, prod of column extents).
    """
    _check_partition(t, row_labels, col_labels)
    ordered = t.transpose(list(row_labels) + list(col_labels))
    n_rows = int(np.prod([t.extent(label) for label in row_labels], dtype=np.int64))
    n_cols = int(np.prod([t.extent(label) for label in col_labels], dtype=np.int64))
    return DenseTensor(ordered.data.reshape(n_rows, n_cols), [row_label, col_label])


def tensorize(
    matrix,
    row_labels: Sequence[str],
    row_shape: Sequence[int],
    col_labels: Sequence[str],
    col_shape: Sequence[int],
) -> DenseTensor:
    """Inverse of `matricize`. Accepts a DenseTensor matrix or a raw 2d array."""
    array = matrix.data if isinstance(matrix, DenseTensor) else np.asarray(matrix, dtype=np.float64)
    if array.ndim != 2:
        raise ArgumentError(f"Expected a matrix, got an array of order {array.ndim}.")
    shape = tuple(row_shape) + tuple(col_shape)
    n_rows = int(np.prod(row_shape, dtype=np.int64))
    n_cols = int(np.prod(col_shape, dtype=np.int64))
    if (n_rows, n_cols) != array.shape:
        raise ArgumentError(f"Matrix of shape {array.shape} cannot be reshaped to {shape}.")
    return DenseTensor(array.reshape(shape), list(row_labels) + list(col_labels))


def contract(a: DenseTensor, b: DenseTensor, shared_labels: Iterable[str]) -> DenseTensor:
    """
    Sum over the shared labels of two tensors.

    The result carries the non-shared labels of `a` followed by those of `b`, each in their original order.
    """
    shared: List[str] = list(shared_labels)
    if len(set(shared)) != len(shared):
        raise ArgumentError(f"Shared labels repeat: {shared}")
    for label in shared:
        if a.extent(label) != b.extent(label):
            raise ArgumentError(
                f"Extent mismatch on {label!r}: {a.extent(label)} in first tensor, {b.extent(label)} in second."
            )
    free_a = [label for label in a.labels if label not in shared]
    free_b = [label for label in b.labels if label not in shared]
    clash = set(free_a) & set(free_b)
    if clash:
        raise ArgumentError(f"Labels {sorted(clash)} appear in both tensors but are not contracted.")
    axes = ([a.axis(label) for label in shared], [b.axis(label) for label in shared])
    return DenseTensor(np.tensordot(a.data, b.data, axes=axes), free_a + free_b)


def outer(a: DenseTensor, b: DenseTensor) -> DenseTensor:
    return contract(a, b, [])


def frobenius_norm(t: DenseTensor) -> float:
    return float(np.linalg.norm(t.data.ravel()))
