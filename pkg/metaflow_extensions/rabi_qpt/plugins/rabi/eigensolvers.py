# pyright: strict, reportTypeCommentUsage=false, reportMissingTypeStubs=false

from __future__ import annotations

from typing import Dict, Optional, Tuple, Type

import numpy as np

from scipy.linalg import eig_banded, eigh

from metaflow.debug import debug
from metaflow.metaflow_config import RABI_ED_DENSE_MAX_DIM  # type: ignore

from .utils import InvalidParameterException


class EigenSolver:
    """
    Lowest eigenpairs of a real symmetric banded matrix given in lower banded form:
    bands[i, j] = H[j + i, j] for 0 <= i <= bandwidth.
    """

    TYPES = ["invalid"]

    _class_per_type = None  # type: Optional[Dict[str, Type[EigenSolver]]]

    @classmethod
    def _ensure_class_per_type(cls):
        if cls._class_per_type is None:
            cls._class_per_type = {t: c for c in cls.__subclasses__() for t in c.TYPES}

    @classmethod
    def get_solver(cls, solver_type: str) -> Type[EigenSolver]:
        cls._ensure_class_per_type()
        assert cls._class_per_type

        solver = cls._class_per_type.get(solver_type)
        if solver is None:
            raise InvalidParameterException(
                "Eigensolver '%s' does not exist (choose from %s)"
                % (solver_type, ", ".join(sorted(cls._class_per_type)))
            )
        return solver

    @classmethod
    def for_dimension(
        cls, dim: int, solver_type: Optional[str] = None
    ) -> EigenSolver:
        if solver_type is None:
            solver_type = "dense" if dim <= int(RABI_ED_DENSE_MAX_DIM) else "banded"
        debug.rabi_exec("Using '%s' eigensolver for dimension %d" % (solver_type, dim))
        return cls.get_solver(solver_type)()

    def solve(self, bands: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Computes the k lowest eigenvalues and their eigenvectors.

        Parameters
        ----------
        bands : np.ndarray
            Lower banded form of the matrix, shape (bandwidth + 1, dim)
        k : int
            Number of eigenpairs; clipped to the dimension

        Returns
        -------
        Tuple[np.ndarray, np.ndarray]
            Ascending eigenvalues (k,) and eigenvectors as columns (dim, k)
        """
        raise NotImplementedError()

    @staticmethod
    def _levels(bands: np.ndarray, k: int) -> int:
        if k < 1:
            raise InvalidParameterException(
                "Number of levels must be >= 1 (got %d)" % k
            )
        return min(k, bands.shape[1])


def bands_to_dense(bands: np.ndarray) -> np.ndarray:
    dim = bands.shape[1]
    mat = np.zeros((dim, dim))
    for offset in range(bands.shape[0]):
        diag = bands[offset, : dim - offset]
        mat += np.diag(diag, -offset)
        if offset:
            mat += np.diag(diag, offset)
    return mat


class DenseSolver(EigenSolver):
    TYPES = ["dense"]

    def solve(self, bands: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
        k = self._levels(bands, k)
        vals, vecs = eigh(bands_to_dense(bands), subset_by_index=[0, k - 1])
        return vals, vecs


class BandedSolver(EigenSolver):
    TYPES = ["banded"]

    def solve(self, bands: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
        k = self._levels(bands, k)
        vals, vecs = eig_banded(
            bands, lower=True, select="i", select_range=(0, k - 1)
        )
        return vals, vecs
