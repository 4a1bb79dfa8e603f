"""
Dictionary learning models.
Defines class-structured dictionaries, sparse codes, hyperparameters and fit traces.
"""

import math
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, validator, root_validator

ATOM_NORM_SLACK = 1e-9


class DictionarySet(BaseModel):
    """
    C class dictionaries of K' atoms each, stored side by side.

    atoms is the global M x K matrix D = [D_1 ... D_C] with K = C * K'.
    """

    atoms: np.ndarray
    n_classes: int = Field(..., ge=1)

    class Config:
        arbitrary_types_allowed = True

    @validator("atoms", pre=True)
    def validate_atoms(cls, v):
        v = np.array(v, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("atoms must be an M x K matrix")
        if not np.all(np.isfinite(v)):
            raise ValueError("dictionary entries must be finite")
        return v

    @root_validator(skip_on_failure=True)
    def validate_blocks(cls, values):
        if values["atoms"].shape[1] % values["n_classes"] != 0:
            raise ValueError("atom count must be a multiple of the class count")
        return values

    @classmethod
    def from_blocks(cls, blocks: List[np.ndarray]) -> "DictionarySet":
        shapes = {np.shape(b) for b in blocks}
        if len(shapes) != 1:
            raise ValueError("all class dictionaries must share the same M x K' shape")
        return cls(atoms=np.hstack(blocks), n_classes=len(blocks))

    @property
    def dim(self) -> int:
        return int(self.atoms.shape[0])

    @property
    def block_size(self) -> int:
        return int(self.atoms.shape[1] // self.n_classes)

    @property
    def n_atoms(self) -> int:
        return int(self.atoms.shape[1])

    @property
    def class_labels(self) -> List[int]:
        return list(range(1, self.n_classes + 1))

    def block_slice(self, label: int) -> slice:
        """Column range of class `label` (1-based) inside the global matrix."""
        if not 1 <= label <= self.n_classes:
            raise ValueError(f"class label {label} outside 1..{self.n_classes}")
        k = self.block_size
        return slice((label - 1) * k, label * k)

    def block(self, label: int) -> np.ndarray:
        return self.atoms[:, self.block_slice(label)]

    @property
    def blocks(self) -> List[np.ndarray]:
        return [self.block(c) for c in self.class_labels]

    @property
    def atom_block_index(self) -> np.ndarray:
        """1-based class label of every atom."""
        return np.repeat(np.arange(1, self.n_classes + 1), self.block_size)

    def atom_norms(self) -> np.ndarray:
        return np.linalg.norm(self.atoms, axis=0)

    def is_feasible(self, slack: float = ATOM_NORM_SLACK) -> bool:
        return bool(np.all(self.atom_norms() <= 1.0 + slack))


class SparseCode(BaseModel):
    """Code of one signal over the global dictionary, with solver diagnostics."""

    values: np.ndarray
    block_size: int = Field(..., ge=1)
    converged: bool = True
    sweeps: int = 0
    kkt: float = 0.0

    class Config:
        arbitrary_types_allowed = True

    @validator("values", pre=True)
    def validate_values(cls, v):
        v = np.asarray(v, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("code values must be finite")
        return v

    def block(self, label: int) -> np.ndarray:
        k = self.block_size
        return self.values[(label - 1) * k: label * k]


class CodingParams(BaseModel):
    """Weights and stopping rule of the per-signal coding problem."""

    lam: float = Field(default=0.1, ge=0, alias="lambda")
    mu: float = Field(default=1.0, ge=0)
    gamma1: float = Field(default=0.0, ge=0)
    max_sweeps: int = Field(default=1000, ge=1)
    tol: float = Field(default=1e-6, gt=0)

    class Config:
        allow_population_by_field_name = True


class HyperParams(BaseModel):
    """Weights of the supervised objective and settings of the alternating optimizer."""

    mu: float = Field(default=1.0, ge=0)
    lam: float = Field(default=0.1, ge=0, alias="lambda")
    gamma1: float = Field(default=0.1, ge=0)
    gamma2: float = Field(default=0.1, ge=0)
    atoms_per_class: int = Field(default=10, ge=1)
    iterations: int = Field(default=200, ge=1, description="Outer iterations T")
    alpha: float = Field(default=0.5, gt=0, lt=1, description="Backtracking factor")
    eta0: float = Field(default=1e-3, gt=0, description="Initial step size")
    coding_tol: float = Field(default=1e-6, gt=0)
    max_sweeps: int = Field(default=1000, ge=1)
    backtrack_cap: int = Field(default=50, ge=1)
    early_stop: bool = True
    early_stop_tol: float = Field(default=1e-7, ge=0)
    early_stop_patience: int = Field(default=5, ge=1)

    class Config:
        allow_population_by_field_name = True

    def coding_params(self, supervised: bool = True) -> CodingParams:
        """Coding parameters for training (supervised) or for encoding (plain Lasso)."""
        return CodingParams(
            lam=self.lam,
            mu=self.mu if supervised else 0.0,
            gamma1=self.gamma1 if supervised else 0.0,
            max_sweeps=self.max_sweeps,
            tol=self.coding_tol,
        )


class KsvdParams(BaseModel):
    """K-SVD initialization settings."""

    iterations: int = Field(default=10, ge=1)
    sparsity: Optional[int] = Field(default=None, ge=1, description="Max nonzeros T0 per OMP code")
    seed: int = Field(default=0, ge=0)

    def sparsity_for(self, atoms_per_class: int) -> int:
        if self.sparsity is None:
            return max(1, math.ceil(atoms_per_class / 4))
        if self.sparsity > atoms_per_class:
            raise ValueError("sparsity must not exceed the atoms per class")
        return self.sparsity


class ObjectiveBreakdown(BaseModel):
    """The five terms of the supervised objective and their weighted total."""

    J: float
    J1: float
    J2: float
    J3: float
    J4: float
    J5: float
    mu: float
    lam: float
    gamma1: float
    gamma2: float

    @property
    def recomposed(self) -> float:
        return (self.J1 + self.mu * self.J2 + self.lam * self.J3
                + self.gamma1 * self.J4 + self.gamma2 * self.J5)


class TraceRow(BaseModel):
    """One accepted outer iteration."""

    iteration: int
    objective: ObjectiveBreakdown
    step: float
    backtracks: int
    kkt_max: float


class FitTrace(BaseModel):
    """History of an alternating optimization run."""

    initial_objective: Optional[float] = None
    rows: List[TraceRow] = Field(default_factory=list)
    converged: bool = False
    stop_reason: str = "max_iterations"

    @property
    def objectives(self) -> List[float]:
        return [row.objective.J for row in self.rows]

    @property
    def steps(self) -> List[float]:
        return [row.step for row in self.rows]


class SimilaritySummary(BaseModel):
    """Diagonal-dominance reading of a class-to-class similarity matrix."""

    diagonal_mean: float
    off_diagonal_mean: float
    diagonal_dominance: float = Field(..., ge=0, le=1, description="Share of rows whose maximum is on the diagonal")
