"""
Pydantic models for reports, requests and run configuration.

These models define the contract shared by the CLI, the HTTP API and the
stage pipeline. Domain analysis objects live next to the code that builds
them; this module only holds enumerations and serializable schemas.
"""
from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Stage(str, Enum):
    """Analysis stages, in pipeline order."""
    LAGRANGIAN = "lagrangian"
    CANONICAL = "canonical"
    BRACKETS = "brackets"
    CONJECTURE = "conjecture"
    ALL = "all"


class OutputFormat(str, Enum):
    """Report output formats."""
    TEXT = "text"
    JSON = "json"


class Verdict(str, Enum):
    """Outcome of the physical-equivalence test."""
    PETR_ALL = "PETR_ALL"
    PETR_EXCEPT = "PETR_EXCEPT"
    NOT_PETR = "NOT_PETR"
    INCONCLUSIVE = "INCONCLUSIVE"


class ConstraintStatus(str, Enum):
    """Outcome of a constraint-chain candidate."""
    IDENTITY = "identity"
    NEW_CONSTRAINT = "new_constraint"
    SECOND_CLASS_SIGNATURE = "second_class_signature"
    MULTIPLIER_CONDITION = "multiplier_condition"


# ============================================================================
# Report schema
# ============================================================================

class ClassBlock(BaseModel):
    """Constraint names split by class."""
    first: list[str] = Field(default_factory=list, description="First-class constraints")
    second: list[str] = Field(default_factory=list, description="Second-class constraints")


class BracketTables(BaseModel):
    """
    Pairwise constraint brackets, reduced modulo the constraints.

    Attributes:
        poisson: Rows of Poisson brackets in constraint order
        m: Rows of M-brackets in constraint order
    """
    poisson: list[list[str]] = Field(default_factory=list, description="Poisson bracket table")
    m: list[list[str]] = Field(default_factory=list, description="M-bracket table")


class AnalysisReport(BaseModel):
    """
    Machine-readable report of one model.

    Field order is the serialized key order. Stages that did not run leave
    their fields empty or null.

    Attributes:
        model: Model name
        rank: Hessian rank
        null_count: Number of null directions
        lagrangian_constraints: [level, expression] pairs
        primaries: Primary constraints
        hamiltonian: Hamiltonian in canonical form
        secondaries: [level, expression] pairs
        class_: First/second class split, serialized as ``class``
        class_ia: Closure under the M-bracket
        brackets: Poisson and M-bracket tables
        conjecture: Verdict summary; absent entries are omitted
        notes: Generic pivots, unterminated chains and refusals
    """
    model_config = ConfigDict(populate_by_name=True)

    model: str = Field(..., description="Model name")
    rank: Optional[int] = Field(None, description="Hessian rank")
    null_count: Optional[int] = Field(None, description="Number of null directions")
    lagrangian_constraints: list[tuple[int, str]] = Field(default_factory=list)
    primaries: list[str] = Field(default_factory=list)
    hamiltonian: Optional[str] = None
    secondaries: list[tuple[int, str]] = Field(default_factory=list)
    class_: Optional[ClassBlock] = Field(None, alias="class")
    class_ia: Optional[bool] = None
    brackets: Optional[BracketTables] = None
    conjecture: Optional[dict] = Field(None, description="Verdict, witness, xi and locus")
    notes: list[str] = Field(default_factory=list)


class StageOutput(BaseModel):
    """
    Outcome of one pipeline stage.

    Attributes:
        stage: Stage that was executed
        success: Whether execution succeeded
        error_type: Exception class name if it failed
        error_message: Error description if it failed
        execution_time_ms: Time taken (milliseconds)
    """
    stage: Stage
    success: bool
    error_type: Optional[str] = None
    error_message: Optional[str] = None
    execution_time_ms: float


# ============================================================================
# Requests
# ============================================================================

class AnalyzeRequest(BaseModel):
    """
    Request body for analyzing an inline model.

    Attributes:
        source: Model file text
        stage: Last stage to run
    """
    source: str = Field(..., min_length=1, description="Model file text")
    stage: Stage = Field(default=Stage.ALL, description="Last stage to run")


class AnalyzeResponse(BaseModel):
    """Report plus per-stage timings."""
    report: dict = Field(..., description="Report in serialized key order")
    stages: list[StageOutput] = Field(default_factory=list)


class RunConfig(BaseModel):
    """
    One CLI invocation.

    Attributes:
        paths: Model files to analyze
        fmt: Output format
        max_order: Override of every model's chain bound
        degree_cap: Override of Settings.degree_cap
        stage: Last stage to run
        corpus: Analyze the bundled corpus
        out: Output directory for corpus mode
        jobs: Worker threads
    """
    paths: list[Path] = Field(default_factory=list)
    fmt: OutputFormat = OutputFormat.TEXT
    max_order: Optional[int] = Field(None, ge=1)
    degree_cap: Optional[int] = Field(None, ge=1)
    stage: Stage = Stage.ALL
    corpus: bool = False
    out: Optional[Path] = None
    jobs: int = Field(default=1, ge=1)

    @field_validator("paths")
    @classmethod
    def validate_unique(cls, v):
        """Keep the first occurrence of repeated paths."""
        return list(dict.fromkeys(v))

    @model_validator(mode="after")
    def validate_inputs(self):
        """At least one input file or corpus mode."""
        if not self.paths and not self.corpus:
            raise ValueError("no input files and corpus mode not set")
        return self
