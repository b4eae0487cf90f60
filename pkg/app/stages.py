"""
Analysis stages and the pipeline that runs them.

Each stage reads what earlier stages left in an AnalysisState and adds its
own result:

- lagrangian: Hessian sweep-out and Lagrangian constraint chain
- canonical: velocity solution, Hamiltonian, secondary chain, class split
- brackets: Poisson and M-bracket tables, class IA
- conjecture: DTR generator and PETR verdict

Stages are registered in a StageRegistry singleton so the CLI and the API
share one catalog.
"""
import logging
import time
from abc import ABC, abstractmethod
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from app.brackets import BracketContext, BracketKind, bracket_table, is_class_IA
from app.canonical import CanAnalysis, analyze_canonical
from app.conjecture import ConjectureReport, DtrGenerator, build_dtr, petr_check
from app.expr import to_text
from app.lagrangian import LagAnalysis, analyze_lagrangian
from app.linalg import Matrix
from app.models import Stage, StageOutput
from app.parser import Model

logger = logging.getLogger(__name__)

PIPELINE_ORDER = [Stage.LAGRANGIAN, Stage.CANONICAL, Stage.BRACKETS, Stage.CONJECTURE]


class AnalysisState(BaseModel):
    """
    Results accumulated while a model moves through the pipeline.

    Attributes:
        model: The parsed model
        lagrangian: Lagrangian stage result
        canonical: Canonical stage result
        context: Hessian data for the M- and EM-brackets
        poisson_table: Reduced Poisson brackets of all constraints
        m_table: Reduced M-brackets of all constraints
        class_ia: Closure under the M-bracket
        dtr: Generator used by the conjecture stage
        conjecture: PETR report
        notes: Warnings worth surfacing in reports
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: Model
    lagrangian: Optional[LagAnalysis] = None
    canonical: Optional[CanAnalysis] = None
    context: Optional[BracketContext] = None
    poisson_table: Optional[Matrix] = None
    m_table: Optional[Matrix] = None
    class_ia: Optional[bool] = None
    dtr: Optional[DtrGenerator] = None
    conjecture: Optional[ConjectureReport] = None
    notes: list[str] = Field(default_factory=list)


class AnalysisStage(ABC):
    """Interface of a pipeline stage."""

    @property
    @abstractmethod
    def stage(self) -> Stage:
        """Stage identifier."""

    @property
    @abstractmethod
    def description(self) -> str:
        """Human-readable description of what the stage does."""

    @abstractmethod
    def execute(self, state: AnalysisState) -> None:
        """
        Run the stage and store its result on ``state``.

        Raises:
            AnalyzerError: If the stage cannot complete
        """


class LagrangianStage(AnalysisStage):
    """Euler-Lagrange decomposition, sweep-out and Lagrangian constraints."""

    @property
    def stage(self) -> Stage:
        return Stage.LAGRANGIAN

    @property
    def description(self) -> str:
        return "Hessian rank, null vectors and the Lagrangian constraint chain"

    def execute(self, state: AnalysisState) -> None:
        la = analyze_lagrangian(state.model)
        for pivot in la.generic_pivots:
            state.notes.append(f"pivot {to_text(pivot)} assumed nonzero")
        if not la.terminated:
            state.notes.append(
                f"Lagrangian chain did not terminate by order {state.model.max_chain_order}"
            )
        if la.second_class_signature:
            state.notes.append("Lagrangian chain fixes some arbitrary functions")
        state.lagrangian = la


class CanonicalStage(AnalysisStage):
    """Velocity solution, Hamiltonian and constraint classification."""

    @property
    def stage(self) -> Stage:
        return Stage.CANONICAL

    @property
    def description(self) -> str:
        return "Primary and secondary constraints, Hamiltonian and class split"

    def execute(self, state: AnalysisState) -> None:
        can = analyze_canonical(state.model, state.lagrangian)
        if not can.terminated:
            state.notes.append(
                f"secondary chain did not terminate by order {state.model.max_chain_order}"
            )
        for condition in can.multiplier_conditions:
            state.notes.append(f"multiplier condition {to_text(condition)} = 0")
        state.canonical = can


class BracketStage(AnalysisStage):
    """Bracket tables of all constraints."""

    @property
    def stage(self) -> Stage:
        return Stage.BRACKETS

    @property
    def description(self) -> str:
        return "Poisson and M-bracket tables and the class IA test"

    def execute(self, state: AnalysisState) -> None:
        m, la, can = state.model, state.lagrangian, state.canonical
        ctx = BracketContext.build(m, la.M, can.uhat)
        constraints = can.all_constraints
        state.context = ctx
        state.poisson_table = bracket_table(constraints, ctx, BracketKind.POISSON)
        state.class_ia, state.m_table = is_class_IA(ctx, constraints)


class ConjectureStage(AnalysisStage):
    """DTR generator and PETR decision."""

    @property
    def stage(self) -> Stage:
        return Stage.CONJECTURE

    @property
    def description(self) -> str:
        return "Decide whether the DTR maps states to physically equivalent states"

    def execute(self, state: AnalysisState) -> None:
        state.dtr = build_dtr(state.canonical, state.model)
        state.conjecture = petr_check(
            state.dtr,
            state.canonical,
            state.context,
            state.lagrangian,
            state.model,
            class_ia=state.class_ia,
        )


class StageRegistry:
    """
    Registry and executor for analysis stages.

    Design pattern: Registry pattern
    """

    def __init__(self):
        """Initialize the registry with the built-in stages."""
        self._stages: dict[Stage, AnalysisStage] = {}
        self._register_default_stages()
        logger.info("Stage registry initialized")

    def _register_default_stages(self) -> None:
        self.register(LagrangianStage())
        self.register(CanonicalStage())
        self.register(BracketStage())
        self.register(ConjectureStage())

    def register(self, stage: AnalysisStage) -> None:
        """
        Register a stage.

        Raises:
            ValueError: If the stage is already registered
        """
        if stage.stage in self._stages:
            raise ValueError(f"Stage '{stage.stage.value}' already registered")
        self._stages[stage.stage] = stage
        logger.debug(f"Registered stage: {stage.stage.value}")

    def get_stage(self, stage: Stage) -> Optional[AnalysisStage]:
        return self._stages.get(stage)

    def list_stages(self) -> list[dict]:
        """
        Stage metadata in pipeline order.

        Example:
            >>> registry.list_stages()[0]
            {'name': 'lagrangian', 'description': '...'}
        """
        return [
            {"name": s.value, "description": self._stages[s].description}
            for s in PIPELINE_ORDER
            if s in self._stages
        ]

    def execute_stage(self, stage: Stage, state: AnalysisState) -> StageOutput:
        """
        Execute one stage and time it.

        Failures are reported in the returned StageOutput, not raised.

        Raises:
            ValueError: If the stage is not registered
        """
        implementation = self.get_stage(stage)
        if implementation is None:
            raise ValueError(f"Stage '{stage.value}' not found")

        start_time = time.perf_counter()
        try:
            implementation.execute(state)
            elapsed = (time.perf_counter() - start_time) * 1000
            logger.info(f"Stage '{stage.value}' finished for '{state.model.name}' in {elapsed:.0f} ms")
            return StageOutput(stage=stage, success=True, execution_time_ms=elapsed)
        except Exception as e:
            elapsed = (time.perf_counter() - start_time) * 1000
            logger.error(f"Stage '{stage.value}' failed for '{state.model.name}': {e}")
            return StageOutput(
                stage=stage,
                success=False,
                error_type=type(e).__name__,
                error_message=str(e),
                execution_time_ms=elapsed,
            )


class PipelineResult(BaseModel):
    """State after a pipeline run plus one output per executed stage."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    state: AnalysisState
    outputs: list[StageOutput] = Field(default_factory=list)

    @property
    def failure(self) -> Optional[StageOutput]:
        return next((o for o in self.outputs if not o.success), None)


class AnalysisPipeline:
    """Runs registered stages in order up to a requested stage."""

    def __init__(self, registry: Optional["StageRegistry"] = None):
        self.registry = registry or get_stage_registry()

    def run(self, model: Model, upto: Stage = Stage.ALL) -> PipelineResult:
        """
        Run the pipeline on a model.

        Stops at the first failing stage; later stages are not attempted.

        Args:
            model: Parsed model
            upto: Last stage to run, or Stage.ALL

        Returns:
            PipelineResult: Accumulated state and per-stage outputs
        """
        last = len(PIPELINE_ORDER) if upto == Stage.ALL else PIPELINE_ORDER.index(upto) + 1
        result = PipelineResult(state=AnalysisState(model=model))
        for stage in PIPELINE_ORDER[:last]:
            output = self.registry.execute_stage(stage, result.state)
            result.outputs.append(output)
            if not output.success:
                result.state.notes.append(f"{stage.value} stage: {output.error_message}")
                break
        return result


# Global stage registry instance
_stage_registry: Optional[StageRegistry] = None


def get_stage_registry() -> StageRegistry:
    """
    Get or initialize the global stage registry (singleton).

    Returns:
        StageRegistry: Initialized registry
    """
    global _stage_registry
    if _stage_registry is None:
        _stage_registry = StageRegistry()
    return _stage_registry


def reset_stage_registry() -> None:
    """Reset the global stage registry (primarily for testing)."""
    global _stage_registry
    _stage_registry = None
