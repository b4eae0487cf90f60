"""
Command-line front end.

Usage:
    analyze data/corpus/cawley.model --json
    analyze --corpus --out reports --jobs 4
    analyze model.model --stage canonical --max-order 3

Exit codes: 0 on success, 1 when the analysis itself fails (second-class
constraints, inconclusive verdict, unterminated chain), 2 on usage, parse
or I/O errors.
"""
import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, TextIO

from pydantic import ValidationError

from app.core.config import get_settings
from app.core.exceptions import ModelError
from app.models import AnalysisReport, OutputFormat, RunConfig, Stage, Verdict
from app.parser import Model, parse_model
from app.report import build_report, render_text
from app.stages import AnalysisPipeline, PipelineResult

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ANALYSIS = 1
EXIT_USAGE = 2


def emit_json(report: AnalysisReport) -> bytes:
    """Serialize a report with its fixed key order."""
    return report.model_dump_json(by_alias=True).encode("utf-8")


def load_model(path: Path) -> Model:
    """
    Read and parse a model file.

    Raises:
        OSError: If the file cannot be read
        ModelError: If the file is not a valid model
    """
    return parse_model(Path(path).read_text(encoding="utf-8"))


@contextmanager
def _degree_cap(cap: Optional[int]) -> Iterator[None]:
    if cap is None:
        yield
        return
    previous = os.environ.get("DEGREE_CAP")
    os.environ["DEGREE_CAP"] = str(cap)
    get_settings.cache_clear()
    try:
        yield
    finally:
        if previous is None:
            os.environ.pop("DEGREE_CAP", None)
        else:
            os.environ["DEGREE_CAP"] = previous
        get_settings.cache_clear()


def _inputs(cfg: RunConfig) -> list[Path]:
    paths = list(cfg.paths)
    if cfg.corpus:
        corpus = sorted(get_settings().corpus_path.glob("*.model"))
        paths = [*corpus, *(p for p in paths if p not in corpus)]
    return paths


def _failed(result: PipelineResult) -> bool:
    state = result.state
    if result.failure is not None:
        return True
    if state.lagrangian is not None and not state.lagrangian.terminated:
        return True
    if state.canonical is not None and not state.canonical.terminated:
        return True
    return state.conjecture is not None and state.conjecture.verdict == Verdict.INCONCLUSIVE


def _render(result: PipelineResult, fmt: OutputFormat) -> str:
    if fmt == OutputFormat.JSON:
        return emit_json(build_report(result)).decode("utf-8")
    return render_text(result)


def _write_report(out: Path, name: str, text: str, fmt: OutputFormat) -> Path:
    out = out.resolve()
    suffix = "json" if fmt == OutputFormat.JSON else "txt"
    target = (out / f"{Path(name).name}.{suffix}").resolve()
    if target.parent != out:
        raise OSError(f"refusing to write outside {out}: {target}")
    out.mkdir(parents=True, exist_ok=True)
    target.write_text(text + "\n", encoding="utf-8")
    return target


def run(cfg: RunConfig, stdout: Optional[TextIO] = None) -> int:
    """
    Analyze every input and print or write one report per model.

    Models are analyzed concurrently with ``cfg.jobs`` threads; reports
    keep input order.

    Returns:
        int: Exit code
    """
    stdout = stdout or sys.stdout
    with _degree_cap(cfg.degree_cap):
        models: list[Model] = []
        for path in _inputs(cfg):
            try:
                model = load_model(path)
            except OSError as e:
                logger.error(f"Cannot read {path}: {e}")
                return EXIT_USAGE
            except ModelError as e:
                logger.error(f"{path}: {e}")
                return EXIT_USAGE
            if cfg.max_order is not None:
                model = model.model_copy(update={"max_chain_order": cfg.max_order})
            models.append(model)

        pipeline = AnalysisPipeline()
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(lambda m: pipeline.run(m, cfg.stage), models))

    code = EXIT_OK
    out = cfg.out or get_settings().output_dir
    for result in results:
        text = _render(result, cfg.fmt)
        if cfg.corpus:
            try:
                target = _write_report(out, result.state.model.name, text, cfg.fmt)
            except OSError as e:
                logger.error(f"Cannot write report: {e}")
                return EXIT_USAGE
            verdict = result.state.conjecture.verdict.value if result.state.conjecture else "-"
            stdout.write(f"{result.state.model.name}: {verdict} -> {target}\n")
        else:
            stdout.write(text + "\n")
        if _failed(result):
            code = EXIT_ANALYSIS
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="analyze",
        description="Dirac-Bergmann constraint analysis and PETR test for gauge Lagrangians",
    )
    parser.add_argument("files", nargs="*", type=Path, help="Model files")
    parser.add_argument("--corpus", action="store_true", help="Analyze the bundled corpus")
    parser.add_argument("--json", action="store_true", help="Emit JSON reports")
    parser.add_argument(
        "--stage",
        choices=[s.value for s in Stage],
        default=Stage.ALL.value,
        help="Last stage to run",
    )
    parser.add_argument("--max-order", type=int, default=None, help="Chain order bound")
    parser.add_argument("--degree-cap", type=int, default=None, help="Total-degree cap")
    parser.add_argument("--out", type=Path, default=None, help="Report directory for --corpus")
    parser.add_argument("--jobs", type=int, default=1, help="Models analyzed concurrently")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """Console entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    try:
        cfg = RunConfig(
            paths=args.files,
            fmt=OutputFormat.JSON if args.json else OutputFormat.TEXT,
            max_order=args.max_order,
            degree_cap=args.degree_cap,
            stage=Stage(args.stage),
            corpus=args.corpus,
            out=args.out,
            jobs=args.jobs,
        )
    except ValidationError as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"analyze: {e.errors()[0]['msg']}\n")
        return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
