"""CLI runner to execute a case pipeline."""
from __future__ import annotations

import argparse
import importlib
import logging
import sys

logger = logging.getLogger(__name__)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Run a case pipeline")
    parser.add_argument("--case", required=True, help="case name (folder under cases)")
    parser.add_argument("--seed", type=int, default=None, help="override the case seed")
    parser.add_argument("--quick", action="store_true", help="smaller sample counts for a fast check")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    module_path = f"cases.{args.case}.src.pipeline"
    try:
        module = importlib.import_module(module_path)
    except ImportError as exc:
        logger.error("Failed to import %s: %s", module_path, exc)
        return 1

    if not hasattr(module, "run"):
        logger.error("Pipeline module %s has no run()", module_path)
        return 1

    kwargs = {"quick": args.quick}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    module.run(**kwargs)
    return 0


if __name__ == "__main__":
    sys.exit(main())
