"""Command-line interface.

    cdfloquet figure <fig1|fig2|fig3|fig4> [--out DIR] [--full-scale] [--force]
    cdfloquet run <config.json> [--force]
    cdfloquet agp <model> key=value ... [--csv PATH]

Exit codes: 0 success, 2 usage/config, 3 capacity, 4 convergence, 5 validation.
Set CDFLOQUET_WORKERS to run independent protocol integrations concurrently.
"""

from __future__ import annotations

import argparse
import json
import sys

from .dynamics import ConvergenceError
from .experiments import (
    ExperimentConfig,
    ValidationError,
    run_config,
    run_figure,
    solve_agp_table,
)
from .operators import CapacityError

EXIT_USAGE = 2
EXIT_CAPACITY = 3
EXIT_CONVERGENCE = 4
EXIT_VALIDATION = 5


def _parse_model_args(tokens: list[str]) -> dict:
    out: dict = {}
    for token in tokens:
        if "=" not in token:
            raise ValidationError(f"expected key=value, got {token!r}")
        key, value = token.split("=", 1)
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cdfloquet",
        description="Counterdiabatic and Floquet-engineered driving protocols "
        "for quantum spin systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fig = sub.add_parser("figure", help="run a bundled benchmark figure")
    p_fig.add_argument("name", choices=["fig1", "fig2", "fig3", "fig4"])
    p_fig.add_argument("--out", default=None, help="output directory")
    p_fig.add_argument(
        "--full-scale",
        action="store_true",
        help="fig4 only: engineered drives at L=12, omega=1e4*omega0 "
        "(days of runtime)",
    )
    p_fig.add_argument("--force", action="store_true", help="overwrite outputs")

    p_run = sub.add_parser("run", help="run a JSON sweep config")
    p_run.add_argument("config")
    p_run.add_argument("--force", action="store_true", help="overwrite outputs")

    p_agp = sub.add_parser(
        "agp", help="solve variational coefficients for one model point"
    )
    p_agp.add_argument(
        "model",
        help="model name: two_qubit_xxzz, three_level, ising_uniform, trap_ising",
    )
    p_agp.add_argument(
        "params",
        nargs="*",
        help="key=value pairs: model parameters plus lam=..., ell=..., "
        "optional omega0=...",
    )
    p_agp.add_argument("--csv", default=None, help="also write the table as CSV")

    args = parser.parse_args(argv)
    try:
        if args.command == "figure":
            out = args.out or f"out_{args.name}"
            manifest = run_figure(
                args.name, out, full_scale=args.full_scale, force=args.force
            )
            print(manifest)
        elif args.command == "run":
            with open(args.config) as fh:
                config = ExperimentConfig.from_json(fh.read())
            manifest = run_config(config, force=args.force)
            print(manifest)
        else:
            params = _parse_model_args(args.params)
            try:
                lam = float(params.pop("lam"))
                ell = int(params.pop("ell"))
            except KeyError as exc:
                raise ValidationError(f"missing required parameter {exc}") from exc
            omega0 = params.pop("omega0", None)
            params["model"] = args.model
            table = solve_agp_table(
                params, lam, ell, None if omega0 is None else float(omega0)
            )
            for k, a in enumerate(table["alpha"], start=1):
                print(f"alpha_{k} = {a:.12g}")
            print(f"normalized_action = {table['normalized_action']:.12g}")
            if table["degenerate"]:
                print("degenerate: true")
            for k, b in enumerate(table.get("beta", []), start=1):
                print(f"beta_{k} = {b:.12g}")
            if args.csv:
                with open(args.csv, "w") as fh:
                    fh.write("lambda,ell,k,alpha_k,normalized_action\n")
                    for k, a in enumerate(table["alpha"], start=1):
                        fh.write(
                            f"{lam:.17g},{ell},{k},{a:.17g},"
                            f"{table['normalized_action']:.17g}\n"
                        )
    except ValidationError as exc:
        print(f"error (validation): {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CapacityError as exc:
        print(f"error (capacity): {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ConvergenceError as exc:
        print(f"error (convergence): {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
